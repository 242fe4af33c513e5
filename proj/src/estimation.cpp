#include "mvcov/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <limits>
#include <string>

#include "mvcov/errors.hpp"
#include "mvcov/rng.hpp"

namespace mvcov {

namespace {

constexpr double kLn2Pi = 1.8378770664093454835606594728112;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double y) { return std::log(y / (1.0 - y)); }

// L^{-T} L^{-1} without forming L^{-1} explicitly per entry: solve for the
// columns of the inverse.
Mat spd_inverse_from_chol(const LowerTriangular& L) {
    const int n = L.dim();
    Mat inv(n, n);
    Vec e(n);
    for (int j = 0; j < n; ++j) {
        std::fill(e.begin(), e.end(), 0.0);
        e[j] = 1.0;
        Vec x = chol_solve(L, e);
        for (int i = 0; i < n; ++i) inv(i, j) = x[i];
    }
    // enforce exact symmetry against roundoff
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < i; ++j) {
            const double v = 0.5 * (inv(i, j) + inv(j, i));
            inv(i, j) = v;
            inv(j, i) = v;
        }
    return inv;
}

struct StepEval {
    double loss;
    LowerTriangular L;  // factor of the (possibly jittered) H
    double jitter_rel;  // jitter relative to tr(H)/n
    Mat H_used;         // H after jitter
};

StepEval eval_step(const Mat& H, const Vec& r) {
    const int n = H.rows();
    double tr = 0.0;
    for (int i = 0; i < n; ++i) tr += H(i, i);
    const double base = 1e-8 * tr / n;
    for (int attempt = 0; attempt < 4; ++attempt) {
        const double jit = attempt == 0 ? 0.0 : base * std::pow(10.0, attempt - 1);
        Mat Hj = H;
        for (int i = 0; i < n; ++i) Hj(i, i) += jit;
        try {
            LowerTriangular L = cholesky(Hj);
            const LogdetQuad lq = logdet_and_quadform(L, r);
            StepEval out{0.5 * (n * kLn2Pi + lq.logdet + lq.quad), std::move(L),
                         attempt == 0 ? 0.0 : std::pow(10.0, attempt - 1) * 1e-8, std::move(Hj)};
            if (!std::isfinite(out.loss)) throw NumericError("non-finite likelihood term");
            return out;
        } catch (const DecompositionError&) {
            if (attempt == 3) throw;
        }
    }
    throw NumericError("unreachable");
}

// dNLL/dH for one term: 0.5 (H^{-1} - u u') with u = H^{-1} r.
Mat loss_dH(const StepEval& ev, const Vec& r) {
    const int n = ev.L.dim();
    Mat G = spd_inverse_from_chol(ev.L);
    const Vec u = chol_solve(ev.L, r);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) G(i, j) = 0.5 * (G(i, j) - u[i] * u[j]);
    return G;
}

// packed gradient of <A, L L'> with respect to L, i.e. 2 tril(A L)
void accumulate_outer_grad(const Mat& A, const LowerTriangular& L, Vec& g_packed) {
    const int n = L.dim();
    std::size_t k = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) {
            double s = 0.0;
            for (int kk = j; kk < n; ++kk) s += A(i, kk) * L.at(kk, j);
            g_packed[k++] += 2.0 * s;
        }
}

struct NllGrad {
    double nll_sum = 0.0;
    Vec grad;
    double max_jitter_rel = 0.0;
};

double clip_gradient(Vec& g, double clip_norm) {
    double norm = 0.0;
    for (double v : g) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > clip_norm && norm > 0.0) {
        const double scale = clip_norm / norm;
        for (double& v : g) v *= scale;
    }
    return norm;
}

// ---------------------------------------------------------------------------
// Scalar BEKK
// ---------------------------------------------------------------------------

// free layout: [p, q, cfree (n(n+1)/2)]
ScalarBekkParams bekk_from_free(const Vec& th, int n) {
    ScalarBekkParams params;
    const AbPair ab = constrain_ab(th[0], th[1]);
    params.a = ab.a;
    params.b = ab.b;
    params.C = constrain_chol(Vec(th.begin() + 2, th.end()));
    (void)n;
    return params;
}

Vec bekk_to_free(const ScalarBekkParams& params) {
    Vec th(2 + params.C.packed_size());
    free_from_ab(params.a, params.b, th[0], th[1]);
    const Vec cfree = free_from_chol(params.C);
    std::copy(cfree.begin(), cfree.end(), th.begin() + 2);
    return th;
}

double bekk_span_nll(const ScalarBekkParams& params, const ReturnsPanel& panel,
                     int start, int end, BekkCarry& carry, double* max_jitter) {
    double sum = 0.0;
    for (int t = start; t < end; ++t) {
        Mat H = bekk_predict(params, carry);
        const Vec r = panel.row(t);
        StepEval ev;
        try {
            ev = eval_step(H, r);
        } catch (const DecompositionError& e) {
            throw DecompositionError(e.pivot, std::string(e.what()) + " at time index " +
                                                  std::to_string(t));
        }
        sum += ev.loss;
        if (max_jitter) *max_jitter = std::max(*max_jitter, ev.jitter_rel);
        bekk_advance(carry, std::move(H), r);
    }
    return sum;
}

NllGrad bekk_nll_grad(const Vec& th, const ReturnsPanel& panel, int start, int end,
                      const BekkCarry& carry0) {
    const int n = panel.n();
    const int m = n * (n + 1) / 2;
    const ScalarBekkParams params = bekk_from_free(th, n);
    const int steps = end - start;

    NllGrad out;
    out.grad.assign(th.size(), 0.0);

    // forward: keep the H path and per-step loss adjoints
    std::vector<Mat> Hs(steps);
    std::vector<Mat> Gs(steps);
    std::vector<Vec> xs(steps);  // lagged return entering step t
    BekkCarry carry = carry0;
    const Mat H0 = carry0.H_prev;
    for (int i = 0; i < steps; ++i) {
        xs[i] = carry.r_prev;
        Mat H = bekk_predict(params, carry);
        const Vec r = panel.row(start + i);
        StepEval ev;
        try {
            ev = eval_step(H, r);
        } catch (const DecompositionError& e) {
            throw DecompositionError(e.pivot, std::string(e.what()) + " at time index " +
                                                  std::to_string(start + i));
        }
        out.nll_sum += ev.loss;
        out.max_jitter_rel = std::max(out.max_jitter_rel, ev.jitter_rel);
        Gs[i] = loss_dH(ev, r);
        Hs[i] = H;
        bekk_advance(carry, std::move(H), r);
    }

    // backward through H_t = CC' + a x x' + b H_{t-1}
    double ga = 0.0, gb = 0.0;
    Vec gC(m, 0.0);
    Mat A(n, n);
    for (int i = steps - 1; i >= 0; --i) {
        if (i == steps - 1)
            A = Gs[i];
        else {
            // A = G_i + b * A_{next}
            for (int r_ = 0; r_ < n; ++r_)
                for (int c_ = 0; c_ < n; ++c_) A(r_, c_) = Gs[i](r_, c_) + params.b * A(r_, c_);
        }
        ga += frobenius_inner(A, outer_product(xs[i]));
        gb += frobenius_inner(A, i == 0 ? H0 : Hs[i - 1]);
        accumulate_outer_grad(A, params.C, gC);
    }

    constrain_ab_backward(th[0], th[1], ga, gb, out.grad[0], out.grad[1]);
    const Vec gCfree = constrain_chol_backward(Vec(th.begin() + 2, th.end()), gC);
    std::copy(gCfree.begin(), gCfree.end(), out.grad.begin() + 2);
    return out;
}

// ---------------------------------------------------------------------------
// LSTM-BEKK
// ---------------------------------------------------------------------------

// free layout: [p, q, cfree(m), lstm flat (beta last)]
LstmBekkParams lstm_bekk_from_free(const Vec& th, int n, int layers) {
    LstmBekkParams params;
    const AbPair ab = constrain_ab(th[0], th[1]);
    params.a = ab.a;
    params.b = ab.b;
    const int m = n * (n + 1) / 2;
    params.C = constrain_chol(Vec(th.begin() + 2, th.begin() + 2 + m));
    params.lstm = LstmWeights::zeros(n, layers);
    params.lstm.unflatten_from(th.data() + 2 + m);
    return params;
}

Vec lstm_bekk_to_free(const LstmBekkParams& params) {
    const int m = params.C.dim() * (params.C.dim() + 1) / 2;
    Vec th(2 + m + params.lstm.param_count());
    free_from_ab(params.a, params.b, th[0], th[1]);
    const Vec cfree = free_from_chol(params.C);
    std::copy(cfree.begin(), cfree.end(), th.begin() + 2);
    params.lstm.flatten_into(th.data() + 2 + m);
    return th;
}

double lstm_bekk_span_nll(const LstmBekkParams& params, const ReturnsPanel& panel,
                          int start, int end, LstmBekkCarry& carry, double* max_jitter,
                          DropoutMode dropout = DropoutMode::eval(), Rng* rng = nullptr) {
    double sum = 0.0;
    for (int t = start; t < end; ++t) {
        LstmBekkStep step = lstm_bekk_predict(params, carry, dropout, rng);
        const Vec r = panel.row(t);
        StepEval ev;
        try {
            ev = eval_step(step.H, r);
        } catch (const DecompositionError& e) {
            throw DecompositionError(e.pivot, std::string(e.what()) + " at time index " +
                                                  std::to_string(t));
        }
        sum += ev.loss;
        if (max_jitter) *max_jitter = std::max(*max_jitter, ev.jitter_rel);
        lstm_bekk_advance(carry, std::move(step.H), r);
    }
    return sum;
}

NllGrad lstm_bekk_nll_grad(const Vec& th, const ReturnsPanel& panel, int start, int end,
                           const LstmBekkCarry& carry0, int layers, DropoutMode dropout,
                           Rng* rng) {
    const int n = panel.n();
    const int m = n * (n + 1) / 2;
    const LstmBekkParams params = lstm_bekk_from_free(th, n, layers);
    const int steps = end - start;

    NllGrad out;
    out.grad.assign(th.size(), 0.0);

    std::vector<Mat> Hs(steps);
    std::vector<Mat> Gs(steps);
    std::vector<LstmBekkStepCache> caches(steps);
    LstmBekkCarry carry = carry0;
    const Mat H0 = carry0.H_prev;
    for (int i = 0; i < steps; ++i) {
        LstmBekkStep step = lstm_bekk_predict(params, carry, dropout, rng, &caches[i]);
        const Vec r = panel.row(start + i);
        StepEval ev;
        try {
            ev = eval_step(step.H, r);
        } catch (const DecompositionError& e) {
            throw DecompositionError(e.pivot, std::string(e.what()) + " at time index " +
                                                  std::to_string(start + i));
        }
        out.nll_sum += ev.loss;
        out.max_jitter_rel = std::max(out.max_jitter_rel, ev.jitter_rel);
        Gs[i] = loss_dH(ev, r);
        Hs[i] = step.H;
        lstm_bekk_advance(carry, std::move(step.H), r);
    }

    double ga = 0.0, gb = 0.0, gbeta = 0.0;
    Vec gC(m, 0.0);
    LstmWeights lstm_grad = LstmWeights::zeros(n, layers);
    lstm_grad.beta = 0.0;
    std::vector<Vec> dh(layers, Vec(n, 0.0)), dc(layers, Vec(n, 0.0));

    Mat A(n, n);
    Vec dCt(m);
    for (int i = steps - 1; i >= 0; --i) {
        if (i == steps - 1)
            A = Gs[i];
        else
            for (int r_ = 0; r_ < n; ++r_)
                for (int c_ = 0; c_ < n; ++c_) A(r_, c_) = Gs[i](r_, c_) + params.b * A(r_, c_);

        ga += frobenius_inner(A, outer_product(caches[i].x));
        gb += frobenius_inner(A, i == 0 ? H0 : Hs[i - 1]);
        accumulate_outer_grad(A, params.C, gC);

        std::fill(dCt.begin(), dCt.end(), 0.0);
        accumulate_outer_grad(A, caches[i].Ct, dCt);
        const Vec dctilde = build_ct_backward(caches[i].ctilde, params.lstm.beta, dCt, gbeta);
        lstm_backward_step(params.lstm, caches[i].lstm, dctilde, dh, dc, lstm_grad);
    }

    constrain_ab_backward(th[0], th[1], ga, gb, out.grad[0], out.grad[1]);
    const Vec gCfree =
        constrain_chol_backward(Vec(th.begin() + 2, th.begin() + 2 + m), gC);
    std::copy(gCfree.begin(), gCfree.end(), out.grad.begin() + 2);
    lstm_grad.beta = gbeta;
    lstm_grad.flatten_into(out.grad.data() + 2 + m);
    return out;
}

// ---------------------------------------------------------------------------
// Univariate GARCH (DCC step 1)
// ---------------------------------------------------------------------------

// free layout: [w, p, q] with omega = softplus(w) + 1e-8, (alpha, beta)
// through the persistence split.
UnivariateGarchParams garch_from_free(const Vec& th) {
    UnivariateGarchParams g;
    g.omega = softplus(th[0]) + 1e-8;
    const AbPair ab = constrain_ab(th[1], th[2]);
    g.alpha = ab.a;
    g.beta = ab.b;
    return g;
}

Vec garch_to_free(const UnivariateGarchParams& g) {
    Vec th(3);
    th[0] = softplus_inv(g.omega - 1e-8);
    free_from_ab(g.alpha, g.beta, th[1], th[2]);
    return th;
}

double garch_span_nll(const UnivariateGarchParams& g, const Mat& values, int col,
                      int start, int end, double& h_carry, double& r_carry) {
    double sum = 0.0;
    for (int t = start; t < end; ++t) {
        const double h = g.omega + g.alpha * r_carry * r_carry + g.beta * h_carry;
        const double r = values(t, col);
        sum += 0.5 * (kLn2Pi + std::log(h) + r * r / h);
        h_carry = h;
        r_carry = r;
    }
    return sum;
}

NllGrad garch_nll_grad(const Vec& th, const Mat& values, int col, int start, int end,
                       double h0, double r0) {
    const UnivariateGarchParams g = garch_from_free(th);
    const int steps = end - start;
    NllGrad out;
    out.grad.assign(3, 0.0);

    Vec h(steps), x(steps);  // x: lagged return entering each step
    double h_carry = h0, r_carry = r0;
    for (int i = 0; i < steps; ++i) {
        x[i] = r_carry;
        const double hv = g.omega + g.alpha * r_carry * r_carry + g.beta * h_carry;
        const double r = values(start + i, col);
        if (!(hv > 0.0) || !std::isfinite(hv))
            throw NumericError("GARCH variance became non-positive at step " +
                               std::to_string(start + i));
        out.nll_sum += 0.5 * (kLn2Pi + std::log(hv) + r * r / hv);
        h[i] = hv;
        h_carry = hv;
        r_carry = r;
    }

    double gw = 0.0, galpha = 0.0, gbeta = 0.0;
    double hbar = 0.0;
    for (int i = steps - 1; i >= 0; --i) {
        const double r = values(start + i, col);
        const double dl_dh = 0.5 * (1.0 / h[i] - r * r / (h[i] * h[i]));
        hbar = dl_dh + g.beta * hbar;
        gw += hbar;
        galpha += hbar * x[i] * x[i];
        gbeta += hbar * (i == 0 ? h0 : h[i - 1]);
    }

    const double sw = sigmoid(th[0]);  // d softplus / dw
    out.grad[0] = gw * sw;
    constrain_ab_backward(th[1], th[2], galpha, gbeta, out.grad[1], out.grad[2]);
    return out;
}

// ---------------------------------------------------------------------------
// DCC step 2: (a, b) with D_t frozen
// ---------------------------------------------------------------------------

struct DccFrozen {
    Mat h;    // T x n univariate variances (h[0] = training variances)
    Mat z;    // T x n standardized residuals
    Mat S;    // correlation target from the training window
};

DccFrozen dcc_frozen_inputs(const std::vector<UnivariateGarchParams>& garch,
                            const ReturnsPanel& panel) {
    const int n = panel.n();
    const int T = panel.T();
    DccFrozen f;
    f.h = Mat(T, n);
    f.z = Mat(T, n);
    const Vec v0 = panel.train_variances();
    for (int j = 0; j < n; ++j) {
        f.h(0, j) = v0[j];
        for (int t = 1; t < T; ++t)
            f.h(t, j) = garch[j].omega + garch[j].alpha * panel.values(t - 1, j) * panel.values(t - 1, j) +
                        garch[j].beta * f.h(t - 1, j);
        for (int t = 0; t < T; ++t) f.z(t, j) = panel.values(t, j) / std::sqrt(f.h(t, j));
    }
    Mat z_train(panel.train_end, n);
    for (int t = 0; t < panel.train_end; ++t)
        for (int j = 0; j < n; ++j) z_train(t, j) = f.z(t, j);
    f.S = estimate_S(z_train, /*rescale_to_correlation=*/true);
    return f;
}

// adjoint of R = diag(Q)^{-1/2} Q diag(Q)^{-1/2}
void correlation_normalize_backward(const Mat& Q, const Mat& Rbar, Mat& Qbar) {
    const int n = Q.rows();
    Vec s(n);
    for (int i = 0; i < n; ++i) s[i] = std::sqrt(Q(i, i));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) Qbar(i, j) += Rbar(i, j) / (s[i] * s[j]);
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) {
            const double Rij = Q(i, j) / (s[i] * s[j]);
            const double Rji = Q(j, i) / (s[j] * s[i]);
            acc += Rbar(i, j) * Rij + Rbar(j, i) * Rji;
        }
        Qbar(i, i) -= acc / (2.0 * Q(i, i));
    }
}

NllGrad dcc_step2_nll_grad(const Vec& th, const ReturnsPanel& panel, const DccFrozen& f,
                           int start, int end) {
    const int n = panel.n();
    const AbPair ab = constrain_ab(th[0], th[1]);
    const int steps = end - start;

    NllGrad out;
    out.grad.assign(2, 0.0);

    std::vector<Mat> Qs(steps);
    std::vector<Mat> Gs(steps);  // dNLL/dH
    Mat Q = f.S;                 // Q_0 = S
    for (int i = 0; i < steps; ++i) {
        const int t = start + i;
        Mat Qn(n, n);
        for (int r_ = 0; r_ < n; ++r_)
            for (int c_ = 0; c_ < n; ++c_)
                Qn(r_, c_) = (1.0 - ab.a - ab.b) * f.S(r_, c_) +
                             ab.a * f.z(t - 1, r_) * f.z(t - 1, c_) + ab.b * Q(r_, c_);
        Mat H(n, n);
        for (int r_ = 0; r_ < n; ++r_) {
            const double di = std::sqrt(f.h(t, r_)) / std::sqrt(Qn(r_, r_));
            for (int c_ = 0; c_ < n; ++c_) {
                const double dj = std::sqrt(f.h(t, c_)) / std::sqrt(Qn(c_, c_));
                H(r_, c_) = di * dj * Qn(r_, c_);
            }
        }
        const Vec r = panel.row(t);
        StepEval ev;
        try {
            ev = eval_step(H, r);
        } catch (const DecompositionError& e) {
            throw DecompositionError(e.pivot, std::string(e.what()) + " at time index " +
                                                  std::to_string(t));
        }
        out.nll_sum += ev.loss;
        out.max_jitter_rel = std::max(out.max_jitter_rel, ev.jitter_rel);
        Gs[i] = loss_dH(ev, r);
        Qs[i] = Qn;
        Q = std::move(Qn);
    }

    double ga = 0.0, gb = 0.0;
    Mat Qbar(n, n);
    Mat Rbar(n, n);
    for (int i = steps - 1; i >= 0; --i) {
        const int t = start + i;
        // H = D R D with D frozen: Rbar_ij = d_i d_j G_ij
        for (int r_ = 0; r_ < n; ++r_)
            for (int c_ = 0; c_ < n; ++c_)
                Rbar(r_, c_) = std::sqrt(f.h(t, r_)) * std::sqrt(f.h(t, c_)) * Gs[i](r_, c_);
        if (i == steps - 1) Qbar = Mat(n, n);
        correlation_normalize_backward(Qs[i], Rbar, Qbar);
        const Mat& Qprev = i == 0 ? f.S : Qs[i - 1];
        for (int r_ = 0; r_ < n; ++r_)
            for (int c_ = 0; c_ < n; ++c_) {
                const double q = Qbar(r_, c_);
                ga += q * (f.z(t - 1, r_) * f.z(t - 1, c_) - f.S(r_, c_));
                gb += q * (Qprev(r_, c_) - f.S(r_, c_));
            }
        // propagate to Q_{t-1}
        if (i > 0)
            for (int r_ = 0; r_ < n; ++r_)
                for (int c_ = 0; c_ < n; ++c_) Qbar(r_, c_) *= ab.b;
    }

    constrain_ab_backward(th[0], th[1], ga, gb, out.grad[0], out.grad[1]);
    return out;
}

double dcc_span_nll(const DccParams& params, const ReturnsPanel& panel, int start, int end,
                    DccCarry& carry, double* max_jitter) {
    double sum = 0.0;
    for (int t = start; t < end; ++t) {
        DccStep step = dcc_predict(params, carry);
        const Vec r = panel.row(t);
        StepEval ev;
        try {
            ev = eval_step(step.H, r);
        } catch (const DecompositionError& e) {
            throw DecompositionError(e.pivot, std::string(e.what()) + " at time index " +
                                                  std::to_string(t));
        }
        sum += ev.loss;
        if (max_jitter) *max_jitter = std::max(*max_jitter, ev.jitter_rel);
        dcc_advance(carry, step, r);
    }
    return sum;
}

// ---------------------------------------------------------------------------
// RMSprop driver
// ---------------------------------------------------------------------------

struct SgdProblem {
    Vec theta0;
    std::vector<bool> frozen;  // empty means nothing frozen
    std::function<NllGrad(const Vec&, int epoch)> train_grad;
    std::function<double(const Vec&)> val_avg_nll;
    int train_obs = 0;
    const char* tag = "";
};

struct SgdOutcome {
    Vec best_theta;
    double best_train = 0.0;
    double best_train_sum = 0.0;
    double best_val = 0.0;
    int best_epoch = 0;
    int epochs_run = 0;
    std::vector<EpochRecord> history;
    bool jitter_warning = false;
};

SgdOutcome run_rmsprop(const SgdProblem& prob, const TrainConfig& cfg) {
    Vec theta = prob.theta0;
    Vec msq(theta.size(), 0.0);
    double lr = cfg.learning_rate;

    SgdOutcome out;
    out.best_theta = theta;
    out.best_val = std::numeric_limits<double>::infinity();

    double prev_train = std::numeric_limits<double>::quiet_NaN();
    int epochs_since_improve = 0;
    const int halve_after = std::max(1, (cfg.patience + 1) / 2);

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        NllGrad ng;
        try {
            ng = prob.train_grad(theta, epoch);
        } catch (const NumericError& e) {
            throw TrainingError(std::string("training diverged at epoch ") +
                                std::to_string(epoch) + ": " + e.what());
        }
        if (!std::isfinite(ng.nll_sum))
            throw TrainingError("training NLL non-finite at epoch " + std::to_string(epoch));
        const double train_avg = ng.nll_sum / prob.train_obs;

        if (!prob.frozen.empty())
            for (std::size_t i = 0; i < ng.grad.size(); ++i)
                if (prob.frozen[i]) ng.grad[i] = 0.0;
        const double grad_norm = clip_gradient(ng.grad, cfg.clip_norm);

        for (std::size_t i = 0; i < theta.size(); ++i) {
            msq[i] = cfg.rmsprop_decay * msq[i] + (1.0 - cfg.rmsprop_decay) * ng.grad[i] * ng.grad[i];
            theta[i] -= lr * ng.grad[i] / std::sqrt(msq[i] + cfg.epsilon);
        }

        double val_avg;
        try {
            val_avg = prob.val_avg_nll(theta);
        } catch (const NumericError& e) {
            throw TrainingError(std::string("validation pass failed at epoch ") +
                                std::to_string(epoch) + ": " + e.what());
        }

        if (std::getenv("MVCOV_DEBUG_SGD")) {
            const AbPair ab = constrain_ab(theta[0], theta[1]);
            std::fprintf(stderr, "ep=%d a=%.4f b=%.4f train=%.6f val=%.6f gn=%.3f lr=%g\n",
                         epoch, ab.a, ab.b, train_avg, val_avg, grad_norm, lr);
        }
        out.history.push_back({epoch, train_avg, val_avg, grad_norm, lr, ng.max_jitter_rel});
        out.epochs_run = epoch;
        if (ng.max_jitter_rel > 1e-8) out.jitter_warning = true;
        if (cfg.progress)
            (*cfg.progress) << prob.tag << " epoch=" << epoch << " train_nll=" << train_avg
                            << " val_nll=" << val_avg << " grad_norm=" << grad_norm
                            << " lr=" << lr << "\n";

        if (val_avg < out.best_val) {
            out.best_val = val_avg;
            out.best_train = train_avg;
            out.best_train_sum = ng.nll_sum;
            out.best_theta = theta;
            out.best_epoch = epoch;
            epochs_since_improve = 0;
        } else {
            ++epochs_since_improve;
            if (epochs_since_improve % halve_after == 0) lr *= 0.5;
            if (epochs_since_improve >= cfg.patience) break;
        }

        if (std::isfinite(prev_train) && std::abs(train_avg - prev_train) < cfg.convergence_tol)
            break;
        prev_train = train_avg;
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// public surface
// ---------------------------------------------------------------------------

std::string model_kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::scalar_bekk: return "scalar_bekk";
        case ModelKind::dcc: return "dcc";
        case ModelKind::lstm_bekk: return "lstm_bekk";
    }
    return "?";
}

ModelKind model_kind_from_name(const std::string& name) {
    if (name == "scalar_bekk") return ModelKind::scalar_bekk;
    if (name == "dcc") return ModelKind::dcc;
    if (name == "lstm_bekk") return ModelKind::lstm_bekk;
    throw ArgumentError("unknown model kind: " + name);
}

AbPair constrain_ab(double p, double q) {
    // cap s strictly below 1 so a+b < 1 survives floating-point rounding at
    // saturated p
    const double s = std::min(sigmoid(p), 1.0 - 1e-15);
    const double phi = sigmoid(q);
    return {s * phi, s * (1.0 - phi)};
}

void free_from_ab(double a, double b, double& p, double& q) {
    const double s = a + b;
    p = logit(s);
    q = logit(a / s);
}

void constrain_ab_backward(double p, double q, double da, double db, double& dp, double& dq) {
    const double s = sigmoid(p);
    const double phi = sigmoid(q);
    const double ds = da * phi + db * (1.0 - phi);
    const double dphi = (da - db) * s;
    dp = ds * s * (1.0 - s);
    dq = dphi * phi * (1.0 - phi);
}

double softplus(double x) {
    if (x > 30.0) return x;
    return std::log1p(std::exp(x));
}

double softplus_inv(double y) {
    if (y > 30.0) return y;
    return std::log(std::expm1(y));
}

LowerTriangular constrain_chol(const Vec& free_packed, double diag_floor) {
    const int n = LowerTriangular::dim_from_packed_size(free_packed.size());
    LowerTriangular L(n, free_packed);
    for (int i = 0; i < n; ++i) L.at(i, i) = softplus(L.at(i, i)) + diag_floor;
    return L;
}

Vec free_from_chol(const LowerTriangular& L, double diag_floor) {
    Vec out = L.packed();
    for (int i = 0; i < L.dim(); ++i) {
        const std::size_t k = static_cast<std::size_t>(i) * (i + 1) / 2 + i;
        out[k] = softplus_inv(out[k] - diag_floor);
    }
    return out;
}

Vec constrain_chol_backward(const Vec& free_packed, const Vec& dL_packed) {
    const int n = LowerTriangular::dim_from_packed_size(free_packed.size());
    Vec out = dL_packed;
    for (int i = 0; i < n; ++i) {
        const std::size_t k = static_cast<std::size_t>(i) * (i + 1) / 2 + i;
        out[k] *= sigmoid(free_packed[k]);
    }
    return out;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !(rmsprop_decay > 0.0 && rmsprop_decay < 1.0) ||
        !(epsilon > 0.0) || !(clip_norm > 0.0) || max_epochs < 1 || patience < 1 ||
        !(convergence_tol > 0.0))
        throw ConfigError("invalid training configuration");
    if (lstm_layers < 3 || lstm_layers > 5)
        throw ConfigError("lstm_layers must be between 3 and 5");
    if (dropout < 0.0 || dropout > 0.2)
        throw ConfigError("dropout must be between 0 and 0.2");
}

double gaussian_nll_term(Mat& H, const Vec& r, double* jitter_used) {
    StepEval ev = eval_step(H, r);
    H = ev.H_used;
    if (jitter_used) *jitter_used = ev.jitter_rel;
    return ev.loss;
}

double gaussian_nll(const CovPath& path, const ReturnsPanel& panel, int start_row) {
    if (path.length() == 0) throw ArgumentError("gaussian_nll: empty path");
    if (start_row + path.length() > panel.T())
        throw ArgumentError("gaussian_nll: path and panel segment lengths do not match");
    double sum = 0.0;
    for (int i = 0; i < path.length(); ++i) {
        Mat H = path.H[i].values();
        try {
            sum += gaussian_nll_term(H, panel.row(start_row + i));
        } catch (const DecompositionError& e) {
            throw DecompositionError(e.pivot, std::string(e.what()) + " at path index " +
                                                  std::to_string(i));
        }
    }
    return sum / path.length();
}

FitResult fit(ModelKind model, const ReturnsPanel& panel, const TrainConfig& cfg) {
    cfg.validate();
    panel.validate();
    const int n = panel.n();
    const int train_obs = panel.train_end - 1;  // first modeled row is 1
    const int val_obs = panel.val_end - panel.train_end;
    if (train_obs < 2 || val_obs < 1)
        throw ArgumentError("fit: training and validation spans are too short");

    FitResult result;
    result.model = model;

    switch (model) {
        case ModelKind::scalar_bekk: {
            ScalarBekkParams init;
            init.a = cfg.init_a;
            init.b = cfg.init_b;
            Mat target = panel.train_covariance();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) target(i, j) *= (1.0 - init.a - init.b);
            init.C = cholesky(target);

            SgdProblem prob;
            prob.tag = "scalar_bekk";
            prob.theta0 = bekk_to_free(init);
            prob.train_obs = train_obs;
            const BekkCarry carry0 = initial_bekk_carry(panel);
            prob.train_grad = [&](const Vec& th, int) {
                return bekk_nll_grad(th, panel, 1, panel.train_end, carry0);
            };
            prob.val_avg_nll = [&](const Vec& th) {
                const ScalarBekkParams p = bekk_from_free(th, n);
                BekkCarry carry = carry0;
                bekk_span_nll(p, panel, 1, panel.train_end, carry, nullptr);
                return bekk_span_nll(p, panel, panel.train_end, panel.val_end, carry, nullptr) /
                       val_obs;
            };
            SgdOutcome oc = run_rmsprop(prob, cfg);

            result.bekk = std::make_shared<ScalarBekkParams>(bekk_from_free(oc.best_theta, n));
            BekkCarry carry = carry0;
            bekk_span_nll(*result.bekk, panel, 1, panel.val_end, carry, nullptr);
            result.bekk_carry = std::move(carry);
            result.train_nll = oc.best_train;
            result.train_nll_sum = oc.best_train_sum;
            result.val_nll = oc.best_val;
            result.epochs_run = oc.epochs_run;
            result.history = std::move(oc.history);
            result.jitter_warning = oc.jitter_warning;
            break;
        }
        case ModelKind::lstm_bekk: {
            LstmBekkParams init;
            init.a = cfg.init_a;
            init.b = cfg.init_b;
            Mat target = panel.train_covariance();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) target(i, j) *= (1.0 - init.a - init.b);
            init.C = cholesky(target);
            Rng init_rng(Rng::derive(cfg.seed, 0x11));
            init.lstm = cfg.lstm_zero_init ? LstmWeights::zeros(n, cfg.lstm_layers)
                                           : LstmWeights::init(n, cfg.lstm_layers, init_rng);
            if (!cfg.lstm_zero_init) {
                // Start the dynamic branch small: C_t C_t' enters H
                // quadratically, so exact zero is a saddle with no gradient,
                // while full-scale Xavier noise inflates early covariances
                // and is slow to train away. Shrunk-but-nonzero weights keep
                // gradients flowing without the noise floor.
                // Start the dynamic branch small: C_t C_t' enters H
                // quadratically, so exact zero is a saddle with no gradient,
                // while full-scale Xavier noise inflates early covariances
                // and is slow to train away. Shrunk-but-nonzero weights keep
                // gradients flowing without the noise floor.
                Vec flat(init.lstm.param_count());
                init.lstm.flatten_into(flat.data());
                for (double& v : flat) v *= 0.1;
                init.lstm.unflatten_from(flat.data());
                init.lstm.beta = 1.0;
            }

            SgdProblem prob;
            prob.tag = "lstm_bekk";
            prob.theta0 = lstm_bekk_to_free(init);
            prob.train_obs = train_obs;
            if (cfg.lstm_freeze) {
                prob.frozen.assign(prob.theta0.size(), false);
                for (std::size_t i = 2 + n * (n + 1) / 2; i < prob.theta0.size(); ++i)
                    prob.frozen[i] = true;
            }
            const LstmBekkCarry carry0 = initial_lstm_bekk_carry(init, panel);
            Rng dropout_rng(Rng::derive(cfg.seed, 0x22));
            prob.train_grad = [&](const Vec& th, int) {
                return lstm_bekk_nll_grad(th, panel, 1, panel.train_end, carry0, cfg.lstm_layers,
                                          DropoutMode::training(cfg.dropout), &dropout_rng);
            };
            prob.val_avg_nll = [&](const Vec& th) {
                const LstmBekkParams p = lstm_bekk_from_free(th, n, cfg.lstm_layers);
                LstmBekkCarry carry = carry0;
                lstm_bekk_span_nll(p, panel, 1, panel.train_end, carry, nullptr);
                return lstm_bekk_span_nll(p, panel, panel.train_end, panel.val_end, carry,
                                          nullptr) /
                       val_obs;
            };
            SgdOutcome oc = run_rmsprop(prob, cfg);

            result.lstm_bekk = std::make_shared<LstmBekkParams>(
                lstm_bekk_from_free(oc.best_theta, n, cfg.lstm_layers));
            LstmBekkCarry carry = initial_lstm_bekk_carry(*result.lstm_bekk, panel);
            lstm_bekk_span_nll(*result.lstm_bekk, panel, 1, panel.val_end, carry, nullptr);
            result.lstm_carry = std::move(carry);
            result.train_nll = oc.best_train;
            result.train_nll_sum = oc.best_train_sum;
            result.val_nll = oc.best_val;
            result.epochs_run = oc.epochs_run;
            result.history = std::move(oc.history);
            result.jitter_warning = oc.jitter_warning;
            break;
        }
        case ModelKind::dcc: {
            // step 1: independent univariate GARCH fits
            const Vec v0 = panel.train_variances();
            std::vector<UnivariateGarchParams> garch(n);
            bool jw = false;
            for (int j = 0; j < n; ++j) {
                UnivariateGarchParams g;
                g.alpha = 0.10;
                g.beta = 0.80;
                g.omega = v0[j] * (1.0 - g.alpha - g.beta);

                SgdProblem prob;
                prob.tag = "dcc_garch";
                prob.theta0 = garch_to_free(g);
                prob.train_obs = train_obs;
                prob.train_grad = [&, j](const Vec& th, int) {
                    return garch_nll_grad(th, panel.values, j, 1, panel.train_end, v0[j],
                                          panel.values(0, j));
                };
                prob.val_avg_nll = [&, j](const Vec& th) {
                    const UnivariateGarchParams p = garch_from_free(th);
                    double h = v0[j], r = panel.values(0, j);
                    garch_span_nll(p, panel.values, j, 1, panel.train_end, h, r);
                    return garch_span_nll(p, panel.values, j, panel.train_end, panel.val_end, h,
                                          r) /
                           val_obs;
                };
                SgdOutcome oc = run_rmsprop(prob, cfg);
                garch[j] = garch_from_free(oc.best_theta);
                jw = jw || oc.jitter_warning;
            }

            // step 2: correlation dynamics on the full NLL with D_t frozen
            const DccFrozen frozen = dcc_frozen_inputs(garch, panel);
            DccParams init;
            init.garch = garch;
            init.a = 0.05;
            init.b = 0.80;
            init.S = frozen.S;

            SgdProblem prob;
            prob.tag = "dcc";
            Vec th0(2);
            free_from_ab(init.a, init.b, th0[0], th0[1]);
            prob.theta0 = th0;
            prob.train_obs = train_obs;
            prob.train_grad = [&](const Vec& th, int) {
                return dcc_step2_nll_grad(th, panel, frozen, 1, panel.train_end);
            };
            prob.val_avg_nll = [&](const Vec& th) {
                DccParams p = init;
                const AbPair ab = constrain_ab(th[0], th[1]);
                p.a = ab.a;
                p.b = ab.b;
                DccCarry carry = initial_dcc_carry(panel, p);
                dcc_span_nll(p, panel, 1, panel.train_end, carry, nullptr);
                return dcc_span_nll(p, panel, panel.train_end, panel.val_end, carry, nullptr) /
                       val_obs;
            };
            SgdOutcome oc = run_rmsprop(prob, cfg);

            DccParams best = init;
            const AbPair ab = constrain_ab(oc.best_theta[0], oc.best_theta[1]);
            best.a = ab.a;
            best.b = ab.b;
            result.dcc = std::make_shared<DccParams>(best);
            DccCarry carry = initial_dcc_carry(panel, best);
            dcc_span_nll(best, panel, 1, panel.val_end, carry, nullptr);
            result.dcc_carry = std::move(carry);
            result.train_nll = oc.best_train;
            result.train_nll_sum = oc.best_train_sum;
            result.val_nll = oc.best_val;
            result.epochs_run = oc.epochs_run;
            result.history = std::move(oc.history);
            result.jitter_warning = jw || oc.jitter_warning;
            break;
        }
    }
    return result;
}

double grad_check(ModelKind model, const ReturnsPanel& panel, const TrainConfig& cfg,
                  double fd_step) {
    panel.validate();
    const int n = panel.n();
    const int end = panel.train_end;
    Rng rng(Rng::derive(cfg.seed, 0x33));

    std::function<NllGrad(const Vec&)> analytic;
    std::function<double(const Vec&)> value;
    Vec theta;

    if (model == ModelKind::scalar_bekk) {
        ScalarBekkParams init;
        init.a = 0.08;
        init.b = 0.85;
        Mat target = panel.train_covariance();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) target(i, j) *= (1.0 - init.a - init.b);
        init.C = cholesky(target);
        theta = bekk_to_free(init);
        for (double& v : theta) v += 0.05 * rng.normal();
        const BekkCarry carry0 = initial_bekk_carry(panel);
        analytic = [&, carry0](const Vec& th) { return bekk_nll_grad(th, panel, 1, end, carry0); };
        value = [&, carry0](const Vec& th) {
            BekkCarry c = carry0;
            return bekk_span_nll(bekk_from_free(th, n), panel, 1, end, c, nullptr);
        };
    } else if (model == ModelKind::lstm_bekk) {
        LstmBekkParams init;
        init.a = 0.08;
        init.b = 0.85;
        Mat target = panel.train_covariance();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) target(i, j) *= (1.0 - init.a - init.b);
        init.C = cholesky(target);
        Rng wrng(Rng::derive(cfg.seed, 0x44));
        init.lstm = LstmWeights::init(n, cfg.lstm_layers, wrng);
        theta = lstm_bekk_to_free(init);
        for (double& v : theta) v += 0.02 * rng.normal();
        const LstmBekkCarry carry0 = initial_lstm_bekk_carry(init, panel);
        analytic = [&, carry0](const Vec& th) {
            return lstm_bekk_nll_grad(th, panel, 1, end, carry0, cfg.lstm_layers,
                                      DropoutMode::eval(), nullptr);
        };
        value = [&, carry0](const Vec& th) {
            LstmBekkCarry c = carry0;
            return lstm_bekk_span_nll(lstm_bekk_from_free(th, n, cfg.lstm_layers), panel, 1, end,
                                      c, nullptr);
        };
    } else {
        // step-2 gradient with plausible frozen univariate dynamics
        const Vec v0 = panel.train_variances();
        std::vector<UnivariateGarchParams> garch(n);
        for (int j = 0; j < n; ++j) {
            garch[j].alpha = 0.10;
            garch[j].beta = 0.80;
            garch[j].omega = v0[j] * 0.10;
        }
        auto frozen = std::make_shared<DccFrozen>(dcc_frozen_inputs(garch, panel));
        theta = Vec(2);
        free_from_ab(0.05, 0.85, theta[0], theta[1]);
        theta[0] += 0.1 * rng.normal();
        theta[1] += 0.1 * rng.normal();
        analytic = [&, frozen](const Vec& th) {
            return dcc_step2_nll_grad(th, panel, *frozen, 1, end);
        };
        value = [&, frozen](const Vec& th) {
            return dcc_step2_nll_grad(th, panel, *frozen, 1, end).nll_sum;
        };
    }

    const NllGrad ng = analytic(theta);
    double max_rel = 0.0;
    Vec th = theta;
    // Richardson-extrapolated central differences: the h and 2h estimates
    // combine to cancel the h^2 truncation term, so a base step large enough
    // to stay above cancellation noise still resolves small gradients.
    const double h = fd_step;
    auto central = [&](std::size_t i, double step) {
        th[i] = theta[i] + step;
        const double up = value(th);
        th[i] = theta[i] - step;
        const double dn = value(th);
        th[i] = theta[i];
        return (up - dn) / (2.0 * step);
    };
    for (std::size_t i = 0; i < theta.size(); ++i) {
        if (std::abs(ng.grad[i]) <= 1e-8) continue;
        const double fd = (4.0 * central(i, h) - central(i, 2.0 * h)) / 3.0;
        const double rel = std::abs(fd - ng.grad[i]) /
                           std::max(std::abs(ng.grad[i]), std::abs(fd));
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace mvcov
