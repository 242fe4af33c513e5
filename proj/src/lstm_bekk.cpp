#include "mvcov/lstm_bekk.hpp"

#include <cmath>
#include <string>

#include "mvcov/errors.hpp"
#include "mvcov/rng.hpp"

namespace mvcov {

void LstmBekkParams::validate() const {
    if (a < 0.0 || b < 0.0 || a + b >= 1.0)
        throw ArgumentError("LSTM-BEKK requires a,b >= 0 and a+b < 1");
    for (int i = 0; i < C.dim(); ++i)
        if (!(C.at(i, i) >= 1e-6)) throw ArgumentError("diag(C) must be >= 1e-6");
    if (lstm.n != C.dim()) throw ArgumentError("LSTM input size must equal the asset count");
}

LstmBekkStep lstm_bekk_predict(const LstmBekkParams& params, LstmBekkCarry& carry,
                               DropoutMode dropout, Rng* rng, LstmBekkStepCache* cache) {
    LstmBekkStep step;
    Vec ctilde;
    try {
        ctilde = lstm_step(params.lstm, carry.state, carry.r_prev, dropout, rng,
                           cache ? &cache->lstm : nullptr);
    } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (while producing the dynamic component)");
    }
    step.Ct = build_ct(ctilde, params.lstm.beta);
    step.H = params.C.outer();
    add_scaled(step.H, step.Ct.outer(), 1.0);
    add_scaled(step.H, outer_product(carry.r_prev), params.a);
    add_scaled(step.H, carry.H_prev, params.b);
    if (cache) {
        cache->ctilde = std::move(ctilde);
        cache->Ct = step.Ct;
        cache->x = carry.r_prev;
    }
    return step;
}

void lstm_bekk_advance(LstmBekkCarry& carry, Mat H_t, Vec r_t) {
    carry.H_prev = std::move(H_t);
    carry.r_prev = std::move(r_t);
}

CovPath lstm_bekk_filter_span(const LstmBekkParams& params, const ReturnsPanel& panel,
                              int start, int end, LstmBekkCarry& carry,
                              DropoutMode dropout, Rng* rng,
                              std::vector<LstmBekkStepCache>* caches) {
    CovPath path;
    path.H.reserve(end - start);
    if (caches) caches->resize(end - start);
    for (int t = start; t < end; ++t) {
        LstmBekkStepCache* cache = caches ? &(*caches)[t - start] : nullptr;
        LstmBekkStep step;
        try {
            step = lstm_bekk_predict(params, carry, dropout, rng, cache);
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + " at time index " + std::to_string(t));
        }
        lstm_bekk_advance(carry, step.H, panel.row(t));
        path.H.emplace_back(std::move(step.H));
    }
    return path;
}

CovPath lstm_bekk_filter(const LstmBekkParams& params, const ReturnsPanel& panel,
                         const SPDMatrix& h0) {
    params.validate();
    cholesky(h0.values());
    LstmBekkCarry carry{h0.values(), panel.row(0),
                        LstmState::zeros(params.lstm.n, params.lstm.num_layers())};
    return lstm_bekk_filter_span(params, panel, 1, panel.T(), carry);
}

SPDMatrix forecast_one_step(const LstmBekkParams& params, LstmBekkCarry& carry, const Vec& r_t) {
    LstmBekkStep step = lstm_bekk_predict(params, carry);
    lstm_bekk_advance(carry, step.H, r_t);
    return SPDMatrix(carry.H_prev);
}

LstmBekkCarry initial_lstm_bekk_carry(const LstmBekkParams& params, const ReturnsPanel& panel) {
    return LstmBekkCarry{panel.train_covariance(), panel.row(0),
                         LstmState::zeros(params.lstm.n, params.lstm.num_layers())};
}

ReturnsPanel simulate_lstm_bekk(const LstmBekkParams& params, int T, std::uint64_t seed) {
    params.validate();
    if (T < 10) throw ArgumentError("simulate_lstm_bekk: T must be >= 10");
    const int n = params.C.dim();
    Rng rng(seed);

    ReturnsPanel panel;
    panel.values = Mat(T, n);
    for (int j = 0; j < n; ++j) panel.assets.push_back("asset" + std::to_string(j + 1));

    Mat H0 = params.C.outer();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) H0(i, j) /= (1.0 - params.a - params.b);

    LstmBekkCarry carry{H0, Vec(n, 0.0), LstmState::zeros(n, params.lstm.num_layers())};
    for (int t = 0; t < T; ++t) {
        Mat H = t == 0 ? H0 : Mat();
        if (t > 0) {
            LstmBekkStep step = lstm_bekk_predict(params, carry);
            H = std::move(step.H);
        }
        const LowerTriangular L = cholesky(H);
        Vec eps(n);
        for (int j = 0; j < n; ++j) eps[j] = rng.normal();
        Vec r(n, 0.0);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k <= i; ++k) r[i] += L.at(i, k) * eps[k];
        for (int j = 0; j < n; ++j) panel.values(t, j) = r[j];
        lstm_bekk_advance(carry, std::move(H), std::move(r));
    }

    panel.dates.reserve(T);
    for (int t = 0; t < T; ++t) panel.dates.push_back(synthetic_date(t));
    set_default_splits(panel);
    demean_training_window(panel);
    panel.validate();
    return panel;
}

TheoremBoundReport check_theorem_bound(const LstmBekkParams& params, int n_paths, int k,
                                       std::uint64_t seed) {
    params.validate();
    if (n_paths < 1 || k < 1) throw ArgumentError("check_theorem_bound: n_paths and k must be >= 1");
    const int n = params.C.dim();
    const double persistence = params.a + params.b;

    Mat H0 = params.C.outer();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) H0(i, j) /= (1.0 - persistence);

    const Mat CC = params.C.outer();
    Mat mean_Hk(n, n);
    double M = 0.0;

    for (int p = 0; p < n_paths; ++p) {
        Rng rng(Rng::derive(seed, p));
        LstmBekkCarry carry{H0, Vec(n, 0.0), LstmState::zeros(n, params.lstm.num_layers())};
        Mat H_k;
        for (int t = 1; t <= k; ++t) {
            LstmBekkStep step = lstm_bekk_predict(params, carry);
            Mat intercept = CC;
            add_scaled(intercept, step.Ct.outer(), 1.0);
            M = std::max(M, frobenius_norm(intercept));
            const LowerTriangular L = cholesky(step.H);
            Vec eps(n);
            for (int j = 0; j < n; ++j) eps[j] = rng.normal();
            Vec r(n, 0.0);
            for (int i = 0; i < n; ++i)
                for (int kk = 0; kk <= i; ++kk) r[i] += L.at(i, kk) * eps[kk];
            H_k = step.H;
            lstm_bekk_advance(carry, std::move(step.H), std::move(r));
        }
        add_scaled(mean_Hk, H_k, 1.0 / n_paths);
    }

    TheoremBoundReport report;
    report.k = k;
    report.n_paths = n_paths;
    report.M = M;
    report.h0_norm = frobenius_norm(H0);
    report.lhs = frobenius_norm(mean_Hk);
    const double pk = std::pow(persistence, k);
    report.rhs = (1.0 - pk) / (1.0 - persistence) * M + pk * report.h0_norm;
    return report;
}

}  // namespace mvcov
