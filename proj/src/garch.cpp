#include "mvcov/garch.hpp"

#include <cmath>
#include <string>

#include "mvcov/errors.hpp"

namespace mvcov {

void ScalarBekkParams::validate() const {
    if (a < 0.0 || b < 0.0 || a + b >= 1.0)
        throw ArgumentError("scalar BEKK requires a,b >= 0 and a+b < 1");
    for (int i = 0; i < C.dim(); ++i)
        if (!(C.at(i, i) > 0.0)) throw ArgumentError("diag(C) must be > 0");
}

Mat ScalarBekkParams::unconditional_covariance() const {
    Mat m = C.outer();
    const double scale = 1.0 / (1.0 - a - b);
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) m(i, j) *= scale;
    return m;
}

void UnivariateGarchParams::validate() const {
    if (!(omega > 0.0) || alpha < 0.0 || beta < 0.0 || alpha + beta >= 1.0)
        throw ArgumentError("univariate GARCH requires omega > 0, alpha,beta >= 0, alpha+beta < 1");
}

void DccParams::validate() const {
    for (const auto& g : garch) g.validate();
    if (a < 0.0 || b < 0.0 || a + b >= 1.0)
        throw ArgumentError("DCC requires a,b >= 0 and a+b < 1");
    if (S.rows() != n() || S.cols() != n()) throw ArgumentError("DCC target S has wrong dimension");
    for (int i = 0; i < n(); ++i)
        if (std::abs(S(i, i) - 1.0) > 1e-10)
            throw ArgumentError("DCC target S must have unit diagonal");
}

Mat bekk_predict(const ScalarBekkParams& params, const BekkCarry& carry) {
    Mat H = params.C.outer();
    add_scaled(H, outer_product(carry.r_prev), params.a);
    add_scaled(H, carry.H_prev, params.b);
    return H;
}

void bekk_advance(BekkCarry& carry, Mat H_t, Vec r_t) {
    carry.H_prev = std::move(H_t);
    carry.r_prev = std::move(r_t);
}

CovPath bekk_filter_span(const ScalarBekkParams& params, const ReturnsPanel& panel,
                         int start, int end, BekkCarry& carry) {
    CovPath path;
    path.H.reserve(end - start);
    for (int t = start; t < end; ++t) {
        Mat H = bekk_predict(params, carry);
        bekk_advance(carry, H, panel.row(t));
        path.H.emplace_back(std::move(H));
    }
    return path;
}

CovPath bekk_filter(const ScalarBekkParams& params, const ReturnsPanel& panel,
                    const SPDMatrix& h0) {
    params.validate();
    cholesky(h0.values());  // reject non-PD h0 up front
    BekkCarry carry{h0.values(), panel.row(0)};
    return bekk_filter_span(params, panel, 1, panel.T(), carry);
}

Vec garch_filter(const UnivariateGarchParams& params, const Vec& returns, double h0) {
    if (!(h0 > 0.0)) throw ArgumentError("garch_filter: h0 must be > 0");
    Vec h;
    h.reserve(returns.size() > 0 ? returns.size() - 1 : 0);
    double prev = h0;
    for (std::size_t t = 1; t < returns.size(); ++t) {
        prev = params.omega + params.alpha * returns[t - 1] * returns[t - 1] + params.beta * prev;
        h.push_back(prev);
    }
    return h;
}

DccStep dcc_predict(const DccParams& params, const DccCarry& carry) {
    const int n = params.n();
    DccStep step;
    step.h.resize(n);
    Vec z(n);
    for (int i = 0; i < n; ++i) {
        step.h[i] = params.garch[i].omega + params.garch[i].alpha * carry.r_prev[i] * carry.r_prev[i] +
                    params.garch[i].beta * carry.h_prev[i];
        z[i] = carry.r_prev[i] / std::sqrt(carry.h_prev[i]);
        if (std::abs(z[i]) > 1e6)
            throw NumericError("DCC standardized residual exploded: |z[" + std::to_string(i) +
                               "]| = " + std::to_string(z[i]) +
                               " (h = " + std::to_string(carry.h_prev[i]) +
                               ", r = " + std::to_string(carry.r_prev[i]) + ")");
    }
    step.Q = Mat(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            step.Q(i, j) = (1.0 - params.a - params.b) * params.S(i, j) +
                           params.a * z[i] * z[j] + params.b * carry.Q_prev(i, j);
    step.H = Mat(n, n);
    for (int i = 0; i < n; ++i) {
        const double si = std::sqrt(step.h[i]) / std::sqrt(step.Q(i, i));
        for (int j = 0; j < n; ++j) {
            const double sj = std::sqrt(step.h[j]) / std::sqrt(step.Q(j, j));
            step.H(i, j) = si * sj * step.Q(i, j);
        }
    }
    return step;
}

void dcc_advance(DccCarry& carry, const DccStep& step, Vec r_t) {
    carry.h_prev = step.h;
    carry.Q_prev = step.Q;
    carry.r_prev = std::move(r_t);
}

CovPath dcc_filter_span(const DccParams& params, const ReturnsPanel& panel,
                        int start, int end, DccCarry& carry) {
    CovPath path;
    path.H.reserve(end - start);
    for (int t = start; t < end; ++t) {
        DccStep step = dcc_predict(params, carry);
        dcc_advance(carry, step, panel.row(t));
        path.H.emplace_back(std::move(step.H));
    }
    return path;
}

CovPath dcc_filter(const DccParams& params, const ReturnsPanel& panel, DccCarry init) {
    params.validate();
    for (double h : init.h_prev)
        if (!(h > 0.0)) throw ArgumentError("dcc_filter: initial variances must be > 0");
    cholesky(init.Q_prev);
    return dcc_filter_span(params, panel, 1, panel.T(), init);
}

Mat estimate_S(const Mat& standardized, bool rescale_to_correlation) {
    const int T = standardized.rows();
    const int n = standardized.cols();
    if (T < n + 1)
        throw ArgumentError("estimate_S requires T >= n+1 rows of standardized residuals");
    Mat S(n, n);
    for (int t = 0; t < T; ++t)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j <= i; ++j) S(i, j) += standardized(t, i) * standardized(t, j);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) {
            S(i, j) /= T;
            S(j, i) = S(i, j);
        }
    if (rescale_to_correlation) {
        Vec d(n);
        for (int i = 0; i < n; ++i) d[i] = std::sqrt(S(i, i));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) S(i, j) /= d[i] * d[j];
    }
    try {
        cholesky(S);
    } catch (const DecompositionError& e) {
        throw DecompositionError(e.pivot,
                                 "estimate_S: residual covariance is rank-deficient; reduce the "
                                 "asset count or extend the sample");
    }
    return S;
}

BekkCarry initial_bekk_carry(const ReturnsPanel& panel) {
    return BekkCarry{panel.train_covariance(), panel.row(0)};
}

DccCarry initial_dcc_carry(const ReturnsPanel& panel, const DccParams& params) {
    DccCarry carry;
    carry.h_prev = panel.train_variances();
    carry.Q_prev = params.S;
    carry.r_prev = panel.row(0);
    return carry;
}

}  // namespace mvcov
