#pragma once

#include <memory>
#include <vector>

#include "mvcov/data.hpp"
#include "mvcov/linalg.hpp"

namespace mvcov {

// H_t = C C' + a r_{t-1} r_{t-1}' + b H_{t-1}
struct ScalarBekkParams {
    LowerTriangular C;
    double a = 0.0;
    double b = 0.0;

    void validate() const;  // a,b >= 0, a+b < 1, diag(C) > 0
    Mat unconditional_covariance() const;  // CC' / (1 - a - b)
};

// h_t = omega + alpha r_{t-1}^2 + beta h_{t-1}
struct UnivariateGarchParams {
    double omega = 0.0;
    double alpha = 0.0;
    double beta = 0.0;

    void validate() const;
    double unconditional_variance() const { return omega / (1.0 - alpha - beta); }
};

struct DccParams {
    std::vector<UnivariateGarchParams> garch;  // one per asset
    double a = 0.0;
    double b = 0.0;
    Mat S;  // unconditional correlation target, unit diagonal

    int n() const { return static_cast<int>(garch.size()); }
    void validate() const;
};

// Filtered covariance sequence. H[i] is the conditional covariance of the
// i-th filtered observation.
struct CovPath {
    std::vector<SPDMatrix> H;

    int length() const { return static_cast<int>(H.size()); }
};

// Streaming carry: everything needed to produce the next H given the next
// observed return.
struct BekkCarry {
    Mat H_prev;
    Vec r_prev;
};

struct DccCarry {
    Vec h_prev;   // univariate conditional variances at the previous step
    Mat Q_prev;
    Vec r_prev;
};

// One recursion step; returns H for the current observation and advances
// the carry once the realized return r_t is observed.
Mat bekk_predict(const ScalarBekkParams& params, const BekkCarry& carry);
void bekk_advance(BekkCarry& carry, Mat H_t, Vec r_t);

// Filters rows [start, end) of the panel. The carry must describe the state
// just before row `start`. On return the carry describes the state after
// row end-1.
CovPath bekk_filter_span(const ScalarBekkParams& params, const ReturnsPanel& panel,
                         int start, int end, BekkCarry& carry);

// Whole-panel convenience: H for rows 1..T-1 with H_0 = h0 and r_0 as the
// first lagged return.
CovPath bekk_filter(const ScalarBekkParams& params, const ReturnsPanel& panel,
                    const SPDMatrix& h0);

// Univariate GARCH variance path: h[i] for returns[i], i = 1..m-1, with
// h_0 given and returns[0] the first lagged return.
Vec garch_filter(const UnivariateGarchParams& params, const Vec& returns, double h0);

struct DccStep {
    Mat H;  // D R D
    Mat Q;
    Vec h;  // univariate variances at this step
};
DccStep dcc_predict(const DccParams& params, const DccCarry& carry);
void dcc_advance(DccCarry& carry, const DccStep& step, Vec r_t);

CovPath dcc_filter_span(const DccParams& params, const ReturnsPanel& panel,
                        int start, int end, DccCarry& carry);

// Whole-panel convenience with h_0 and Q_0 taken from `init`.
CovPath dcc_filter(const DccParams& params, const ReturnsPanel& panel, DccCarry init);

// S = (1/T) sum z_t z_t', optionally rescaled to unit diagonal
// (correlation targeting, the default).
Mat estimate_S(const Mat& standardized, bool rescale_to_correlation = true);

// Initial conditions used throughout: h_{i,0} = training variance of asset i,
// Q_0 = S, H_0 = training covariance.
BekkCarry initial_bekk_carry(const ReturnsPanel& panel);
DccCarry initial_dcc_carry(const ReturnsPanel& panel, const DccParams& params);

}  // namespace mvcov
