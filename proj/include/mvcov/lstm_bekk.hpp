#pragma once

#include <cstdint>
#include <vector>

#include "mvcov/data.hpp"
#include "mvcov/garch.hpp"
#include "mvcov/lstm.hpp"

namespace mvcov {

// H_t = C C' + C_t C_t' + a r_{t-1} r_{t-1}' + b H_{t-1}, with C_t produced
// by the LSTM from r_{t-1}.
struct LstmBekkParams {
    LowerTriangular C;
    double a = 0.0;
    double b = 0.0;
    LstmWeights lstm;

    void validate() const;  // a,b >= 0, a+b < 1, diag(C) >= 1e-6
};

struct LstmBekkCarry {
    Mat H_prev;
    Vec r_prev;
    LstmState state;
};

// Per-step record kept when a backward pass will follow.
struct LstmBekkStepCache {
    LstmStepCache lstm;
    Vec ctilde;
    LowerTriangular Ct;
    Vec x;  // the lagged return consumed at this step
};

struct LstmBekkStep {
    Mat H;
    LowerTriangular Ct;
};

// Advances the LSTM state and produces H for the current observation.
LstmBekkStep lstm_bekk_predict(const LstmBekkParams& params, LstmBekkCarry& carry,
                               DropoutMode dropout = DropoutMode::eval(),
                               Rng* rng = nullptr, LstmBekkStepCache* cache = nullptr);
void lstm_bekk_advance(LstmBekkCarry& carry, Mat H_t, Vec r_t);

CovPath lstm_bekk_filter_span(const LstmBekkParams& params, const ReturnsPanel& panel,
                              int start, int end, LstmBekkCarry& carry,
                              DropoutMode dropout = DropoutMode::eval(),
                              Rng* rng = nullptr,
                              std::vector<LstmBekkStepCache>* caches = nullptr);

// Whole-panel convenience: H for rows 1..T-1 with H_0 = h0, r_0 lagged, and
// zero-initialized LSTM state.
CovPath lstm_bekk_filter(const LstmBekkParams& params, const ReturnsPanel& panel,
                         const SPDMatrix& h0);

// One-step-ahead forecast: identical arithmetic to the filter step, applied
// with frozen parameters as the newest return arrives.
SPDMatrix forecast_one_step(const LstmBekkParams& params, LstmBekkCarry& carry, const Vec& r_t);

LstmBekkCarry initial_lstm_bekk_carry(const LstmBekkParams& params, const ReturnsPanel& panel);

// Simulates a return path of length T from the model itself,
// starting at H_0 = CC' / (1 - a - b) and zero LSTM state.
ReturnsPanel simulate_lstm_bekk(const LstmBekkParams& params, int T, std::uint64_t seed);

// Monte-Carlo check of the boundedness result
//   ||E(H_k)||_F <= ((1-(a+b)^k)/(1-a-b)) M + (a+b)^k ||H_0||_F
// with M the empirical sup of ||CC' + C_t C_t'||_F over the simulation.
struct TheoremBoundReport {
    int k = 0;
    double lhs = 0.0;  // ||mean over paths of H_k||_F
    double rhs = 0.0;
    double M = 0.0;
    double h0_norm = 0.0;
    int n_paths = 0;

    bool holds(double mc_tolerance_factor) const { return lhs <= rhs * (1.0 + mc_tolerance_factor); }
};

TheoremBoundReport check_theorem_bound(const LstmBekkParams& params, int n_paths, int k,
                                       std::uint64_t seed);

}  // namespace mvcov
