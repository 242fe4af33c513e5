#pragma once

#include <string>
#include <vector>

#include "mvcov/evaluation.hpp"

namespace mvcov {

// w = H^{-1} 1 / (1' H^{-1} 1); fully invested, short selling allowed.
Vec gmv_weights(const SPDMatrix& H);

double normal_quantile(double p);  // standard normal inverse CDF
double normal_pdf(double x);

// (alpha - I(r < q)) (r - q)
double quantile_loss_term(double r, double q, double alpha);

// -ln((alpha-1)/es) - (r-q)(alpha - I(r<=q))/(alpha*es); requires es < 0.
double joint_al_loss(double r, double q, double es, double alpha);

// Return-series metrics in percent units.
double annualized_return(const Vec& returns);       // mean * 252
double annualized_volatility(const Vec& returns);   // sd(T-1) * sqrt(252)
double max_drawdown(const Vec& returns);            // from V_t = prod(1 + r/100)

struct RiskSeries {
    double alpha = 0.0;
    Vec var_series;  // z_alpha * sigma_t, negative
    Vec es_series;   // -sigma_t * pdf(z_alpha)/alpha, below VaR
    double qloss = 0.0;      // summed over periods
    double jointloss = 0.0;  // averaged over periods
};

struct BacktestResult {
    std::string label;
    Vec returns;  // realized portfolio returns, percent
    double ar = 0.0;
    double av = 0.0;
    double mdd = 0.0;
    std::vector<RiskSeries> levels;
};

// Backtest over forecasts[i] applied to panel row start_row + i. Weights are
// GMV per period, or `fixed_weights` when given (the EW baseline).
BacktestResult backtest_series(const std::string& label, const CovPath& forecasts,
                               const ReturnsPanel& panel, int start_row,
                               const Vec* fixed_weights,
                               const std::vector<double>& levels);

struct ModelBacktest {
    BacktestResult gmv;
    BacktestResult ew;
};

// GMV and EW baselines per model over the test span with frozen parameters.
std::vector<ModelBacktest> backtest(const std::vector<FitResult>& fits,
                                    const ReturnsPanel& panel,
                                    const std::vector<double>& levels = {0.01, 0.05});

}  // namespace mvcov
