#include "mvcov/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mvcov/errors.hpp"

namespace mvcov {

namespace {

// Acklam's rational approximation, polished with one Newton step against the
// erfc-based CDF; |error| well below 1e-12 across (0, 1).
double acklam_inverse(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1.0 - plow;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > phigh) {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5, r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ArgumentError("normal_quantile: p must be in (0,1)");
    double x = acklam_inverse(p);
    const double err = normal_cdf(x) - p;
    x -= err / normal_pdf(x);
    return x;
}

Vec gmv_weights(const SPDMatrix& H) {
    const int n = H.dim();
    Vec ones(n, 1.0);
    Vec w = chol_solve(H.chol(), ones);
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& v : w) v /= total;
    return w;
}

double quantile_loss_term(double r, double q, double alpha) {
    const double indicator = r < q ? 1.0 : 0.0;
    return (alpha - indicator) * (r - q);
}

double joint_al_loss(double r, double q, double es, double alpha) {
    if (!(es < 0.0)) throw ArgumentError("joint_al_loss: expected shortfall must be negative");
    if (!(alpha > 0.0 && alpha < 0.5)) throw ArgumentError("joint_al_loss: alpha must be in (0, 0.5)");
    const double indicator = r <= q ? 1.0 : 0.0;
    return -std::log((alpha - 1.0) / es) - (r - q) * (alpha - indicator) / (alpha * es);
}

double annualized_return(const Vec& returns) {
    if (returns.empty()) return 0.0;
    return std::accumulate(returns.begin(), returns.end(), 0.0) / returns.size() * 252.0;
}

double annualized_volatility(const Vec& returns) {
    const int T = static_cast<int>(returns.size());
    if (T < 2) return 0.0;
    const double mean = std::accumulate(returns.begin(), returns.end(), 0.0) / T;
    double ss = 0.0;
    for (double r : returns) ss += (r - mean) * (r - mean);
    return std::sqrt(ss / (T - 1)) * std::sqrt(252.0);
}

double max_drawdown(const Vec& returns) {
    double value = 1.0, peak = 1.0, mdd = 0.0;
    for (double r : returns) {
        value *= 1.0 + r / 100.0;
        peak = std::max(peak, value);
        mdd = std::min(mdd, (value - peak) / peak);
    }
    return mdd;
}

BacktestResult backtest_series(const std::string& label, const CovPath& forecasts,
                               const ReturnsPanel& panel, int start_row,
                               const Vec* fixed_weights,
                               const std::vector<double>& levels) {
    const int n = panel.n();
    const int len = forecasts.length();
    if (start_row + len > panel.T())
        throw ArgumentError("backtest_series: forecasts run past the end of the panel");
    if (fixed_weights && static_cast<int>(fixed_weights->size()) != n)
        throw ArgumentError("backtest_series: fixed weight length mismatch");

    BacktestResult res;
    res.label = label;
    res.returns.reserve(len);
    res.levels.resize(levels.size());
    for (std::size_t k = 0; k < levels.size(); ++k) {
        res.levels[k].alpha = levels[k];
        res.levels[k].var_series.reserve(len);
        res.levels[k].es_series.reserve(len);
    }
    Vec z_alpha(levels.size()), pdf_z(levels.size());
    for (std::size_t k = 0; k < levels.size(); ++k) {
        z_alpha[k] = normal_quantile(levels[k]);
        pdf_z[k] = normal_pdf(z_alpha[k]);
    }

    for (int i = 0; i < len; ++i) {
        const SPDMatrix& H = forecasts.H[i];
        Vec w;
        try {
            w = fixed_weights ? *fixed_weights : gmv_weights(H);
        } catch (const DecompositionError& e) {
            throw DecompositionError(e.pivot, std::string(e.what()) + " at backtest period " +
                                                  std::to_string(i));
        }
        const Vec r = panel.row(start_row + i);
        double rp = 0.0;
        for (int j = 0; j < n; ++j) rp += w[j] * r[j];
        const Vec Hw = mat_vec(H.values(), w);
        double var_p = 0.0;
        for (int j = 0; j < n; ++j) var_p += w[j] * Hw[j];
        const double sigma = std::sqrt(var_p);

        res.returns.push_back(rp);
        for (std::size_t k = 0; k < levels.size(); ++k) {
            const double var_t = z_alpha[k] * sigma;
            const double es_t = -sigma * pdf_z[k] / levels[k];
            res.levels[k].var_series.push_back(var_t);
            res.levels[k].es_series.push_back(es_t);
            res.levels[k].qloss += quantile_loss_term(rp, var_t, levels[k]);
            res.levels[k].jointloss += joint_al_loss(rp, var_t, es_t, levels[k]);
        }
    }
    for (auto& lv : res.levels)
        if (len > 0) lv.jointloss /= len;

    res.ar = annualized_return(res.returns);
    res.av = annualized_volatility(res.returns);
    res.mdd = max_drawdown(res.returns);
    return res;
}

std::vector<ModelBacktest> backtest(const std::vector<FitResult>& fits,
                                    const ReturnsPanel& panel,
                                    const std::vector<double>& levels) {
    std::vector<ModelBacktest> out;
    out.reserve(fits.size());
    const Vec ew(panel.n(), 1.0 / panel.n());
    for (const FitResult& fit : fits) {
        const CovPath path = test_covariances(fit, panel);
        ModelBacktest mb;
        mb.gmv = backtest_series(model_kind_name(fit.model), path, panel, panel.val_end,
                                 nullptr, levels);
        mb.ew = backtest_series(model_kind_name(fit.model) + "/ew", path, panel,
                                panel.val_end, &ew, levels);
        out.push_back(std::move(mb));
    }
    return out;
}

}  // namespace mvcov
