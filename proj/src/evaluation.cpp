#include "mvcov/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <thread>

#include "mvcov/errors.hpp"
#include "mvcov/rng.hpp"

namespace mvcov {

namespace {

void parallel_for(int count, int jobs, const std::function<void(int)>& body) {
    jobs = std::max(1, std::min(jobs, count));
    if (jobs == 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(jobs);
    for (int w = 0; w < jobs; ++w)
        workers.emplace_back([&, w] {
            for (int i = w; i < count; i += jobs) body(i);
        });
    for (auto& th : workers) th.join();
}

// continued-fraction evaluation of the regularized incomplete beta function
double betacf(double a, double b, double x) {
    constexpr int max_iter = 300;
    constexpr double eps = 3e-14;
    constexpr double fpmin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return h;
}

double reg_incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double sample_sd(const Vec& v) {
    const int m = static_cast<int>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / m;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / (m - 1));
}

}  // namespace

double LossSeries::mean() const {
    if (losses.empty()) return 0.0;
    return std::accumulate(losses.begin(), losses.end(), 0.0) / losses.size();
}

CovPath test_covariances(const FitResult& fit, const ReturnsPanel& panel) {
    panel.validate();
    const int start = panel.val_end;
    const int end = panel.T();
    CovPath path;
    path.H.reserve(end - start);
    switch (fit.model) {
        case ModelKind::scalar_bekk: {
            if (!fit.bekk || !fit.bekk_carry)
                throw ArgumentError("test_covariances: fit lacks BEKK parameters or carry");
            BekkCarry carry = *fit.bekk_carry;
            for (int t = start; t < end; ++t) {
                Mat H = bekk_predict(*fit.bekk, carry);
                bekk_advance(carry, H, panel.row(t));
                path.H.emplace_back(std::move(H));
            }
            break;
        }
        case ModelKind::dcc: {
            if (!fit.dcc || !fit.dcc_carry)
                throw ArgumentError("test_covariances: fit lacks DCC parameters or carry");
            DccCarry carry = *fit.dcc_carry;
            for (int t = start; t < end; ++t) {
                DccStep step = dcc_predict(*fit.dcc, carry);
                dcc_advance(carry, step, panel.row(t));
                path.H.emplace_back(std::move(step.H));
            }
            break;
        }
        case ModelKind::lstm_bekk: {
            if (!fit.lstm_bekk || !fit.lstm_carry)
                throw ArgumentError("test_covariances: fit lacks LSTM-BEKK parameters or carry");
            LstmBekkCarry carry = *fit.lstm_carry;
            for (int t = start; t < end; ++t) {
                LstmBekkStep step = lstm_bekk_predict(*fit.lstm_bekk, carry);
                lstm_bekk_advance(carry, step.H, panel.row(t));
                path.H.emplace_back(std::move(step.H));
            }
            break;
        }
    }
    return path;
}

LossSeries test_nll(const FitResult& fit, const ReturnsPanel& panel) {
    const CovPath path = test_covariances(fit, panel);
    LossSeries series;
    series.model = model_kind_name(fit.model);
    series.losses.reserve(path.length());
    for (int i = 0; i < path.length(); ++i) {
        Mat H = path.H[i].values();
        try {
            series.losses.push_back(gaussian_nll_term(H, panel.row(panel.val_end + i)));
        } catch (const DecompositionError& e) {
            throw DecompositionError(e.pivot, std::string(e.what()) + " at test period " +
                                                  std::to_string(i));
        }
    }
    return series;
}

double student_t_two_sided_p(double t, int df) {
    if (df < 1) throw ArgumentError("student_t_two_sided_p: df must be >= 1");
    if (std::isinf(t)) return 0.0;
    const double x = df / (df + t * t);
    return reg_incomplete_beta(df / 2.0, 0.5, x);
}

TTestResult paired_ttest(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw ArgumentError("paired_ttest: unequal sample sizes");
    const int m = static_cast<int>(a.size());
    if (m < 2) throw ArgumentError("paired_ttest: need at least 2 pairs");

    Vec d(m);
    for (int i = 0; i < m; ++i) d[i] = a[i] - b[i];
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / m;
    double ss = 0.0;
    for (double x : d) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (m - 1));

    TTestResult res;
    res.mean_diff = mean;
    res.m = m;
    if (sd == 0.0) {
        if (mean == 0.0) {
            res.t = 0.0;
            res.p = 1.0;
        } else {
            res.t = std::copysign(std::numeric_limits<double>::infinity(), mean);
            res.p = 0.0;
            res.degenerate = true;
        }
        return res;
    }
    res.t = mean / (sd / std::sqrt(static_cast<double>(m)));
    res.p = student_t_two_sided_p(res.t, m - 1);
    return res;
}

McsResult mcs(const std::vector<LossSeries>& losses, double level,
              const BootstrapConfig& bootstrap) {
    const int m = static_cast<int>(losses.size());
    if (m < 2) throw ArgumentError("mcs: need at least 2 models");
    const int L = static_cast<int>(losses[0].losses.size());
    for (const auto& s : losses) {
        if (static_cast<int>(s.losses.size()) != L)
            throw ArgumentError("mcs: loss series lengths differ");
        for (double v : s.losses)
            if (!std::isfinite(v)) throw ArgumentError("mcs: non-finite loss entry");
    }
    if (L < 5) throw ArgumentError("mcs: series too short for the bootstrap (length < 5)");
    if (bootstrap.B < 1 || !(bootstrap.block_mean >= 1.0))
        throw ConfigError("mcs: invalid bootstrap configuration");

    McsResult result;
    result.level = level;
    result.short_series_warning = L < 50;
    result.p_values.assign(m, 0.0);
    result.included.assign(m, false);
    for (const auto& s : losses) result.models.push_back(s.model);

    // stationary-bootstrap time indices, shared across models and rounds
    const int B = bootstrap.B;
    std::vector<std::vector<int>> idx(B, std::vector<int>(L));
    const double restart_p = 1.0 / bootstrap.block_mean;
    parallel_for(B, bootstrap.jobs, [&](int b) {
        Rng rng(Rng::derive(bootstrap.seed, static_cast<std::uint64_t>(b)));
        idx[b][0] = static_cast<int>(rng.below(L));
        for (int t = 1; t < L; ++t)
            idx[b][t] = rng.uniform() < restart_p ? static_cast<int>(rng.below(L))
                                                  : (idx[b][t - 1] + 1) % L;
    });

    std::vector<int> remaining(m);
    std::iota(remaining.begin(), remaining.end(), 0);
    double p_running = 0.0;

    while (!remaining.empty()) {
        const int k = static_cast<int>(remaining.size());
        if (k == 1) {
            result.p_values[remaining[0]] = 1.0;
            result.elimination_order.push_back(remaining[0]);
            break;
        }

        // loss differentials against the cross-model average per period
        Mat d(k, L);
        Vec dbar(k, 0.0);
        for (int t = 0; t < L; ++t) {
            double avg = 0.0;
            for (int i = 0; i < k; ++i) avg += losses[remaining[i]].losses[t];
            avg /= k;
            for (int i = 0; i < k; ++i) {
                const double v = losses[remaining[i]].losses[t] - avg;
                d(i, t) = v;
                dbar[i] += v;
            }
        }
        for (int i = 0; i < k; ++i) dbar[i] /= L;

        Mat dbar_star(B, k);
        parallel_for(B, bootstrap.jobs, [&](int b) {
            for (int i = 0; i < k; ++i) {
                double s = 0.0;
                for (int t = 0; t < L; ++t) s += d(i, idx[b][t]);
                dbar_star(b, i) = s / L;
            }
        });

        Vec se(k, 0.0);
        for (int i = 0; i < k; ++i) {
            double v = 0.0;
            for (int b = 0; b < B; ++b) {
                const double dev = dbar_star(b, i) - dbar[i];
                v += dev * dev;
            }
            se[i] = std::sqrt(v / B);
        }

        int worst = 0;
        double t_max = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < k; ++i) {
            double ti;
            if (se[i] == 0.0)
                ti = dbar[i] == 0.0
                         ? 0.0
                         : std::copysign(std::numeric_limits<double>::infinity(), dbar[i]);
            else
                ti = dbar[i] / se[i];
            if (ti > t_max) {
                t_max = ti;
                worst = i;
            }
        }

        int exceed = 0;
        for (int b = 0; b < B; ++b) {
            double tb = -std::numeric_limits<double>::infinity();
            for (int i = 0; i < k; ++i) {
                const double ti = se[i] == 0.0 ? 0.0 : (dbar_star(b, i) - dbar[i]) / se[i];
                tb = std::max(tb, ti);
            }
            if (tb >= t_max) ++exceed;
        }
        const double p_round = static_cast<double>(exceed) / B;

        p_running = std::max(p_running, p_round);
        result.p_values[remaining[worst]] = p_running;
        result.elimination_order.push_back(remaining[worst]);
        remaining.erase(remaining.begin() + worst);
    }

    for (int i = 0; i < m; ++i) result.included[i] = result.p_values[i] > level;
    return result;
}

std::vector<ReportRow> comparison_report(const std::vector<LossSeries>& losses,
                                         const McsResult& mcs_result) {
    std::vector<ReportRow> rows;
    rows.reserve(losses.size());
    for (std::size_t i = 0; i < losses.size(); ++i) {
        ReportRow row;
        row.model = losses[i].model;
        row.mean_nll = losses[i].mean();
        row.sd = losses[i].losses.size() > 1 ? sample_sd(losses[i].losses) : 0.0;
        if (i == 0) {
            row.t = 0.0;
            row.p = 1.0;
        } else {
            const TTestResult tt = paired_ttest(losses[i].losses, losses[0].losses);
            row.t = tt.t;
            row.p = tt.p;
        }
        row.mcs_p = mcs_result.p_values[i];
        row.included = mcs_result.included[i];
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_report_csv(const std::vector<ReportRow>& rows, std::ostream& out) {
    out << "model,mean_nll,sd,t,p,mcs_p,included_90\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.10g,%.10g,%.10g,%.10g,%.10g,%d\n",
                      r.model.c_str(), r.mean_nll, r.sd, r.t, r.p, r.mcs_p,
                      r.included ? 1 : 0);
        out << buf;
    }
}

void write_report_text(const std::vector<ReportRow>& rows, std::ostream& out) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-14s %12s %12s %10s %10s %8s %6s\n", "model",
                  "mean_nll", "sd", "t", "p", "mcs_p", "in90");
    out << buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-14s %12.6f %12.6f %10.4f %10.4f %8.4f %6s\n",
                      r.model.c_str(), r.mean_nll, r.sd, r.t, r.p, r.mcs_p,
                      r.included ? "yes" : "no");
        out << buf;
    }
}

}  // namespace mvcov
