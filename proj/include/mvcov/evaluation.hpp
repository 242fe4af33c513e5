#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "mvcov/estimation.hpp"

namespace mvcov {

// Per-period NLL terms over the test span for one model.
struct LossSeries {
    std::string model;
    Vec losses;

    double mean() const;
};

// One-step-ahead covariances over the test span with frozen parameters,
// continuing the recursion from the fit's end-of-validation carry.
CovPath test_covariances(const FitResult& fit, const ReturnsPanel& panel);

LossSeries test_nll(const FitResult& fit, const ReturnsPanel& panel);

struct TTestResult {
    double mean_diff = 0.0;
    double t = 0.0;
    double p = 1.0;
    int m = 0;
    bool degenerate = false;  // zero variance with nonzero mean
};

// Paired two-sided t-test on equal-length samples, m-1 degrees of freedom.
TTestResult paired_ttest(const Vec& a, const Vec& b);

// Two-sided tail probability of the t distribution via the regularized
// incomplete beta function.
double student_t_two_sided_p(double t, int df);

struct BootstrapConfig {
    double block_mean = 20.0;  // geometric mean block length
    int B = 1000;
    std::uint64_t seed = 0;
    int jobs = 1;
};

struct McsResult {
    std::vector<std::string> models;
    Vec p_values;                     // aligned with `models`
    std::vector<int> elimination_order;  // indices, worst first; last = best
    std::vector<bool> included;       // p > level
    double level = 0.10;
    bool short_series_warning = false;
};

// Model Confidence Set with the T_max statistic and a stationary bootstrap.
// Resample indices depend only on (seed, series length), so model order and
// worker count never change the outcome.
McsResult mcs(const std::vector<LossSeries>& losses, double level = 0.10,
              const BootstrapConfig& bootstrap = {});

// One row of the comparison report emitted by the CLI.
struct ReportRow {
    std::string model;
    double mean_nll;
    double sd;
    double t;       // paired t against the first model (0 for the first)
    double p;
    double mcs_p;
    bool included;
};

std::vector<ReportRow> comparison_report(const std::vector<LossSeries>& losses,
                                         const McsResult& mcs_result);
void write_report_csv(const std::vector<ReportRow>& rows, std::ostream& out);
void write_report_text(const std::vector<ReportRow>& rows, std::ostream& out);

}  // namespace mvcov
