#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mvcov/linalg.hpp"

namespace mvcov {

// T x n panel of demeaned percent log-returns with chronological splits.
// Immutable after construction; the training window is rows [0, train_end),
// validation [train_end, val_end), test [val_end, T).
struct ReturnsPanel {
    std::vector<std::string> dates;
    std::vector<std::string> assets;
    Mat values;  // T x n, percent units
    int train_end = 0;
    int val_end = 0;

    int T() const { return values.rows(); }
    int n() const { return values.cols(); }

    Vec row(int t) const;

    // Sample mean/covariance over rows [0, train_end) (1/T normalization).
    Vec train_mean() const;
    Mat train_covariance() const;
    Vec train_variances() const;

    void validate() const;  // throws DataError on a broken invariant
};

// 70/15/15 split by flooring; remainder rows go to the test set.
void set_default_splits(ReturnsPanel& panel);

// Subtracts the training-window column means from every row.
void demean_training_window(ReturnsPanel& panel);

// CSV header: date,<label>... ISO-8601 dates, decimal point.
// If prices: returns are 100*(ln p_t - ln p_{t-1}) and the first row drops.
// Columns are then demeaned by the training-window mean only.
ReturnsPanel load_csv(const std::string& path, bool prices);

// Written back with 12 significant digits; load_csv(write_csv(p)) round-trips
// values to ~1e-12.
void write_csv(const ReturnsPanel& panel, const std::string& path);

enum class Dgp { scalar_bekk, dcc, iid_gaussian };

struct ScalarBekkParams;
struct DccParams;

struct SimulationSpec {
    Dgp dgp = Dgp::iid_gaussian;
    int n = 2;
    int T = 1000;
    std::uint64_t seed = 0;

    // DGP-specific parameter sets; only the one matching `dgp` is used.
    Mat iid_covariance;                       // defaults to identity
    std::shared_ptr<ScalarBekkParams> bekk;   // required for scalar_bekk
    std::shared_ptr<DccParams> dcc;           // required for dcc
};

// Draws r_t ~ N(0, H_t) with H_t evolved by the chosen DGP from its
// unconditional covariance. Deterministic given the seed.
ReturnsPanel simulate(const SimulationSpec& spec);

// Sequential calendar days starting at 2000-01-01; used for simulated panels.
std::string synthetic_date(int index);

// k distinct columns chosen uniformly without replacement; dates and split
// indices are preserved.
ReturnsPanel random_subpanel(const ReturnsPanel& panel, int k, std::uint64_t seed);

}  // namespace mvcov
