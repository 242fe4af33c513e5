#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <vector>

#include "mvcov/data.hpp"
#include "mvcov/garch.hpp"
#include "mvcov/lstm_bekk.hpp"

namespace mvcov {

enum class ModelKind { scalar_bekk, dcc, lstm_bekk };

std::string model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

// Unconstrained <-> constrained bijections. Every finite free vector maps
// into the feasible set, so feasibility never needs checking or clamping.
//
// Persistence split: s = sigmoid(p), phi = sigmoid(q), a = s*phi,
// b = s*(1-phi), hence a,b >= 0 and a+b = s < 1.
struct AbPair {
    double a;
    double b;
};
AbPair constrain_ab(double p, double q);
void free_from_ab(double a, double b, double& p, double& q);
// Chain rule: maps (da, db) adjoints to (dp, dq).
void constrain_ab_backward(double p, double q, double da, double db, double& dp, double& dq);

double softplus(double x);
double softplus_inv(double y);

// diag entries go through softplus(d) + 1e-6; off-diagonals are free.
LowerTriangular constrain_chol(const Vec& free_packed, double diag_floor = 1e-6);
Vec free_from_chol(const LowerTriangular& L, double diag_floor = 1e-6);
Vec constrain_chol_backward(const Vec& free_packed, const Vec& dL_packed);

struct TrainConfig {
    double learning_rate = 1e-3;
    double rmsprop_decay = 0.9;
    double epsilon = 1e-8;
    double clip_norm = 1.0;
    int max_epochs = 500;
    int patience = 10;
    double convergence_tol = 1e-6;
    std::uint64_t seed = 0;

    // LSTM-BEKK architecture (within the supported 3..5 layer range)
    int lstm_layers = 3;
    double dropout = 0.1;
    bool lstm_zero_init = false;  // start with an exactly-zero dynamic component
    bool lstm_freeze = false;     // exclude LSTM weights from optimization

    double init_a = 0.10;
    double init_b = 0.80;

    std::ostream* progress = nullptr;  // per-epoch line-delimited records when set

    void validate() const;
};

struct EpochRecord {
    int epoch;
    double train_nll;
    double val_nll;
    double grad_norm;
    double learning_rate;
    double max_jitter;  // largest jitter added to any H_t this epoch (0 if none)
};

struct FitResult {
    ModelKind model = ModelKind::scalar_bekk;
    std::shared_ptr<ScalarBekkParams> bekk;
    std::shared_ptr<DccParams> dcc;
    std::shared_ptr<LstmBekkParams> lstm_bekk;

    double train_nll = 0.0;  // per-observation average, constant included
    double train_nll_sum = 0.0;
    double val_nll = 0.0;
    int epochs_run = 0;
    std::vector<EpochRecord> history;
    bool jitter_warning = false;

    // recursion state at the end of the validation span, for test-span
    // continuation and forecasting
    std::optional<BekkCarry> bekk_carry;
    std::optional<DccCarry> dcc_carry;
    std::optional<LstmBekkCarry> lstm_carry;
};

// Per-observation average Gaussian NLL, (1/T) sum_t 0.5 (n ln 2pi +
// ln|H_t| + r' H^{-1} r), evaluated via Cholesky. Non-PD H_t gets jitter
// escalation (1e-8 * tr(H)/n * I, x10, up to 3 times) before failing.
double gaussian_nll(const CovPath& path, const ReturnsPanel& panel, int start_row);

// Single-term version used by the streaming evaluators; returns the loss
// 0.5 (n ln 2pi + logdet + quad) and reports the jitter that was needed.
double gaussian_nll_term(Mat& H, const Vec& r, double* jitter_used = nullptr);

FitResult fit(ModelKind model, const ReturnsPanel& panel, const TrainConfig& cfg);

// Max relative error between the reverse-mode gradient of the training NLL
// and Richardson-extrapolated central finite differences, over coordinates
// with |g| > 1e-8.
double grad_check(ModelKind model, const ReturnsPanel& panel, const TrainConfig& cfg,
                  double fd_step = 1e-3);

}  // namespace mvcov
