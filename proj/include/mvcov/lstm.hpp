#pragma once

#include <cstdint>
#include <vector>

#include "mvcov/linalg.hpp"
#include "mvcov/rng.hpp"

namespace mvcov {

// Gate weights act on the concatenation [h_{t-1}, x_t] (h first).
struct LstmLayerWeights {
    Mat W_i, W_f, W_o, W_c;  // n x 2n
    Vec b_i, b_f, b_o, b_c;  // n
};

// Stacked LSTM with hidden size equal to the input size n, plus an affine
// projection from the final hidden state to a packed lower-triangular
// vector of length n(n+1)/2, and the Swish shape parameter beta.
struct LstmWeights {
    int n = 0;
    std::vector<LstmLayerWeights> layers;
    Mat proj_W;  // n(n+1)/2 x n
    Vec proj_b;  // n(n+1)/2
    double beta = 1.0;

    int num_layers() const { return static_cast<int>(layers.size()); }
    std::size_t param_count() const;

    // Xavier-uniform gate weights, forget-gate bias +1, zero projection bias.
    static LstmWeights init(int n, int num_layers, Rng& rng);
    static LstmWeights zeros(int n, int num_layers);

    void flatten_into(double* out) const;
    void unflatten_from(const double* in);
};

struct LstmState {
    std::vector<Vec> h;  // per layer, length n
    std::vector<Vec> c;

    static LstmState zeros(int n, int num_layers);
};

struct DropoutMode {
    bool train = false;
    double p = 0.0;

    static DropoutMode eval() { return {false, 0.0}; }
    static DropoutMode training(double p) { return {true, p}; }
};

// Per-step activations kept for backpropagation through time.
struct LstmStepCache {
    std::vector<Vec> input;   // per layer: the (possibly dropped) layer input
    std::vector<Vec> gi, gf, go, gc;  // gate activations
    std::vector<Vec> c_prev, h_prev, c, h;
    std::vector<Vec> mask;    // inverted-dropout mask between layer l and l+1
    Vec ctilde;
};

// One step: consumes x (length n), updates state in place, returns the
// projected ctilde (length n(n+1)/2). In train mode `rng` supplies the
// dropout masks; cache may be null when no backward pass will follow.
Vec lstm_step(const LstmWeights& w, LstmState& state, const Vec& x,
              DropoutMode dropout, Rng* rng = nullptr, LstmStepCache* cache = nullptr);

// Unpacks ctilde row-major into the lower triangle and applies the Swish
// map d -> d * sigmoid(beta d) to the diagonal entries.
LowerTriangular build_ct(const Vec& ctilde, double beta);

// Adjoint of build_ct: dct is the packed adjoint of the output matrix;
// returns dctilde and accumulates into dbeta.
Vec build_ct_backward(const Vec& ctilde, double beta, const Vec& dct, double& dbeta);

// Backward through one step. dh/dc carry the recurrent adjoints flowing in
// from step t+1 (and collect those for step t-1 on return). dctilde is the
// adjoint on this step's projection output. Gradients accumulate into grad.
void lstm_backward_step(const LstmWeights& w, const LstmStepCache& cache,
                        const Vec& dctilde, std::vector<Vec>& dh, std::vector<Vec>& dc,
                        LstmWeights& grad);

}  // namespace mvcov
