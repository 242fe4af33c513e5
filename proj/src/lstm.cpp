#include "mvcov/lstm.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "mvcov/errors.hpp"

namespace mvcov {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// out = W [h, x] + b, W is n x 2n
void gate_preact(const Mat& W, const Vec& b, const Vec& h, const Vec& x, Vec& out) {
    const int n = static_cast<int>(h.size());
    for (int i = 0; i < n; ++i) {
        double s = b[i];
        const double* wrow = W.data() + static_cast<std::size_t>(i) * 2 * n;
        for (int j = 0; j < n; ++j) s += wrow[j] * h[j];
        for (int j = 0; j < n; ++j) s += wrow[n + j] * x[j];
        out[i] = s;
    }
}

std::size_t layer_param_count(int n) {
    return 4 * (static_cast<std::size_t>(n) * 2 * n + n);
}

}  // namespace

std::size_t LstmWeights::param_count() const {
    const std::size_t m = static_cast<std::size_t>(n) * (n + 1) / 2;
    return layers.size() * layer_param_count(n) + m * n + m + 1;
}

LstmWeights LstmWeights::zeros(int n, int num_layers) {
    LstmWeights w;
    w.n = n;
    const int m = n * (n + 1) / 2;
    w.layers.resize(num_layers);
    for (auto& l : w.layers) {
        l.W_i = l.W_f = l.W_o = l.W_c = Mat(n, 2 * n);
        l.b_i = l.b_f = l.b_o = l.b_c = Vec(n, 0.0);
    }
    w.proj_W = Mat(m, n);
    w.proj_b = Vec(m, 0.0);
    w.beta = 1.0;
    return w;
}

LstmWeights LstmWeights::init(int n, int num_layers, Rng& rng) {
    LstmWeights w = zeros(n, num_layers);
    const double gate_limit = std::sqrt(6.0 / (2 * n + n));
    auto fill = [&](Mat& M, double limit) {
        for (int i = 0; i < M.rows(); ++i)
            for (int j = 0; j < M.cols(); ++j) M(i, j) = (2.0 * rng.uniform() - 1.0) * limit;
    };
    for (auto& l : w.layers) {
        fill(l.W_i, gate_limit);
        fill(l.W_f, gate_limit);
        fill(l.W_o, gate_limit);
        fill(l.W_c, gate_limit);
        std::fill(l.b_f.begin(), l.b_f.end(), 1.0);
    }
    const int m = n * (n + 1) / 2;
    fill(w.proj_W, std::sqrt(6.0 / (n + m)));
    return w;
}

void LstmWeights::flatten_into(double* out) const {
    std::size_t k = 0;
    auto put_mat = [&](const Mat& M) {
        const std::size_t sz = static_cast<std::size_t>(M.rows()) * M.cols();
        std::memcpy(out + k, M.data(), sz * sizeof(double));
        k += sz;
    };
    auto put_vec = [&](const Vec& v) {
        std::memcpy(out + k, v.data(), v.size() * sizeof(double));
        k += v.size();
    };
    for (const auto& l : layers) {
        put_mat(l.W_i); put_mat(l.W_f); put_mat(l.W_o); put_mat(l.W_c);
        put_vec(l.b_i); put_vec(l.b_f); put_vec(l.b_o); put_vec(l.b_c);
    }
    put_mat(proj_W);
    put_vec(proj_b);
    out[k++] = beta;
}

void LstmWeights::unflatten_from(const double* in) {
    std::size_t k = 0;
    auto get_mat = [&](Mat& M) {
        const std::size_t sz = static_cast<std::size_t>(M.rows()) * M.cols();
        std::memcpy(M.data(), in + k, sz * sizeof(double));
        k += sz;
    };
    auto get_vec = [&](Vec& v) {
        std::memcpy(v.data(), in + k, v.size() * sizeof(double));
        k += v.size();
    };
    for (auto& l : layers) {
        get_mat(l.W_i); get_mat(l.W_f); get_mat(l.W_o); get_mat(l.W_c);
        get_vec(l.b_i); get_vec(l.b_f); get_vec(l.b_o); get_vec(l.b_c);
    }
    get_mat(proj_W);
    get_vec(proj_b);
    beta = in[k++];
}

LstmState LstmState::zeros(int n, int num_layers) {
    LstmState s;
    s.h.assign(num_layers, Vec(n, 0.0));
    s.c.assign(num_layers, Vec(n, 0.0));
    return s;
}

Vec lstm_step(const LstmWeights& w, LstmState& state, const Vec& x,
              DropoutMode dropout, Rng* rng, LstmStepCache* cache) {
    const int n = w.n;
    const int L = w.num_layers();
    if (static_cast<int>(x.size()) != n) throw ArgumentError("lstm_step: input length != n");

    if (cache) {
        cache->input.resize(L);
        cache->gi.resize(L); cache->gf.resize(L); cache->go.resize(L); cache->gc.resize(L);
        cache->c_prev.resize(L); cache->h_prev.resize(L);
        cache->c.resize(L); cache->h.resize(L);
        cache->mask.assign(L, Vec());
    }

    Vec layer_in = x;
    Vec pre(n);
    for (int l = 0; l < L; ++l) {
        const auto& lw = w.layers[l];
        Vec& h = state.h[l];
        Vec& c = state.c[l];
        if (cache) {
            cache->input[l] = layer_in;
            cache->c_prev[l] = c;
            cache->h_prev[l] = h;
        }
        Vec gi(n), gf(n), go(n), gc(n);
        gate_preact(lw.W_i, lw.b_i, h, layer_in, pre);
        for (int i = 0; i < n; ++i) gi[i] = sigmoid(pre[i]);
        gate_preact(lw.W_f, lw.b_f, h, layer_in, pre);
        for (int i = 0; i < n; ++i) gf[i] = sigmoid(pre[i]);
        gate_preact(lw.W_o, lw.b_o, h, layer_in, pre);
        for (int i = 0; i < n; ++i) go[i] = sigmoid(pre[i]);
        gate_preact(lw.W_c, lw.b_c, h, layer_in, pre);
        for (int i = 0; i < n; ++i) gc[i] = std::tanh(pre[i]);
        for (int i = 0; i < n; ++i) {
            c[i] = gf[i] * c[i] + gi[i] * gc[i];
            h[i] = go[i] * std::tanh(c[i]);
            if (!std::isfinite(h[i]) || !std::isfinite(c[i]))
                throw NumericError("non-finite LSTM activation in layer " + std::to_string(l));
        }
        if (cache) {
            cache->gi[l] = std::move(gi); cache->gf[l] = std::move(gf);
            cache->go[l] = std::move(go); cache->gc[l] = std::move(gc);
            cache->c[l] = c;
            cache->h[l] = h;
        }
        // inverted dropout on the hidden vector fed to the next layer
        if (l + 1 < L) {
            layer_in = h;
            if (dropout.train && dropout.p > 0.0) {
                if (!rng) throw ArgumentError("lstm_step: train-mode dropout needs an rng");
                Vec mask(n);
                for (int i = 0; i < n; ++i) {
                    mask[i] = rng->uniform() < dropout.p ? 0.0 : 1.0 / (1.0 - dropout.p);
                    layer_in[i] *= mask[i];
                }
                if (cache) cache->mask[l] = std::move(mask);
            }
        }
    }

    const int m = n * (n + 1) / 2;
    Vec ctilde(m);
    const Vec& h_top = state.h[L - 1];
    for (int i = 0; i < m; ++i) {
        double s = w.proj_b[i];
        const double* wrow = w.proj_W.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) s += wrow[j] * h_top[j];
        ctilde[i] = s;
        if (!std::isfinite(s)) throw NumericError("non-finite LSTM projection output");
    }
    if (cache) cache->ctilde = ctilde;
    return ctilde;
}

LowerTriangular build_ct(const Vec& ctilde, double beta) {
    const int n = LowerTriangular::dim_from_packed_size(ctilde.size());
    LowerTriangular C(n, ctilde);
    for (int i = 0; i < n; ++i) {
        const double d = C.at(i, i);
        C.at(i, i) = d * sigmoid(beta * d);
    }
    return C;
}

Vec build_ct_backward(const Vec& ctilde, double beta, const Vec& dct, double& dbeta) {
    const int n = LowerTriangular::dim_from_packed_size(ctilde.size());
    Vec dctilde = dct;
    for (int i = 0; i < n; ++i) {
        const std::size_t k = static_cast<std::size_t>(i) * (i + 1) / 2 + i;
        const double d = ctilde[k];
        const double s = sigmoid(beta * d);
        dctilde[k] = dct[k] * (s + beta * d * s * (1.0 - s));
        dbeta += dct[k] * d * d * s * (1.0 - s);
    }
    return dctilde;
}

void lstm_backward_step(const LstmWeights& w, const LstmStepCache& cache,
                        const Vec& dctilde, std::vector<Vec>& dh, std::vector<Vec>& dc,
                        LstmWeights& grad) {
    const int n = w.n;
    const int L = w.num_layers();
    const int m = n * (n + 1) / 2;

    // projection backward into the top layer's hidden state
    for (int i = 0; i < m; ++i) {
        const double g = dctilde[i];
        if (g == 0.0) continue;
        double* grow = grad.proj_W.data() + static_cast<std::size_t>(i) * n;
        const double* wrow = w.proj_W.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            grow[j] += g * cache.h[L - 1][j];
            dh[L - 1][j] += g * wrow[j];
        }
        grad.proj_b[i] += g;
    }

    Vec dinput(n);
    for (int l = L - 1; l >= 0; --l) {
        const auto& lw = w.layers[l];
        auto& gl = grad.layers[l];
        const Vec& gi = cache.gi[l];
        const Vec& gf = cache.gf[l];
        const Vec& go = cache.go[l];
        const Vec& gc = cache.gc[l];

        Vec dai(n), daf(n), dao(n), dag(n);
        for (int i = 0; i < n; ++i) {
            const double tc = std::tanh(cache.c[l][i]);
            const double dho = dh[l][i];
            const double dcc = dh[l][i] * go[i] * (1.0 - tc * tc) + dc[l][i];
            dao[i] = dho * tc * go[i] * (1.0 - go[i]);
            daf[i] = dcc * cache.c_prev[l][i] * gf[i] * (1.0 - gf[i]);
            dai[i] = dcc * gc[i] * gi[i] * (1.0 - gi[i]);
            dag[i] = dcc * gi[i] * (1.0 - gc[i] * gc[i]);
            dc[l][i] = dcc * gf[i];  // flows to step t-1
        }

        // dh[l] is consumed; rebuild it as the recurrent adjoint for t-1
        std::fill(dh[l].begin(), dh[l].end(), 0.0);
        std::fill(dinput.begin(), dinput.end(), 0.0);

        const Vec& h_prev = cache.h_prev[l];
        auto acc = [&](const Mat& W, Mat& G, Vec& gb, const Vec& da) {
            for (int i = 0; i < n; ++i) {
                const double d = da[i];
                if (d == 0.0) { continue; }
                double* grow = G.data() + static_cast<std::size_t>(i) * 2 * n;
                const double* wrow = W.data() + static_cast<std::size_t>(i) * 2 * n;
                for (int j = 0; j < n; ++j) {
                    grow[j] += d * h_prev[j];
                    dh[l][j] += d * wrow[j];
                    grow[n + j] += d * cache.input[l][j];
                    dinput[j] += d * wrow[n + j];
                }
                gb[i] += d;
            }
        };
        acc(lw.W_i, gl.W_i, gl.b_i, dai);
        acc(lw.W_f, gl.W_f, gl.b_f, daf);
        acc(lw.W_o, gl.W_o, gl.b_o, dao);
        acc(lw.W_c, gl.W_c, gl.b_c, dag);

        // propagate to the layer below through the dropout mask
        if (l > 0) {
            if (!cache.mask[l - 1].empty())
                for (int j = 0; j < n; ++j) dh[l - 1][j] += dinput[j] * cache.mask[l - 1][j];
            else
                for (int j = 0; j < n; ++j) dh[l - 1][j] += dinput[j];
        }
        // l == 0: dinput is the data gradient, discarded
    }
}

}  // namespace mvcov
