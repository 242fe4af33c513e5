#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "mvcov/errors.hpp"
#include "mvcov/lstm.hpp"
#include "mvcov/rng.hpp"

using namespace mvcov;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Sum over steps of sum(ctilde^2) on fixed inputs; the scalar objective used
// for the finite-difference check.
double seq_loss(const LstmWeights& w, const std::vector<Vec>& xs,
                std::vector<LstmStepCache>* caches = nullptr) {
    LstmState state = LstmState::zeros(w.n, w.num_layers());
    double loss = 0.0;
    for (const Vec& x : xs) {
        LstmStepCache cache;
        const Vec ct = lstm_step(w, state, x, DropoutMode::eval(), nullptr,
                                 caches ? &cache : nullptr);
        if (caches) {
            caches->push_back(cache);
            (*caches).back().ctilde = ct;
        }
        for (double v : ct) loss += v * v;
    }
    return loss;
}

}  // namespace

TEST_CASE("zero weights from zero state emit exact zeros") {
    LstmWeights w = LstmWeights::zeros(2, 3);
    LstmState state = LstmState::zeros(2, 3);
    const Vec ct = lstm_step(w, state, Vec{0.7, -0.3}, DropoutMode::eval());
    for (double v : ct) CHECK(v == 0.0);
    for (const Vec& h : state.h)
        for (double v : h) CHECK(v == 0.0);
    // gates are 0.5, so c advances as 0.5 * tanh-input = 0; repeat stays zero
    const Vec ct2 = lstm_step(w, state, Vec{1.0, 1.0}, DropoutMode::eval());
    for (double v : ct2) CHECK(v == 0.0);
}

TEST_CASE("zero weights halve the carried cell") {
    LstmWeights w = LstmWeights::zeros(1, 3);
    LstmState state = LstmState::zeros(1, 3);
    state.c[0][0] = 1.0;
    LstmStepCache cache;
    lstm_step(w, state, Vec{0.0}, DropoutMode::eval(), nullptr, &cache);
    CHECK(state.c[0][0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(state.h[0][0] == doctest::Approx(0.5 * std::tanh(0.5)).epsilon(1e-14));
}

TEST_CASE("saturated gates kill the cell") {
    LstmWeights w = LstmWeights::zeros(1, 3);
    for (auto& layer : w.layers) {
        layer.b_i[0] = 100.0;
        layer.b_o[0] = 100.0;
        layer.b_f[0] = -100.0;
    }
    LstmState state = LstmState::zeros(1, 3);
    state.c[0][0] = 5.0;  // should be forgotten
    lstm_step(w, state, Vec{1.0}, DropoutMode::eval());
    for (int l = 0; l < 3; ++l) {
        CHECK(std::abs(state.c[l][0]) < 1e-10);
        CHECK(std::abs(state.h[l][0]) < 1e-10);
    }
}

TEST_CASE("eval mode is deterministic") {
    Rng rng(4);
    const LstmWeights w = LstmWeights::init(2, 3, rng);
    LstmState s1 = LstmState::zeros(2, 3);
    LstmState s2 = LstmState::zeros(2, 3);
    const Vec x{0.4, -1.2};
    const Vec a = lstm_step(w, s1, x, DropoutMode::eval());
    const Vec b = lstm_step(w, s2, x, DropoutMode::eval());
    CHECK(a == b);
    CHECK(s1.h == s2.h);
    CHECK(s1.c == s2.c);
}

TEST_CASE("hidden states stay within the tanh bound") {
    Rng rng(9);
    const LstmWeights w = LstmWeights::init(3, 4, rng);
    LstmState state = LstmState::zeros(3, 4);
    for (int t = 0; t < 50; ++t) {
        Vec x(3);
        for (double& v : x) v = 3.0 * rng.normal();
        lstm_step(w, state, x, DropoutMode::eval());
        for (const Vec& h : state.h)
            for (double v : h) CHECK(std::abs(v) <= 1.0);
    }
}

TEST_CASE("shape invariant across n and L") {
    Rng rng(2);
    for (int n = 1; n <= 4; ++n)
        for (int L = 3; L <= 5; ++L) {
            const LstmWeights w = LstmWeights::init(n, L, rng);
            LstmState state = LstmState::zeros(n, L);
            const Vec ct = lstm_step(w, state, Vec(n, 0.1), DropoutMode::eval());
            CHECK(static_cast<int>(ct.size()) == n * (n + 1) / 2);
        }
}

TEST_CASE("init sets forget bias, beta, zero projection bias") {
    Rng rng(1);
    const LstmWeights w = LstmWeights::init(2, 3, rng);
    CHECK(w.beta == 1.0);
    for (const auto& layer : w.layers)
        for (double v : layer.b_f) CHECK(v == 1.0);
    for (double v : w.proj_b) CHECK(v == 0.0);
    // Xavier bound for a 2n -> n gate: sqrt(6/(2n+n))
    const double bound = std::sqrt(6.0 / (2 * 2 + 2));
    for (const auto& layer : w.layers)
        for (int i = 0; i < layer.W_i.rows(); ++i)
            for (int j = 0; j < layer.W_i.cols(); ++j)
                CHECK(std::abs(layer.W_i(i, j)) <= bound);
}

TEST_CASE("flatten and unflatten round trip") {
    Rng rng(6);
    const LstmWeights w = LstmWeights::init(3, 3, rng);
    Vec flat(w.param_count());
    w.flatten_into(flat.data());
    LstmWeights w2 = LstmWeights::zeros(3, 3);
    w2.unflatten_from(flat.data());
    Vec flat2(w2.param_count());
    w2.flatten_into(flat2.data());
    CHECK(flat == flat2);
    CHECK(w2.beta == w.beta);
}

TEST_CASE("build_ct fixtures") {
    SUBCASE("zero vector maps to zero matrix") {
        const LowerTriangular c = build_ct(Vec(6, 0.0), 1.0);
        for (double v : c.packed()) CHECK(v == 0.0);
    }
    SUBCASE("scalar Swish at 2") {
        const LowerTriangular c = build_ct(Vec{2.0}, 1.0);
        CHECK(c.at(0, 0) == doctest::Approx(2.0 * sigmoid(2.0)).epsilon(1e-12));
        CHECK(c.at(0, 0) == doctest::Approx(1.76159).epsilon(1e-5));
    }
    SUBCASE("beta=0 halves the diagonal, off-diagonal untouched") {
        const LowerTriangular c = build_ct(Vec{1.0, 5.0, -1.0}, 0.0);
        CHECK(c.at(0, 0) == doctest::Approx(0.5));
        CHECK(c.at(1, 0) == 5.0);
        CHECK(c.at(1, 1) == doctest::Approx(-0.5));
    }
    SUBCASE("non-triangular length is rejected") {
        CHECK_THROWS_AS(build_ct(Vec(4, 0.0), 1.0), ArgumentError);
    }
}

TEST_CASE("Swish diagonal global minimum respects -0.2785/beta") {
    for (double beta : {0.5, 1.0, 2.0, 5.0}) {
        double min_val = 0.0;
        for (int i = 0; i <= 200000; ++i) {
            const double d = -50.0 / beta + i * (100.0 / beta) / 200000;
            min_val = std::min(min_val, d * sigmoid(beta * d));
        }
        CHECK(min_val >= -0.2785 / beta);
    }
}

TEST_CASE("Ct Ct' is PSD for random outputs") {
    Rng rng(14);
    for (int trial = 0; trial < 200; ++trial) {
        Vec ctilde(6);
        for (double& v : ctilde) v = 3.0 * rng.normal();
        const Mat outer = build_ct(ctilde, 1.0).outer();
        Vec v(3);
        for (double& e : v) e = rng.normal();
        double quad = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) quad += v[i] * outer(i, j) * v[j];
        CHECK(quad >= -1e-10);
    }
}

TEST_CASE("build_ct_backward matches finite differences") {
    Rng rng(21);
    Vec ctilde(6);
    for (double& v : ctilde) v = rng.normal();
    Vec dct(6);
    for (double& v : dct) v = rng.normal();
    const double beta = 0.8;

    double dbeta = 0.0;
    const Vec dctilde = build_ct_backward(ctilde, beta, dct, dbeta);

    auto loss = [&](const Vec& c, double b) {
        const LowerTriangular out = build_ct(c, b);
        double s = 0.0;
        for (std::size_t k = 0; k < out.packed().size(); ++k) s += dct[k] * out.packed()[k];
        return s;
    };
    const double h = 1e-6;
    for (int k = 0; k < 6; ++k) {
        Vec up = ctilde, dn = ctilde;
        up[k] += h;
        dn[k] -= h;
        const double fd = (loss(up, beta) - loss(dn, beta)) / (2 * h);
        CHECK(dctilde[k] == doctest::Approx(fd).epsilon(1e-6));
    }
    const double fd_beta = (loss(ctilde, beta + h) - loss(ctilde, beta - h)) / (2 * h);
    CHECK(dbeta == doctest::Approx(fd_beta).epsilon(1e-6));
}

TEST_CASE("train mode with p=0 equals eval mode exactly") {
    Rng rng(3);
    const LstmWeights w = LstmWeights::init(2, 3, rng);
    LstmState se = LstmState::zeros(2, 3);
    LstmState st = LstmState::zeros(2, 3);
    Rng drop(99);
    for (int t = 0; t < 5; ++t) {
        const Vec x{0.1 * t, -0.2 * t};
        const Vec a = lstm_step(w, se, x, DropoutMode::eval());
        const Vec b = lstm_step(w, st, x, DropoutMode::training(0.0), &drop);
        CHECK(a == b);
    }
    CHECK(se.h == st.h);
}

TEST_CASE("dropout masks are seeded and change the output") {
    Rng rng(8);
    const LstmWeights w = LstmWeights::init(2, 3, rng);
    const Vec x{1.0, -1.0};
    auto run = [&](std::uint64_t seed) {
        LstmState state = LstmState::zeros(2, 3);
        Rng drop(seed);
        Vec out;
        for (int t = 0; t < 8; ++t) out = lstm_step(w, state, x, DropoutMode::training(0.5), &drop);
        return out;
    };
    CHECK(run(5) == run(5));
    LstmState state = LstmState::zeros(2, 3);
    Vec eval_out;
    for (int t = 0; t < 8; ++t) eval_out = lstm_step(w, state, x, DropoutMode::eval());
    CHECK(run(5) != eval_out);
}

TEST_CASE("BPTT gradient of sum(ctilde^2) matches finite differences") {
    Rng rng(42);
    LstmWeights w = LstmWeights::init(2, 3, rng);
    // shrink weights so activations stay in the smooth region
    Vec flat(w.param_count());
    w.flatten_into(flat.data());
    for (double& v : flat) v *= 0.5;
    w.unflatten_from(flat.data());

    std::vector<Vec> xs;
    for (int t = 0; t < 6; ++t) xs.push_back(Vec{0.8 * rng.normal(), 0.8 * rng.normal()});

    std::vector<LstmStepCache> caches;
    seq_loss(w, xs, &caches);

    LstmWeights grad = LstmWeights::zeros(2, 3);
    grad.beta = 0.0;  // zeros() gives the parameter default, not a zero gradient
    std::vector<Vec> dh(3, Vec(2, 0.0)), dc(3, Vec(2, 0.0));
    for (int t = static_cast<int>(xs.size()) - 1; t >= 0; --t) {
        Vec dct(caches[t].ctilde.size());
        for (std::size_t k = 0; k < dct.size(); ++k) dct[k] = 2.0 * caches[t].ctilde[k];
        lstm_backward_step(w, caches[t], dct, dh, dc, grad);
    }
    Vec g(grad.param_count());
    grad.flatten_into(g.data());

    w.flatten_into(flat.data());
    const double h = 1e-4;
    double max_rel = 0.0;
    for (std::size_t k = 0; k < flat.size(); ++k) {
        if (std::abs(g[k]) <= 1e-8) continue;
        LstmWeights pert = w;
        Vec f = flat;
        f[k] = flat[k] + h;
        pert.unflatten_from(f.data());
        const double up = seq_loss(pert, xs);
        f[k] = flat[k] - h;
        pert.unflatten_from(f.data());
        const double dn = seq_loss(pert, xs);
        f[k] = flat[k] + 2 * h;
        pert.unflatten_from(f.data());
        const double up2 = seq_loss(pert, xs);
        f[k] = flat[k] - 2 * h;
        pert.unflatten_from(f.data());
        const double dn2 = seq_loss(pert, xs);
        const double fd1 = (up - dn) / (2 * h);
        const double fd2 = (up2 - dn2) / (4 * h);
        const double fd = (4.0 * fd1 - fd2) / 3.0;
        const double rel = std::abs(g[k] - fd) / std::max(std::abs(g[k]), std::abs(fd));
        max_rel = std::max(max_rel, rel);
    }
    CHECK(max_rel < 1e-4);
}
