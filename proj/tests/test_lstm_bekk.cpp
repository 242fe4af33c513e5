#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "mvcov/data.hpp"
#include "mvcov/errors.hpp"
#include "mvcov/lstm_bekk.hpp"
#include "mvcov/rng.hpp"

using namespace mvcov;

namespace {

ReturnsPanel small_panel(int T, int n, std::uint64_t seed) {
    SimulationSpec spec;
    spec.n = n;
    spec.T = T;
    spec.seed = seed;
    return simulate(spec);
}

LstmBekkParams make_params(int n, double a, double b, std::uint64_t seed, double weight_scale) {
    LstmBekkParams p;
    Mat c(n, n);
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < i; ++j) c(i, j) = 0.1 * rng.normal();
        c(i, i) = 0.3 + 0.3 * rng.uniform();
    }
    p.C = LowerTriangular::pack(c);
    p.a = a;
    p.b = b;
    p.lstm = LstmWeights::init(n, 3, rng);
    if (weight_scale != 1.0) {
        Vec flat(p.lstm.param_count());
        p.lstm.flatten_into(flat.data());
        for (double& v : flat) v *= weight_scale;
        p.lstm.unflatten_from(flat.data());
        p.lstm.beta = 1.0;
    }
    return p;
}

LstmBekkParams zero_lstm_params(int n, double a, double b) {
    LstmBekkParams p = make_params(n, a, b, 1, 1.0);
    p.lstm = LstmWeights::zeros(n, 3);
    return p;
}

}  // namespace

TEST_CASE("zero LSTM reduces exactly to scalar BEKK") {
    const ReturnsPanel panel = small_panel(60, 3, 5);
    const LstmBekkParams p = zero_lstm_params(3, 0.06, 0.88);
    ScalarBekkParams bekk;
    bekk.C = p.C;
    bekk.a = p.a;
    bekk.b = p.b;
    const SPDMatrix h0(panel.train_covariance());
    const CovPath lb = lstm_bekk_filter(p, panel, h0);
    const CovPath sb = bekk_filter(bekk, panel, h0);
    REQUIRE(lb.length() == sb.length());
    for (int i = 0; i < lb.length(); ++i) CHECK(lb.H[i].values() == sb.H[i].values());
}

TEST_CASE("zero LSTM with a=b=0 is constant CC'") {
    const ReturnsPanel panel = small_panel(30, 2, 6);
    const LstmBekkParams p = zero_lstm_params(2, 0.0, 0.0);
    const Mat cc = p.C.outer();
    const CovPath path = lstm_bekk_filter(p, panel, SPDMatrix(cc));
    for (const SPDMatrix& H : path.H) CHECK(H.values() == cc);
}

TEST_CASE("Swish saturation fixture: projection bias 1, large beta") {
    // n=1, C=[1], zero LSTM except proj bias=(1): C_t ~ 1 for beta=20, so
    // H_t ~ 1 + 1 = 2 with a=b=0.
    LstmBekkParams p;
    LowerTriangular c(1);
    c.at(0, 0) = 1.0;
    p.C = c;
    p.a = 0.0;
    p.b = 0.0;
    p.lstm = LstmWeights::zeros(1, 3);
    p.lstm.proj_b[0] = 1.0;
    p.lstm.beta = 20.0;
    const ReturnsPanel panel = small_panel(20, 1, 7);
    const CovPath path = lstm_bekk_filter(p, panel, SPDMatrix(Mat::identity(1)));
    for (const SPDMatrix& H : path.H) CHECK(H.values()(0, 0) == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("streaming forecast reproduces the batch filter bit-for-bit") {
    const ReturnsPanel panel = small_panel(50, 2, 8);
    const LstmBekkParams p = make_params(2, 0.05, 0.85, 3, 0.3);
    const SPDMatrix h0(panel.train_covariance());
    const CovPath batch = lstm_bekk_filter(p, panel, h0);

    LstmBekkCarry carry{h0.values(), panel.row(0), LstmState::zeros(2, 3)};
    for (int t = 1; t < panel.T(); ++t) {
        const SPDMatrix H = forecast_one_step(p, carry, panel.row(t));
        CHECK(H.values() == batch.H[t - 1].values());
    }
}

TEST_CASE("carry reuse across spans equals the batch filter") {
    const ReturnsPanel panel = small_panel(40, 2, 9);
    const LstmBekkParams p = make_params(2, 0.04, 0.9, 4, 0.3);
    const SPDMatrix h0(panel.train_covariance());
    const CovPath batch = lstm_bekk_filter(p, panel, h0);
    LstmBekkCarry carry{h0.values(), panel.row(0), LstmState::zeros(2, 3)};
    const CovPath s1 = lstm_bekk_filter_span(p, panel, 1, 15, carry);
    const CovPath s2 = lstm_bekk_filter_span(p, panel, 15, 25, carry);
    const CovPath s3 = lstm_bekk_filter_span(p, panel, 25, panel.T(), carry);
    REQUIRE(s1.length() + s2.length() + s3.length() == batch.length());
    int i = 0;
    for (const CovPath* s : {&s1, &s2, &s3})
        for (const SPDMatrix& H : s->H) CHECK(H.values() == batch.H[i++].values());
}

TEST_CASE("filtered paths stay PD for randomized parameter draws") {
    Rng rng(55);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(3));
        const double s = 0.3 + 0.6 * rng.uniform();
        const double phi = rng.uniform();
        const LstmBekkParams p = make_params(n, s * phi, s * (1 - phi), 1000 + trial, 0.5);
        const ReturnsPanel panel = small_panel(80, n, 2000 + trial);
        const CovPath path = lstm_bekk_filter(p, panel, SPDMatrix(panel.train_covariance()));
        for (const SPDMatrix& H : path.H) CHECK_NOTHROW(cholesky(H.values()));
    }
}

TEST_CASE("simulate_lstm_bekk is deterministic and seed-sensitive") {
    const LstmBekkParams p = make_params(2, 0.05, 0.85, 11, 0.3);
    const ReturnsPanel a = simulate_lstm_bekk(p, 100, 7);
    const ReturnsPanel b = simulate_lstm_bekk(p, 100, 7);
    CHECK(a.values == b.values);
    const ReturnsPanel c = simulate_lstm_bekk(p, 100, 8);
    CHECK(a.values != c.values);
    CHECK(a.T() == 100);
    CHECK(a.n() == 2);
}

TEST_CASE("theorem bound: constant model is tight") {
    const LstmBekkParams p = zero_lstm_params(2, 0.0, 0.0);
    const TheoremBoundReport rep = check_theorem_bound(p, 200, 10, 3);
    const double cc_norm = frobenius_norm(p.C.outer());
    CHECK(rep.lhs == doctest::Approx(cc_norm).epsilon(1e-12));
    CHECK(rep.M == doctest::Approx(cc_norm).epsilon(1e-12));
    CHECK(rep.lhs <= rep.rhs * (1.0 + 3.0 / std::sqrt(200.0)));
}

TEST_CASE("theorem bound holds for random parameters") {
    const LstmBekkParams p = make_params(2, 0.05, 0.8, 13, 0.5);
    const TheoremBoundReport rep = check_theorem_bound(p, 2000, 50, 5);
    CHECK(rep.n_paths == 2000);
    CHECK(rep.k == 50);
    CHECK(rep.holds(3.0 / std::sqrt(2000.0)));
}

TEST_CASE("theorem bound k=1 unrolls to M + (a+b)||H0||") {
    const LstmBekkParams p = make_params(2, 0.1, 0.7, 17, 0.4);
    const TheoremBoundReport rep = check_theorem_bound(p, 100, 1, 9);
    CHECK(rep.rhs == doctest::Approx(rep.M + (p.a + p.b) * rep.h0_norm).epsilon(1e-12));
}

TEST_CASE("theorem rhs is monotone in k when ||H0|| < M/(1-a-b)") {
    const LstmBekkParams p = make_params(2, 0.05, 0.85, 19, 0.4);
    const TheoremBoundReport rep = check_theorem_bound(p, 200, 50, 21);
    REQUIRE(rep.h0_norm < rep.M / (1.0 - p.a - p.b));
    const double s = p.a + p.b;
    auto rhs_at = [&](int k) {
        return (1.0 - std::pow(s, k)) / (1.0 - s) * rep.M + std::pow(s, k) * rep.h0_norm;
    };
    CHECK(rhs_at(50) == doctest::Approx(rep.rhs).epsilon(1e-12));
    for (int k = 2; k <= 50; ++k) CHECK(rhs_at(k) >= rhs_at(k - 1));
}

TEST_CASE("theorem check rejects a+b >= 1") {
    LstmBekkParams p = zero_lstm_params(2, 0.5, 0.5);
    CHECK_THROWS_AS(check_theorem_bound(p, 10, 5, 1), ArgumentError);
}

TEST_CASE("params validate their constraints") {
    LstmBekkParams p = zero_lstm_params(2, 0.05, 0.9);
    CHECK_NOTHROW(p.validate());
    p.a = -0.1;
    CHECK_THROWS_AS(p.validate(), ArgumentError);
    p.a = 0.6;
    p.b = 0.5;
    CHECK_THROWS_AS(p.validate(), ArgumentError);
}
