#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "mvcov/errors.hpp"
#include "mvcov/portfolio.hpp"
#include "mvcov/rng.hpp"

using namespace mvcov;

namespace {

Mat random_spd(int n, Rng& rng) {
    Mat a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = rng.normal();
    Mat m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int k = 0; k < n; ++k) s += a(i, k) * a(j, k);
            m(i, j) = s;
        }
    for (int i = 0; i < n; ++i) m(i, i) += 0.5;
    return m;
}

double quad(const Mat& H, const Vec& w) {
    double s = 0.0;
    for (int i = 0; i < H.rows(); ++i)
        for (int j = 0; j < H.cols(); ++j) s += w[i] * H(i, j) * w[j];
    return s;
}

FitResult constant_fit(const Mat& sigma, const ReturnsPanel& panel) {
    FitResult f;
    f.model = ModelKind::scalar_bekk;
    f.bekk = std::make_shared<ScalarBekkParams>();
    f.bekk->a = 0.0;
    f.bekk->b = 0.0;
    f.bekk->C = cholesky(sigma);
    f.bekk_carry = BekkCarry{sigma, panel.row(panel.val_end - 1)};
    return f;
}

}  // namespace

TEST_CASE("gmv weight fixtures") {
    const Vec w1 = gmv_weights(SPDMatrix(Mat::identity(4)));
    for (double w : w1) CHECK(w == doctest::Approx(0.25).epsilon(1e-12));

    Mat d(2, 2);
    d(0, 0) = 1.0;
    d(1, 1) = 2.0;
    const Vec w2 = gmv_weights(SPDMatrix(d));
    CHECK(w2[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(w2[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("gmv weights are optimal, fully invested, and scale invariant") {
    Rng rng(7);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(4));
        const Mat H = random_spd(n, rng);
        const Vec w = gmv_weights(SPDMatrix(H));
        double sum = 0.0;
        for (double v : w) sum += v;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));

        const double best = quad(H, w);
        for (int k = 0; k < 200; ++k) {
            Vec v(n);
            double vs = 0.0;
            for (double& x : v) {
                x = rng.normal();
                vs += x;
            }
            if (std::abs(vs) < 1e-8) continue;
            for (double& x : v) x /= vs;
            CHECK(best <= quad(H, v) + 1e-12);
        }

        Mat scaled = H;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) scaled(i, j) *= 3.7;
        const Vec ws = gmv_weights(SPDMatrix(scaled));
        for (int i = 0; i < n; ++i) CHECK(ws[i] == doctest::Approx(w[i]).epsilon(1e-10));
    }
}

TEST_CASE("normal quantile and pdf fixtures") {
    CHECK(normal_quantile(0.05) == doctest::Approx(-1.6448536269514722).epsilon(1e-10));
    CHECK(normal_quantile(0.01) == doctest::Approx(-2.3263478740408408).epsilon(1e-10));
    CHECK(normal_quantile(0.5) == doctest::Approx(0.0));
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-10));
    CHECK(normal_pdf(0.0) == doctest::Approx(1.0 / std::sqrt(2.0 * M_PI)).epsilon(1e-14));
    CHECK_THROWS_AS(normal_quantile(0.0), ArgumentError);
    CHECK_THROWS_AS(normal_quantile(1.0), ArgumentError);
}

TEST_CASE("quantile loss fixtures") {
    CHECK(quantile_loss_term(-1.0, -2.0, 0.05) == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(quantile_loss_term(-1.0, -0.5, 0.05) == doctest::Approx(0.475).epsilon(1e-9));
    CHECK(quantile_loss_term(0.0, 0.0, 0.05) == 0.0);
}

TEST_CASE("joint AL loss fixtures") {
    const double alpha = 0.05, es = -2.0, q = -1.5;
    // boundary r = q: second term vanishes
    CHECK(joint_al_loss(q, q, es, alpha) == doctest::Approx(-std::log(0.475)).epsilon(1e-12));
    // r = 0: -ln(0.475) + 1.5*0.05/(0.05*2) = -ln(0.475) + 0.75
    const double expected = -std::log(0.475) + 0.75;
    CHECK(joint_al_loss(0.0, q, es, alpha) == doctest::Approx(expected).epsilon(1e-9));
    CHECK(joint_al_loss(0.0, q, es, alpha) == doctest::Approx(1.49444).epsilon(1e-5));
    CHECK_THROWS_AS(joint_al_loss(0.0, -1.0, 0.5, alpha), ArgumentError);
}

TEST_CASE("return metric fixtures") {
    CHECK(annualized_return(Vec(100, 0.1)) == doctest::Approx(25.2).epsilon(1e-12));
    CHECK(annualized_volatility(Vec(100, 0.1)) == doctest::Approx(0.0));
    CHECK(max_drawdown(Vec(100, 0.1)) == doctest::Approx(0.0));

    // wealth path 1.0 -> 1.2 -> 0.9 -> 1.0
    const Vec r{20.0, -25.0, 100.0 / 9.0};
    CHECK(max_drawdown(r) == doctest::Approx(-0.25).epsilon(1e-12));

    // sd with T-1 denominator
    const Vec two{1.0, 3.0};
    CHECK(annualized_volatility(two) == doctest::Approx(std::sqrt(2.0) * std::sqrt(252.0)).epsilon(1e-12));
}

TEST_CASE("empirical quantile minimizes the summed quantile loss") {
    Rng rng(11);
    Vec r(4000);
    for (double& v : r) v = rng.normal();
    const double alpha = 0.05;
    Vec sorted = r;
    std::sort(sorted.begin(), sorted.end());
    const double empirical_q = sorted[static_cast<int>(alpha * r.size())];

    double best_q = 0.0, best_loss = 1e300;
    for (double q = -3.0; q <= 0.0; q += 0.01) {
        double loss = 0.0;
        for (double v : r) loss += quantile_loss_term(v, q, alpha);
        if (loss < best_loss) {
            best_loss = loss;
            best_q = q;
        }
    }
    CHECK(best_q == doctest::Approx(empirical_q).epsilon(0.05));
}

TEST_CASE("joint AL loss is minimized at the Gaussian VaR and ES") {
    Rng rng(13);
    Vec r(20000);
    for (double& v : r) v = rng.normal();
    const double alpha = 0.05;
    const double z = normal_quantile(alpha);
    const double true_es = -normal_pdf(z) / alpha;

    double best_q = 0.0, best_es = 0.0, best_loss = 1e300;
    for (double q = -2.2; q <= -1.0; q += 0.05)
        for (double es = -2.8; es <= -1.4; es += 0.05) {
            if (es > q) continue;
            double loss = 0.0;
            for (double v : r) loss += joint_al_loss(v, q, es, alpha);
            if (loss < best_loss) {
                best_loss = loss;
                best_q = q;
                best_es = es;
            }
        }
    CHECK(std::abs(best_q - z) <= 0.075);
    CHECK(std::abs(best_es - true_es) <= 0.075);
}

TEST_CASE("backtest series applies GMV or fixed weights per period") {
    SimulationSpec spec;
    spec.n = 2;
    spec.T = 200;
    spec.seed = 5;
    Mat sigma(2, 2);
    sigma(0, 0) = 1.0;
    sigma(1, 1) = 4.0;
    spec.iid_covariance = sigma;
    const ReturnsPanel panel = simulate(spec);

    CovPath forecasts;
    for (int t = panel.val_end; t < panel.T(); ++t) forecasts.H.emplace_back(sigma);

    const BacktestResult gmv = backtest_series("gmv", forecasts, panel, panel.val_end,
                                               nullptr, {0.01, 0.05});
    const Vec w = gmv_weights(SPDMatrix(sigma));
    for (int i = 0; i < forecasts.length(); ++i) {
        const Vec r = panel.row(panel.val_end + i);
        CHECK(gmv.returns[i] == doctest::Approx(w[0] * r[0] + w[1] * r[1]).epsilon(1e-12));
    }

    const Vec ew_w{0.5, 0.5};
    const BacktestResult ew = backtest_series("ew", forecasts, panel, panel.val_end,
                                              &ew_w, {0.01, 0.05});
    for (int i = 0; i < forecasts.length(); ++i) {
        const Vec r = panel.row(panel.val_end + i);
        CHECK(ew.returns[i] == doctest::Approx(0.5 * (r[0] + r[1])).epsilon(1e-12));
    }

    REQUIRE(gmv.levels.size() == 2);
    for (const RiskSeries& rs : gmv.levels) {
        REQUIRE(rs.var_series.size() == gmv.returns.size());
        for (std::size_t i = 0; i < rs.var_series.size(); ++i) {
            CHECK(rs.var_series[i] < 0.0);
            CHECK(rs.es_series[i] < rs.var_series[i]);
        }
    }
    // the 1% VaR sits further in the tail than the 5% VaR
    CHECK(gmv.levels[0].alpha == doctest::Approx(0.01));
    CHECK(gmv.levels[0].var_series[0] < gmv.levels[1].var_series[0]);
}

TEST_CASE("GMV under the true covariance has lower volatility than EW") {
    SimulationSpec spec;
    spec.n = 3;
    spec.T = 2000;
    spec.seed = 9;
    Mat sigma = Mat::identity(3);
    sigma(0, 0) = 0.5;
    sigma(1, 1) = 2.0;
    sigma(2, 2) = 6.0;
    spec.iid_covariance = sigma;
    const ReturnsPanel panel = simulate(spec);

    const std::vector<FitResult> fits{constant_fit(sigma, panel)};
    const std::vector<ModelBacktest> results = backtest(fits, panel);
    REQUIRE(results.size() == 1);
    CHECK(results[0].gmv.av < results[0].ew.av);
    CHECK(results[0].gmv.mdd <= 0.0);
    CHECK(results[0].ew.mdd <= 0.0);
}

TEST_CASE("backtest qloss and jointloss aggregate as sum and mean") {
    SimulationSpec spec;
    spec.n = 2;
    spec.T = 120;
    spec.seed = 3;
    const ReturnsPanel panel = simulate(spec);
    CovPath forecasts;
    for (int t = panel.val_end; t < panel.T(); ++t) forecasts.H.emplace_back(Mat::identity(2));
    const BacktestResult res = backtest_series("x", forecasts, panel, panel.val_end,
                                               nullptr, {0.05});
    const RiskSeries& rs = res.levels[0];
    double qsum = 0.0, jsum = 0.0;
    for (std::size_t i = 0; i < res.returns.size(); ++i) {
        qsum += quantile_loss_term(res.returns[i], rs.var_series[i], 0.05);
        jsum += joint_al_loss(res.returns[i], rs.var_series[i], rs.es_series[i], 0.05);
    }
    CHECK(rs.qloss == doctest::Approx(qsum).epsilon(1e-12));
    CHECK(rs.jointloss == doctest::Approx(jsum / res.returns.size()).epsilon(1e-12));
}
