#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mvcov/checkpoint.hpp"
#include "mvcov/data.hpp"
#include "mvcov/errors.hpp"

using namespace mvcov;

namespace {

const char* kPath = "/tmp/mvcov_test.ckpt";

ReturnsPanel panel() {
    SimulationSpec spec;
    spec.n = 2;
    spec.T = 200;
    spec.seed = 11;
    return simulate(spec);
}

FitResult tiny_fit(ModelKind kind) {
    TrainConfig cfg;
    cfg.max_epochs = 5;
    cfg.patience = 5;
    cfg.seed = 3;
    return fit(kind, panel(), cfg);
}

std::vector<char> read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::vector<char>((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
}

void write_all(const std::string& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Vec flat(const LstmWeights& w) {
    Vec v(w.param_count());
    w.flatten_into(v.data());
    return v;
}

}  // namespace

TEST_CASE("scalar bekk checkpoint round trips bit-exactly") {
    Checkpoint ck;
    ck.fit = tiny_fit(ModelKind::scalar_bekk);
    ck.config_hash = 0x1234567890abcdefULL;
    ck.panel_hash = 0xfedcba0987654321ULL;
    save_checkpoint(ck, kPath);
    const Checkpoint back = load_checkpoint(kPath);

    CHECK(back.config_hash == ck.config_hash);
    CHECK(back.panel_hash == ck.panel_hash);
    CHECK(back.fit.model == ModelKind::scalar_bekk);
    CHECK(back.fit.bekk->a == ck.fit.bekk->a);
    CHECK(back.fit.bekk->b == ck.fit.bekk->b);
    CHECK(back.fit.bekk->C.packed() == ck.fit.bekk->C.packed());
    CHECK(back.fit.train_nll == ck.fit.train_nll);
    CHECK(back.fit.val_nll == ck.fit.val_nll);
    CHECK(back.fit.epochs_run == ck.fit.epochs_run);
    CHECK(back.fit.jitter_warning == ck.fit.jitter_warning);
    REQUIRE(back.fit.bekk_carry.has_value());
    CHECK(back.fit.bekk_carry->H_prev == ck.fit.bekk_carry->H_prev);
    CHECK(back.fit.bekk_carry->r_prev == ck.fit.bekk_carry->r_prev);
    std::remove(kPath);
}

TEST_CASE("dcc checkpoint round trips bit-exactly") {
    Checkpoint ck;
    ck.fit = tiny_fit(ModelKind::dcc);
    save_checkpoint(ck, kPath);
    const Checkpoint back = load_checkpoint(kPath);

    CHECK(back.fit.model == ModelKind::dcc);
    REQUIRE(back.fit.dcc);
    CHECK(back.fit.dcc->a == ck.fit.dcc->a);
    CHECK(back.fit.dcc->b == ck.fit.dcc->b);
    CHECK(back.fit.dcc->S == ck.fit.dcc->S);
    REQUIRE(back.fit.dcc->garch.size() == ck.fit.dcc->garch.size());
    for (std::size_t i = 0; i < ck.fit.dcc->garch.size(); ++i) {
        CHECK(back.fit.dcc->garch[i].omega == ck.fit.dcc->garch[i].omega);
        CHECK(back.fit.dcc->garch[i].alpha == ck.fit.dcc->garch[i].alpha);
        CHECK(back.fit.dcc->garch[i].beta == ck.fit.dcc->garch[i].beta);
    }
    REQUIRE(back.fit.dcc_carry.has_value());
    CHECK(back.fit.dcc_carry->h_prev == ck.fit.dcc_carry->h_prev);
    CHECK(back.fit.dcc_carry->Q_prev == ck.fit.dcc_carry->Q_prev);
    CHECK(back.fit.dcc_carry->r_prev == ck.fit.dcc_carry->r_prev);
    std::remove(kPath);
}

TEST_CASE("lstm bekk checkpoint round trips bit-exactly") {
    Checkpoint ck;
    ck.fit = tiny_fit(ModelKind::lstm_bekk);
    save_checkpoint(ck, kPath);
    const Checkpoint back = load_checkpoint(kPath);

    CHECK(back.fit.model == ModelKind::lstm_bekk);
    REQUIRE(back.fit.lstm_bekk);
    CHECK(back.fit.lstm_bekk->a == ck.fit.lstm_bekk->a);
    CHECK(back.fit.lstm_bekk->b == ck.fit.lstm_bekk->b);
    CHECK(back.fit.lstm_bekk->C.packed() == ck.fit.lstm_bekk->C.packed());
    CHECK(flat(back.fit.lstm_bekk->lstm) == flat(ck.fit.lstm_bekk->lstm));
    CHECK(back.fit.lstm_bekk->lstm.beta == ck.fit.lstm_bekk->lstm.beta);
    REQUIRE(back.fit.lstm_carry.has_value());
    CHECK(back.fit.lstm_carry->H_prev == ck.fit.lstm_carry->H_prev);
    CHECK(back.fit.lstm_carry->r_prev == ck.fit.lstm_carry->r_prev);
    CHECK(back.fit.lstm_carry->state.h == ck.fit.lstm_carry->state.h);
    CHECK(back.fit.lstm_carry->state.c == ck.fit.lstm_carry->state.c);
    std::remove(kPath);
}

TEST_CASE("saving twice yields identical bytes") {
    Checkpoint ck;
    ck.fit = tiny_fit(ModelKind::scalar_bekk);
    save_checkpoint(ck, kPath);
    const std::vector<char> first = read_all(kPath);
    save_checkpoint(ck, kPath);
    CHECK(read_all(kPath) == first);
    std::remove(kPath);
}

TEST_CASE("corrupted checkpoints are rejected") {
    Checkpoint ck;
    ck.fit = tiny_fit(ModelKind::scalar_bekk);
    save_checkpoint(ck, kPath);
    const std::vector<char> good = read_all(kPath);

    SUBCASE("bad magic") {
        std::vector<char> bad = good;
        bad[0] = 'X';
        write_all(kPath, bad);
        CHECK_THROWS_AS(load_checkpoint(kPath), DataError);
    }
    SUBCASE("unsupported version") {
        std::vector<char> bad = good;
        bad[8] = 99;
        write_all(kPath, bad);
        CHECK_THROWS_AS(load_checkpoint(kPath), DataError);
    }
    SUBCASE("truncation") {
        std::vector<char> bad(good.begin(), good.end() - 9);
        write_all(kPath, bad);
        CHECK_THROWS_AS(load_checkpoint(kPath), DataError);
    }
    SUBCASE("trailing bytes") {
        std::vector<char> bad = good;
        bad.push_back('\0');
        write_all(kPath, bad);
        CHECK_THROWS_AS(load_checkpoint(kPath), DataError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_checkpoint("/tmp/mvcov_no_such.ckpt"), DataError);
    }
    std::remove(kPath);
}
