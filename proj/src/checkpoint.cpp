#include "mvcov/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mvcov/errors.hpp"

namespace mvcov {

namespace {

constexpr char kMagic[8] = {'M', 'V', 'C', 'V', 'C', 'K', 'P', 'T'};

struct Writer {
    std::string buf;

    void u8(std::uint8_t v) { buf.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void f64(double d) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        u64(bits);
    }
    void vec(const Vec& v) {
        u32(static_cast<std::uint32_t>(v.size()));
        for (double d : v) f64(d);
    }
    void mat(const Mat& m) {
        u32(static_cast<std::uint32_t>(m.rows()));
        u32(static_cast<std::uint32_t>(m.cols()));
        const std::size_t count = static_cast<std::size_t>(m.rows()) * m.cols();
        for (std::size_t i = 0; i < count; ++i) f64(m.data()[i]);
    }
};

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t k) const {
        if (pos + k > buf.size()) throw DataError("checkpoint file truncated");
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(buf[pos++]);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, 8);
        return d;
    }
    Vec vec() {
        const std::uint32_t len = u32();
        if (len > 100000000u) throw DataError("checkpoint vector length implausible");
        Vec v(len);
        for (auto& d : v) d = f64();
        return v;
    }
    Mat mat() {
        const std::uint32_t r = u32(), c = u32();
        if (static_cast<std::uint64_t>(r) * c > 100000000ull)
            throw DataError("checkpoint matrix size implausible");
        Mat m(static_cast<int>(r), static_cast<int>(c));
        const std::size_t count = static_cast<std::size_t>(r) * c;
        for (std::size_t i = 0; i < count; ++i) m.data()[i] = f64();
        return m;
    }
};

void write_lstm_weights(Writer& w, const LstmWeights& lstm) {
    w.u32(static_cast<std::uint32_t>(lstm.n));
    w.u32(static_cast<std::uint32_t>(lstm.num_layers()));
    std::vector<double> flat(lstm.param_count());
    lstm.flatten_into(flat.data());
    for (double d : flat) w.f64(d);
}

LstmWeights read_lstm_weights(Reader& r) {
    const int n = static_cast<int>(r.u32());
    const int layers = static_cast<int>(r.u32());
    if (n < 1 || n > 10000 || layers < 1 || layers > 64)
        throw DataError("checkpoint LSTM dimensions implausible");
    LstmWeights lstm = LstmWeights::zeros(n, layers);
    std::vector<double> flat(lstm.param_count());
    for (auto& d : flat) d = r.f64();
    lstm.unflatten_from(flat.data());
    return lstm;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    Writer w;
    w.buf.append(kMagic, sizeof(kMagic));
    w.u32(Checkpoint::current_version);
    w.u64(ck.config_hash);
    w.u64(ck.panel_hash);
    w.u8(static_cast<std::uint8_t>(ck.fit.model));
    w.f64(ck.fit.train_nll);
    w.f64(ck.fit.train_nll_sum);
    w.f64(ck.fit.val_nll);
    w.u32(static_cast<std::uint32_t>(ck.fit.epochs_run));
    w.u8(ck.fit.jitter_warning ? 1 : 0);

    switch (ck.fit.model) {
        case ModelKind::scalar_bekk: {
            if (!ck.fit.bekk || !ck.fit.bekk_carry)
                throw ArgumentError("save_checkpoint: incomplete BEKK fit");
            const auto& p = *ck.fit.bekk;
            w.u32(static_cast<std::uint32_t>(p.C.dim()));
            w.f64(p.a);
            w.f64(p.b);
            w.vec(p.C.packed());
            w.mat(ck.fit.bekk_carry->H_prev);
            w.vec(ck.fit.bekk_carry->r_prev);
            break;
        }
        case ModelKind::dcc: {
            if (!ck.fit.dcc || !ck.fit.dcc_carry)
                throw ArgumentError("save_checkpoint: incomplete DCC fit");
            const auto& p = *ck.fit.dcc;
            w.u32(static_cast<std::uint32_t>(p.n()));
            for (const auto& g : p.garch) {
                w.f64(g.omega);
                w.f64(g.alpha);
                w.f64(g.beta);
            }
            w.f64(p.a);
            w.f64(p.b);
            w.mat(p.S);
            w.vec(ck.fit.dcc_carry->h_prev);
            w.mat(ck.fit.dcc_carry->Q_prev);
            w.vec(ck.fit.dcc_carry->r_prev);
            break;
        }
        case ModelKind::lstm_bekk: {
            if (!ck.fit.lstm_bekk || !ck.fit.lstm_carry)
                throw ArgumentError("save_checkpoint: incomplete LSTM-BEKK fit");
            const auto& p = *ck.fit.lstm_bekk;
            w.u32(static_cast<std::uint32_t>(p.C.dim()));
            w.f64(p.a);
            w.f64(p.b);
            w.vec(p.C.packed());
            write_lstm_weights(w, p.lstm);
            w.mat(ck.fit.lstm_carry->H_prev);
            w.vec(ck.fit.lstm_carry->r_prev);
            const auto& st = ck.fit.lstm_carry->state;
            w.u32(static_cast<std::uint32_t>(st.h.size()));
            for (const auto& v : st.h) w.vec(v);
            for (const auto& v : st.c) w.vec(v);
            break;
        }
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open checkpoint file for writing: " + path);
    out.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
    if (!out) throw DataError("failed writing checkpoint file: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint file: " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Reader r{buf};
    r.need(sizeof(kMagic));
    if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
        throw DataError("not a checkpoint file: " + path);
    r.pos = sizeof(kMagic);
    const std::uint32_t version = r.u32();
    if (version != Checkpoint::current_version)
        throw DataError("unsupported checkpoint version " + std::to_string(version));

    Checkpoint ck;
    ck.config_hash = r.u64();
    ck.panel_hash = r.u64();
    const std::uint8_t kind = r.u8();
    if (kind > 2) throw DataError("checkpoint has an unknown model kind");
    ck.fit.model = static_cast<ModelKind>(kind);
    ck.fit.train_nll = r.f64();
    ck.fit.train_nll_sum = r.f64();
    ck.fit.val_nll = r.f64();
    ck.fit.epochs_run = static_cast<int>(r.u32());
    ck.fit.jitter_warning = r.u8() != 0;

    switch (ck.fit.model) {
        case ModelKind::scalar_bekk: {
            const int n = static_cast<int>(r.u32());
            auto p = std::make_shared<ScalarBekkParams>();
            p->a = r.f64();
            p->b = r.f64();
            Vec packed = r.vec();
            if (LowerTriangular::dim_from_packed_size(packed.size()) != n)
                throw DataError("checkpoint BEKK parameter size mismatch");
            p->C = LowerTriangular(n, std::move(packed));
            ck.fit.bekk = std::move(p);
            BekkCarry carry;
            carry.H_prev = r.mat();
            carry.r_prev = r.vec();
            ck.fit.bekk_carry = std::move(carry);
            break;
        }
        case ModelKind::dcc: {
            const int n = static_cast<int>(r.u32());
            if (n < 1 || n > 10000) throw DataError("checkpoint DCC dimension implausible");
            auto p = std::make_shared<DccParams>();
            p->garch.resize(n);
            for (auto& g : p->garch) {
                g.omega = r.f64();
                g.alpha = r.f64();
                g.beta = r.f64();
            }
            p->a = r.f64();
            p->b = r.f64();
            p->S = r.mat();
            ck.fit.dcc = std::move(p);
            DccCarry carry;
            carry.h_prev = r.vec();
            carry.Q_prev = r.mat();
            carry.r_prev = r.vec();
            ck.fit.dcc_carry = std::move(carry);
            break;
        }
        case ModelKind::lstm_bekk: {
            const int n = static_cast<int>(r.u32());
            auto p = std::make_shared<LstmBekkParams>();
            p->a = r.f64();
            p->b = r.f64();
            Vec packed = r.vec();
            if (LowerTriangular::dim_from_packed_size(packed.size()) != n)
                throw DataError("checkpoint LSTM-BEKK parameter size mismatch");
            p->C = LowerTriangular(n, std::move(packed));
            p->lstm = read_lstm_weights(r);
            ck.fit.lstm_bekk = std::move(p);
            LstmBekkCarry carry;
            carry.H_prev = r.mat();
            carry.r_prev = r.vec();
            const int layers = static_cast<int>(r.u32());
            if (layers < 1 || layers > 64) throw DataError("checkpoint LSTM state implausible");
            carry.state.h.resize(layers);
            carry.state.c.resize(layers);
            for (auto& v : carry.state.h) v = r.vec();
            for (auto& v : carry.state.c) v = r.vec();
            ck.fit.lstm_carry = std::move(carry);
            break;
        }
    }
    if (r.pos != buf.size()) throw DataError("checkpoint has trailing bytes: " + path);
    return ck;
}

}  // namespace mvcov
