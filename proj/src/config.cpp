#include "mvcov/config.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "mvcov/errors.hpp"
#include "mvcov/garch.hpp"

namespace mvcov {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(begin, last - begin + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    }
}

long long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const unsigned long long i = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" + v +
                          "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::stringstream stream(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(stream, line)) {
        ++lineno;
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section != "data" && section != "model" && section != "train" &&
                section != "evaluation" && section != "theorem" && section != "output")
                throw ConfigError("unknown config section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty())
            throw ConfigError("config key '" + key + "' appears before any section");
        const std::string full = section + "." + key;

        if (full == "data.source") cfg.source = value;
        else if (full == "data.csv_path") cfg.csv_path = value;
        else if (full == "data.prices") cfg.prices = parse_bool(full, value);
        else if (full == "data.dgp") cfg.dgp = value;
        else if (full == "data.n") cfg.n = static_cast<int>(parse_int(full, value));
        else if (full == "data.T") cfg.T = static_cast<int>(parse_int(full, value));
        else if (full == "data.seed") cfg.data_seed = parse_u64(full, value);
        else if (full == "data.bekk_a") cfg.bekk_a = parse_double(full, value);
        else if (full == "data.bekk_b") cfg.bekk_b = parse_double(full, value);
        else if (full == "data.bekk_scale") cfg.bekk_scale = parse_double(full, value);
        else if (full == "data.dcc_a") cfg.dcc_a = parse_double(full, value);
        else if (full == "data.dcc_b") cfg.dcc_b = parse_double(full, value);
        else if (full == "data.dcc_corr") cfg.dcc_corr = parse_double(full, value);
        else if (full == "data.garch_omega") cfg.garch_omega = parse_double(full, value);
        else if (full == "data.garch_alpha") cfg.garch_alpha = parse_double(full, value);
        else if (full == "data.garch_beta") cfg.garch_beta = parse_double(full, value);
        else if (full == "data.train_frac") cfg.train_frac = parse_double(full, value);
        else if (full == "data.val_frac") cfg.val_frac = parse_double(full, value);
        else if (full == "model.kind") cfg.model = value;
        else if (full == "model.layers") cfg.train.lstm_layers = static_cast<int>(parse_int(full, value));
        else if (full == "model.dropout") cfg.train.dropout = parse_double(full, value);
        else if (full == "model.lstm_zero_init") cfg.train.lstm_zero_init = parse_bool(full, value);
        else if (full == "model.lstm_freeze") cfg.train.lstm_freeze = parse_bool(full, value);
        else if (full == "train.learning_rate") cfg.train.learning_rate = parse_double(full, value);
        else if (full == "train.rmsprop_decay") cfg.train.rmsprop_decay = parse_double(full, value);
        else if (full == "train.epsilon") cfg.train.epsilon = parse_double(full, value);
        else if (full == "train.clip_norm") cfg.train.clip_norm = parse_double(full, value);
        else if (full == "train.max_epochs") cfg.train.max_epochs = static_cast<int>(parse_int(full, value));
        else if (full == "train.patience") cfg.train.patience = static_cast<int>(parse_int(full, value));
        else if (full == "train.convergence_tol") cfg.train.convergence_tol = parse_double(full, value);
        else if (full == "train.seed") cfg.train.seed = parse_u64(full, value);
        else if (full == "train.init_a") cfg.train.init_a = parse_double(full, value);
        else if (full == "train.init_b") cfg.train.init_b = parse_double(full, value);
        else if (full == "evaluation.portfolio_count") cfg.portfolio_count = static_cast<int>(parse_int(full, value));
        else if (full == "evaluation.portfolio_size") cfg.portfolio_size = static_cast<int>(parse_int(full, value));
        else if (full == "evaluation.mcs_block_mean") cfg.mcs_block_mean = parse_double(full, value);
        else if (full == "evaluation.mcs_B") cfg.mcs_B = static_cast<int>(parse_int(full, value));
        else if (full == "evaluation.mcs_level") cfg.mcs_level = parse_double(full, value);
        else if (full == "evaluation.var_levels") cfg.var_levels = parse_double_list(full, value);
        else if (full == "theorem.n_paths") cfg.theorem_paths = static_cast<int>(parse_int(full, value));
        else if (full == "theorem.k") cfg.theorem_k = static_cast<int>(parse_int(full, value));
        else if (full == "output.dir") cfg.output_dir = value;
        else throw ConfigError("unknown config key '" + full + "'");
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

void ExperimentConfig::validate() const {
    if (source != "simulate" && source != "csv")
        throw ConfigError("data.source must be 'simulate' or 'csv'");
    if (source == "csv" && csv_path.empty())
        throw ConfigError("data.csv_path is required when data.source = csv");
    if (dgp != "iid_gaussian" && dgp != "scalar_bekk" && dgp != "dcc")
        throw ConfigError("data.dgp must be iid_gaussian, scalar_bekk or dcc");
    if (model != "scalar_bekk" && model != "dcc" && model != "lstm_bekk")
        throw ConfigError("model.kind must be scalar_bekk, dcc or lstm_bekk");
    if (n < 1 || T < 10) throw ConfigError("data.n must be >= 1 and data.T >= 10");
    if (!(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0))
        throw ConfigError("data.train_frac and data.val_frac must be positive and sum below 1");
    if (bekk_a < 0.0 || bekk_b < 0.0 || bekk_a + bekk_b >= 1.0)
        throw ConfigError("data.bekk_a and data.bekk_b must satisfy a,b >= 0 and a+b < 1");
    if (dcc_a < 0.0 || dcc_b < 0.0 || dcc_a + dcc_b >= 1.0)
        throw ConfigError("data.dcc_a and data.dcc_b must satisfy a,b >= 0 and a+b < 1");
    if (!(bekk_scale > 0.0)) throw ConfigError("data.bekk_scale must be positive");
    if (!(std::abs(dcc_corr) < 1.0)) throw ConfigError("data.dcc_corr must lie in (-1, 1)");
    if (!(garch_omega > 0.0) || garch_alpha < 0.0 || garch_beta < 0.0 ||
        garch_alpha + garch_beta >= 1.0)
        throw ConfigError("data.garch_* must satisfy omega > 0, alpha,beta >= 0, alpha+beta < 1");
    if (portfolio_count < 1 || portfolio_size < 1)
        throw ConfigError("evaluation.portfolio_count and portfolio_size must be >= 1");
    if (mcs_B < 1 || !(mcs_block_mean >= 1.0) || !(mcs_level > 0.0 && mcs_level < 1.0))
        throw ConfigError("invalid evaluation.mcs_* settings");
    for (double a : var_levels)
        if (!(a > 0.0 && a < 0.5))
            throw ConfigError("evaluation.var_levels entries must lie in (0, 0.5)");
    if (theorem_paths < 1 || theorem_k < 1)
        throw ConfigError("theorem.n_paths and theorem.k must be >= 1");
    if (output_dir.empty()) throw ConfigError("output.dir must not be empty");
    train.validate();
}

SimulationSpec ExperimentConfig::simulation_spec() const {
    SimulationSpec spec;
    spec.n = n;
    spec.T = T;
    spec.seed = data_seed;
    if (dgp == "iid_gaussian") {
        spec.dgp = Dgp::iid_gaussian;
        spec.iid_covariance = Mat::identity(n);
        for (int i = 0; i < n; ++i) spec.iid_covariance(i, i) = bekk_scale;
    } else if (dgp == "scalar_bekk") {
        spec.dgp = Dgp::scalar_bekk;
        auto bekk = std::make_shared<ScalarBekkParams>();
        bekk->a = bekk_a;
        bekk->b = bekk_b;
        Mat cc = Mat::identity(n);
        for (int i = 0; i < n; ++i) cc(i, i) = bekk_scale * (1.0 - bekk_a - bekk_b);
        bekk->C = cholesky(cc);
        spec.bekk = std::move(bekk);
    } else {
        spec.dgp = Dgp::dcc;
        auto dcc = std::make_shared<DccParams>();
        dcc->a = dcc_a;
        dcc->b = dcc_b;
        dcc->garch.assign(n, UnivariateGarchParams{garch_omega, garch_alpha, garch_beta});
        dcc->S = Mat(n, n, dcc_corr);
        for (int i = 0; i < n; ++i) dcc->S(i, i) = 1.0;
        spec.dcc = std::move(dcc);
    }
    return spec;
}

ReturnsPanel ExperimentConfig::load_panel() const {
    ReturnsPanel panel = source == "csv" ? load_csv(csv_path, prices)
                                         : simulate(simulation_spec());
    panel.train_end = static_cast<int>(std::floor(panel.T() * train_frac));
    panel.val_end = panel.train_end + static_cast<int>(std::floor(panel.T() * val_frac));
    panel.validate();
    return panel;
}

std::uint64_t hash_bytes(const void* data, std::size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t panel_hash(const ReturnsPanel& panel) {
    std::uint64_t h = hash_bytes(panel.values.data(),
                                 sizeof(double) * panel.T() * panel.n());
    const int dims[4] = {panel.T(), panel.n(), panel.train_end, panel.val_end};
    h ^= hash_bytes(dims, sizeof(dims));
    return h;
}

}  // namespace mvcov
