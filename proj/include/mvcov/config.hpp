#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvcov/data.hpp"
#include "mvcov/estimation.hpp"

namespace mvcov {

// Flat INI-style experiment configuration; docs/config-schema.md documents
// every section and key. Unknown sections or keys are rejected.
struct ExperimentConfig {
    // [data]
    std::string source = "simulate";  // simulate | csv
    std::string csv_path;
    bool prices = false;
    std::string dgp = "iid_gaussian";  // iid_gaussian | scalar_bekk | dcc
    int n = 2;
    int T = 1000;
    std::uint64_t data_seed = 0;
    double bekk_a = 0.05, bekk_b = 0.90, bekk_scale = 1.0;
    double dcc_a = 0.05, dcc_b = 0.90, dcc_corr = 0.3;
    double garch_omega = 0.1, garch_alpha = 0.1, garch_beta = 0.8;
    double train_frac = 0.70, val_frac = 0.15;

    // [model]
    std::string model = "scalar_bekk";

    // [train]
    TrainConfig train;

    // [evaluation]
    int portfolio_count = 50;
    int portfolio_size = 10;
    double mcs_block_mean = 20.0;
    int mcs_B = 1000;
    double mcs_level = 0.10;
    std::vector<double> var_levels = {0.01, 0.05};

    // [theorem]
    int theorem_paths = 2000;
    int theorem_k = 50;

    // [output]
    std::string output_dir = "out";

    void validate() const;  // cross-field checks beyond per-key parsing
    SimulationSpec simulation_spec() const;
    ReturnsPanel load_panel() const;  // csv or simulated panel with splits
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// FNV-1a over the raw config text; stored in checkpoints.
std::uint64_t hash_bytes(const void* data, std::size_t len);
std::uint64_t panel_hash(const ReturnsPanel& panel);

}  // namespace mvcov
