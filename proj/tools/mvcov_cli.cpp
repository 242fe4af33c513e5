#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mvcov/checkpoint.hpp"
#include "mvcov/config.hpp"
#include "mvcov/errors.hpp"
#include "mvcov/evaluation.hpp"
#include "mvcov/portfolio.hpp"
#include "mvcov/rng.hpp"

namespace fs = std::filesystem;
using namespace mvcov;

namespace {

std::uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    return hash_bytes(text.data(), text.size());
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open output file: " + path);
    out << content;
    if (!out) throw DataError("failed writing output file: " + path);
}

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return buf;
}

Checkpoint load_and_verify(const std::string& path, const ReturnsPanel& panel) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.panel_hash != panel_hash(panel))
        throw DataError("checkpoint " + path + " was trained on a different panel");
    return ck;
}

int cmd_simulate(const ExperimentConfig& cfg) {
    if (cfg.source != "simulate")
        throw ConfigError("simulate requires data.source = simulate");
    ReturnsPanel panel = cfg.load_panel();
    fs::create_directories(cfg.output_dir);
    const std::string path = cfg.output_dir + "/panel.csv";
    write_csv(panel, path);
    std::cout << "wrote " << path << " (" << panel.T() << " rows, " << panel.n()
              << " assets)\n";
    return 0;
}

int cmd_fit(const ExperimentConfig& cfg, const std::string& config_path,
            const std::string& model_override) {
    const std::string model_name = model_override.empty() ? cfg.model : model_override;
    const ModelKind kind = model_kind_from_name(model_name);
    ReturnsPanel panel = cfg.load_panel();

    FitResult result = fit(kind, panel, cfg.train);

    fs::create_directories(cfg.output_dir);
    Checkpoint ck;
    ck.fit = result;
    ck.config_hash = file_hash(config_path);
    ck.panel_hash = panel_hash(panel);
    const std::string ckpt_path = cfg.output_dir + "/" + model_name + ".ckpt";
    save_checkpoint(ck, ckpt_path);

    std::string log = "epoch,train_nll,val_nll,grad_norm,learning_rate,max_jitter\n";
    for (const auto& e : result.history)
        log += fmt("%d,%.10g,%.10g,%.10g,%.10g,%.10g\n", e.epoch, e.train_nll, e.val_nll,
                   e.grad_norm, e.learning_rate, e.max_jitter);
    const std::string log_path = cfg.output_dir + "/" + model_name + "_training_log.csv";
    write_file(log_path, log);

    double fitted_a = 0.0, fitted_b = 0.0;
    if (result.bekk) fitted_a = result.bekk->a, fitted_b = result.bekk->b;
    if (result.dcc) fitted_a = result.dcc->a, fitted_b = result.dcc->b;
    if (result.lstm_bekk) fitted_a = result.lstm_bekk->a, fitted_b = result.lstm_bekk->b;
    std::cout << "model=" << model_name << " epochs=" << result.epochs_run
              << fmt(" train_nll=%.6f val_nll=%.6f a=%.4f b=%.4f", result.train_nll,
                     result.val_nll, fitted_a, fitted_b)
              << (result.jitter_warning ? " jitter_warning=1" : "") << "\n"
              << "wrote " << ckpt_path << "\n"
              << "wrote " << log_path << "\n";
    return 0;
}

int cmd_forecast(const ExperimentConfig& cfg, const std::string& ckpt_path) {
    ReturnsPanel panel = cfg.load_panel();
    Checkpoint ck = load_and_verify(ckpt_path, panel);
    const CovPath path = test_covariances(ck.fit, panel);

    std::string out = "date,i,j,h\n";
    for (int t = 0; t < path.length(); ++t) {
        const Mat& H = path.H[t].values();
        const std::string& date = panel.dates[panel.val_end + t];
        for (int i = 0; i < panel.n(); ++i)
            for (int j = i; j < panel.n(); ++j)
                out += fmt("%s,%d,%d,%.12g\n", date.c_str(), i, j, H(i, j));
    }
    fs::create_directories(cfg.output_dir);
    const std::string out_path =
        cfg.output_dir + "/forecast_" + model_kind_name(ck.fit.model) + ".csv";
    write_file(out_path, out);
    std::cout << "wrote " << out_path << " (" << path.length() << " periods)\n";
    return 0;
}

int cmd_backtest(const ExperimentConfig& cfg, const std::vector<std::string>& ckpt_paths) {
    ReturnsPanel panel = cfg.load_panel();
    std::vector<FitResult> fits;
    for (const auto& p : ckpt_paths) fits.push_back(load_and_verify(p, panel).fit);

    const std::vector<ModelBacktest> results = backtest(fits, panel, cfg.var_levels);

    std::string report = "model,portfolio,metric,level,value\n";
    std::string series = "date,model,level,var,es,realized\n";
    for (const auto& mb : results) {
        for (const BacktestResult* r : {&mb.gmv, &mb.ew}) {
            const char* pf = r == &mb.gmv ? "gmv" : "ew";
            const std::string& model = mb.gmv.label;
            report += fmt("%s,%s,ar,,%.10g\n", model.c_str(), pf, r->ar);
            report += fmt("%s,%s,av,,%.10g\n", model.c_str(), pf, r->av);
            report += fmt("%s,%s,mdd,,%.10g\n", model.c_str(), pf, r->mdd);
            for (const auto& lv : r->levels) {
                report += fmt("%s,%s,qloss,%g,%.10g\n", model.c_str(), pf, lv.alpha, lv.qloss);
                report += fmt("%s,%s,jointloss,%g,%.10g\n", model.c_str(), pf, lv.alpha,
                              lv.jointloss);
            }
        }
        for (const auto& lv : mb.gmv.levels)
            for (std::size_t t = 0; t < mb.gmv.returns.size(); ++t)
                series += fmt("%s,%s,%g,%.10g,%.10g,%.10g\n",
                              panel.dates[panel.val_end + t].c_str(), mb.gmv.label.c_str(),
                              lv.alpha, lv.var_series[t], lv.es_series[t], mb.gmv.returns[t]);
    }
    fs::create_directories(cfg.output_dir);
    write_file(cfg.output_dir + "/backtest_report.csv", report);
    write_file(cfg.output_dir + "/var_es.csv", series);
    std::cout << "wrote " << cfg.output_dir << "/backtest_report.csv\n"
              << "wrote " << cfg.output_dir << "/var_es.csv\n";
    return 0;
}

int cmd_compare(const ExperimentConfig& cfg, const std::vector<std::string>& ckpt_paths,
                int jobs) {
    ReturnsPanel panel = cfg.load_panel();
    std::vector<LossSeries> losses;
    for (std::size_t i = 0; i < ckpt_paths.size(); ++i) {
        const Checkpoint ck = load_and_verify(ckpt_paths[i], panel);
        LossSeries s = test_nll(ck.fit, panel);
        for (const auto& prev : losses)
            if (prev.model == s.model) {
                s.model += "#" + std::to_string(i);
                break;
            }
        losses.push_back(std::move(s));
    }

    BootstrapConfig bs;
    bs.block_mean = cfg.mcs_block_mean;
    bs.B = cfg.mcs_B;
    bs.seed = cfg.train.seed;
    bs.jobs = jobs;
    const McsResult m = mcs(losses, cfg.mcs_level, bs);
    const std::vector<ReportRow> rows = comparison_report(losses, m);

    std::ostringstream csv, text;
    write_report_csv(rows, csv);
    write_report_text(rows, text);
    fs::create_directories(cfg.output_dir);
    write_file(cfg.output_dir + "/comparison.csv", csv.str());
    write_file(cfg.output_dir + "/comparison.txt", text.str());
    std::cout << text.str() << "wrote " << cfg.output_dir << "/comparison.csv\n"
              << "wrote " << cfg.output_dir << "/comparison.txt\n";
    return 0;
}

int cmd_grad_check(const ExperimentConfig& cfg, const std::string& model_name) {
    SimulationSpec spec;
    spec.dgp = Dgp::iid_gaussian;
    spec.n = 2;
    spec.T = 20;
    spec.seed = cfg.train.seed;
    spec.iid_covariance = Mat::identity(2);
    ReturnsPanel panel = simulate(spec);

    std::vector<ModelKind> kinds;
    if (model_name.empty())
        kinds = {ModelKind::scalar_bekk, ModelKind::dcc, ModelKind::lstm_bekk};
    else
        kinds = {model_kind_from_name(model_name)};

    bool ok = true;
    for (ModelKind kind : kinds) {
        const double err = grad_check(kind, panel, cfg.train);
        const bool pass = err < 1e-4;
        ok = ok && pass;
        std::cout << fmt("%-12s max_rel_err=%.3e %s\n", model_kind_name(kind).c_str(), err,
                         pass ? "ok" : "FAIL");
    }
    if (!ok) throw NumericError("gradient check failed");
    return 0;
}

int cmd_theorem_check(const ExperimentConfig& cfg) {
    const int n = 2;
    Rng rng(Rng::derive(cfg.data_seed, 0x77));
    LstmWeights lstm = LstmWeights::init(n, cfg.train.lstm_layers, rng);

    bool ok = true;
    for (double a : {0.0, 0.05, 0.1}) {
        for (double b : {0.5, 0.8, 0.9}) {
            if (a + b >= 1.0) {
                std::cout << fmt("a=%.2f b=%.2f skipped (a+b >= 1 is outside the model class)\n",
                                 a, b);
                continue;
            }
            LstmBekkParams params;
            params.a = a;
            params.b = b;
            Mat cc = Mat::identity(n);
            for (int i = 0; i < n; ++i) cc(i, i) = cfg.bekk_scale * (1.0 - a - b);
            params.C = cholesky(cc);
            params.lstm = lstm;
            const TheoremBoundReport rep =
                check_theorem_bound(params, cfg.theorem_paths, cfg.theorem_k, cfg.data_seed);
            const double tol = 3.0 / std::sqrt(static_cast<double>(rep.n_paths));
            const bool holds = rep.holds(tol);
            ok = ok && holds;
            std::cout << fmt("a=%.2f b=%.2f k=%d lhs=%.6f rhs=%.6f M=%.6f %s\n", a, b, rep.k,
                             rep.lhs, rep.rhs, rep.M, holds ? "ok" : "VIOLATED");
        }
    }
    if (!ok) throw NumericError("empirical covariance bound violated");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multivariate conditional covariance models: simulation, fitting, "
                 "forecasting and evaluation"};
    app.require_subcommand(1);

    std::string config_path, model_override, ckpt_single;
    std::vector<std::string> ckpt_multi;
    int jobs = 1;

    auto* sim = app.add_subcommand("simulate", "simulate a returns panel to CSV");
    sim->add_option("--config", config_path, "config file")->required();

    auto* fit_cmd = app.add_subcommand("fit", "fit a model and write a checkpoint");
    fit_cmd->add_option("--config", config_path, "config file")->required();
    fit_cmd->add_option("--model", model_override, "override model.kind");

    auto* fc = app.add_subcommand("forecast", "test-span covariance forecasts from a checkpoint");
    fc->add_option("--config", config_path, "config file")->required();
    fc->add_option("--checkpoint", ckpt_single, "checkpoint file")->required();

    auto* bt = app.add_subcommand("backtest", "GMV and EW backtests over the test span");
    bt->add_option("--config", config_path, "config file")->required();
    bt->add_option("--checkpoint", ckpt_multi, "checkpoint files")->required()->expected(1, -1);

    auto* cmp = app.add_subcommand("compare", "test NLL, t-tests and model confidence set");
    cmp->add_option("--config", config_path, "config file")->required();
    cmp->add_option("--checkpoint", ckpt_multi, "checkpoint files")->required()->expected(2, -1);
    cmp->add_option("--jobs", jobs, "bootstrap worker threads")->default_val(1);

    auto* gc = app.add_subcommand("grad-check", "finite-difference gradient verification");
    gc->add_option("--config", config_path, "config file");
    gc->add_option("--model", model_override, "check a single model");

    auto* tc = app.add_subcommand("theorem-check", "Monte-Carlo covariance bound verification");
    tc->add_option("--config", config_path, "config file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        ExperimentConfig cfg =
            config_path.empty() ? ExperimentConfig{} : load_config(config_path);
        if (sim->parsed()) return cmd_simulate(cfg);
        if (fit_cmd->parsed()) return cmd_fit(cfg, config_path, model_override);
        if (fc->parsed()) return cmd_forecast(cfg, ckpt_single);
        if (bt->parsed()) return cmd_backtest(cfg, ckpt_multi);
        if (cmp->parsed()) return cmd_compare(cfg, ckpt_multi, jobs);
        if (gc->parsed()) return cmd_grad_check(cfg, model_override);
        if (tc->parsed()) return cmd_theorem_check(cfg);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ArgumentError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
