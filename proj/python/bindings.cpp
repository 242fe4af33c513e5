#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mvcov/checkpoint.hpp"
#include "mvcov/config.hpp"
#include "mvcov/errors.hpp"
#include "mvcov/evaluation.hpp"
#include "mvcov/portfolio.hpp"

namespace py = pybind11;
using namespace mvcov;

namespace {

py::array_t<double> mat_to_numpy(const Mat& m) {
    py::array_t<double> out({m.rows(), m.cols()});
    double* dst = out.mutable_data();
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) *dst++ = m(i, j);
    return out;
}

Mat numpy_to_mat(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw ArgumentError("expected a 2-d array");
    Mat m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    const double* src = a.data();
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) m(i, j) = *src++;
    return m;
}

py::array_t<double> vec_to_numpy(const Vec& v) {
    py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

Vec numpy_to_vec(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 1) throw ArgumentError("expected a 1-d array");
    return Vec(a.data(), a.data() + a.shape(0));
}

TrainConfig train_config_from_kwargs(const py::kwargs& kw) {
    TrainConfig cfg;
    for (auto item : kw) {
        const std::string key = py::cast<std::string>(item.first);
        if (key == "learning_rate") cfg.learning_rate = py::cast<double>(item.second);
        else if (key == "rmsprop_decay") cfg.rmsprop_decay = py::cast<double>(item.second);
        else if (key == "epsilon") cfg.epsilon = py::cast<double>(item.second);
        else if (key == "clip_norm") cfg.clip_norm = py::cast<double>(item.second);
        else if (key == "max_epochs") cfg.max_epochs = py::cast<int>(item.second);
        else if (key == "patience") cfg.patience = py::cast<int>(item.second);
        else if (key == "convergence_tol") cfg.convergence_tol = py::cast<double>(item.second);
        else if (key == "seed") cfg.seed = py::cast<std::uint64_t>(item.second);
        else if (key == "lstm_layers") cfg.lstm_layers = py::cast<int>(item.second);
        else if (key == "dropout") cfg.dropout = py::cast<double>(item.second);
        else if (key == "lstm_zero_init") cfg.lstm_zero_init = py::cast<bool>(item.second);
        else if (key == "lstm_freeze") cfg.lstm_freeze = py::cast<bool>(item.second);
        else if (key == "init_a") cfg.init_a = py::cast<double>(item.second);
        else if (key == "init_b") cfg.init_b = py::cast<double>(item.second);
        else throw ArgumentError("unknown training option '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

ReturnsPanel panel_from_array(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& values,
    double train_frac, double val_frac) {
    ReturnsPanel panel;
    panel.values = numpy_to_mat(values);
    panel.dates.reserve(panel.T());
    for (int t = 0; t < panel.T(); ++t) panel.dates.push_back(synthetic_date(t));
    for (int j = 0; j < panel.n(); ++j) panel.assets.push_back("a" + std::to_string(j));
    panel.train_end = static_cast<int>(panel.T() * train_frac);
    panel.val_end = panel.train_end + static_cast<int>(panel.T() * val_frac);
    demean_training_window(panel);
    panel.validate();
    return panel;
}

}  // namespace

PYBIND11_MODULE(_mvcov, m) {
    m.doc() = "multivariate conditional covariance models";

    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<DataError>(m, "DataError");
    py::register_exception<NumericError>(m, "NumericError");

    py::class_<ReturnsPanel>(m, "ReturnsPanel")
        .def(py::init(&panel_from_array), py::arg("values"), py::arg("train_frac") = 0.70,
             py::arg("val_frac") = 0.15)
        .def_property_readonly("values", [](const ReturnsPanel& p) { return mat_to_numpy(p.values); })
        .def_readonly("dates", &ReturnsPanel::dates)
        .def_readonly("assets", &ReturnsPanel::assets)
        .def_readonly("train_end", &ReturnsPanel::train_end)
        .def_readonly("val_end", &ReturnsPanel::val_end)
        .def_property_readonly("T", &ReturnsPanel::T)
        .def_property_readonly("n", &ReturnsPanel::n);

    m.def("load_csv", &load_csv, py::arg("path"), py::arg("prices") = false);
    m.def("write_csv", &write_csv, py::arg("panel"), py::arg("path"));
    m.def("random_subpanel", &random_subpanel, py::arg("panel"), py::arg("k"), py::arg("seed"));

    py::class_<ExperimentConfig>(m, "ExperimentConfig")
        .def_readonly("model", &ExperimentConfig::model)
        .def_readonly("output_dir", &ExperimentConfig::output_dir)
        .def("load_panel", &ExperimentConfig::load_panel);
    m.def("load_config", &load_config, py::arg("path"));
    m.def("parse_config_text", &parse_config_text, py::arg("text"));

    m.def(
        "simulate",
        [](const std::string& dgp, int n, int T, std::uint64_t seed, double a, double b,
           double scale) {
            ExperimentConfig cfg;
            cfg.dgp = dgp;
            cfg.n = n;
            cfg.T = T;
            cfg.data_seed = seed;
            cfg.bekk_a = cfg.dcc_a = a;
            cfg.bekk_b = cfg.dcc_b = b;
            cfg.bekk_scale = scale;
            cfg.validate();
            return cfg.load_panel();
        },
        py::arg("dgp"), py::arg("n"), py::arg("T"), py::arg("seed") = 0, py::arg("a") = 0.05,
        py::arg("b") = 0.90, py::arg("scale") = 1.0);

    py::class_<FitResult>(m, "FitResult")
        .def_property_readonly("model", [](const FitResult& r) { return model_kind_name(r.model); })
        .def_readonly("train_nll", &FitResult::train_nll)
        .def_readonly("val_nll", &FitResult::val_nll)
        .def_readonly("epochs_run", &FitResult::epochs_run)
        .def_property_readonly("a",
                               [](const FitResult& r) {
                                   if (r.bekk) return r.bekk->a;
                                   if (r.dcc) return r.dcc->a;
                                   return r.lstm_bekk->a;
                               })
        .def_property_readonly("b", [](const FitResult& r) {
            if (r.bekk) return r.bekk->b;
            if (r.dcc) return r.dcc->b;
            return r.lstm_bekk->b;
        });

    m.def(
        "fit",
        [](const std::string& model, const ReturnsPanel& panel, const py::kwargs& kw) {
            return fit(model_kind_from_name(model), panel, train_config_from_kwargs(kw));
        },
        py::arg("model"), py::arg("panel"));

    m.def(
        "grad_check",
        [](const std::string& model, const ReturnsPanel& panel, const py::kwargs& kw) {
            return grad_check(model_kind_from_name(model), panel, train_config_from_kwargs(kw));
        },
        py::arg("model"), py::arg("panel"));

    m.def("test_nll", [](const FitResult& r, const ReturnsPanel& panel) {
        return vec_to_numpy(test_nll(r, panel).losses);
    });

    m.def("test_covariances", [](const FitResult& r, const ReturnsPanel& panel) {
        const CovPath path = test_covariances(r, panel);
        const int n = panel.n();
        py::array_t<double> out({path.length(), n, n});
        double* dst = out.mutable_data();
        for (const SPDMatrix& H : path.H)
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) *dst++ = H.values()(i, j);
        return out;
    });

    m.def("gmv_weights",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& H) {
              return vec_to_numpy(gmv_weights(SPDMatrix(numpy_to_mat(H))));
          });

    m.def(
        "paired_ttest",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
            const TTestResult r = paired_ttest(numpy_to_vec(a), numpy_to_vec(b));
            return py::make_tuple(r.mean_diff, r.t, r.p);
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "mcs",
        [](const std::vector<std::pair<std::string, py::array_t<double, py::array::c_style |
                                                                     py::array::forcecast>>>&
               losses,
           double level, double block_mean, int B, std::uint64_t seed, int jobs) {
            std::vector<LossSeries> series;
            for (const auto& [name, arr] : losses)
                series.push_back(LossSeries{name, numpy_to_vec(arr)});
            BootstrapConfig bs;
            bs.block_mean = block_mean;
            bs.B = B;
            bs.seed = seed;
            bs.jobs = jobs;
            const McsResult r = mcs(series, level, bs);
            py::dict out;
            out["models"] = r.models;
            out["p_values"] = vec_to_numpy(r.p_values);
            out["included"] = r.included;
            out["elimination_order"] = r.elimination_order;
            return out;
        },
        py::arg("losses"), py::arg("level") = 0.10, py::arg("block_mean") = 20.0,
        py::arg("B") = 1000, py::arg("seed") = 0, py::arg("jobs") = 1);

    m.def(
        "save_checkpoint",
        [](const FitResult& r, const ReturnsPanel& panel, const std::string& path) {
            Checkpoint ck;
            ck.fit = r;
            ck.panel_hash = panel_hash(panel);
            save_checkpoint(ck, path);
        },
        py::arg("fit"), py::arg("panel"), py::arg("path"));

    m.def(
        "load_checkpoint",
        [](const std::string& path, const ReturnsPanel& panel) {
            Checkpoint ck = load_checkpoint(path);
            if (ck.panel_hash != panel_hash(panel))
                throw DataError("checkpoint " + path + " was trained on a different panel");
            return ck.fit;
        },
        py::arg("path"), py::arg("panel"));
}
