#include "mvcov/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mvcov/errors.hpp"
#include "mvcov/garch.hpp"
#include "mvcov/rng.hpp"

namespace mvcov {

Vec ReturnsPanel::row(int t) const {
    Vec r(n());
    for (int j = 0; j < n(); ++j) r[j] = values(t, j);
    return r;
}

Vec ReturnsPanel::train_mean() const {
    Vec mean(n(), 0.0);
    for (int t = 0; t < train_end; ++t)
        for (int j = 0; j < n(); ++j) mean[j] += values(t, j);
    for (double& m : mean) m /= train_end;
    return mean;
}

Mat ReturnsPanel::train_covariance() const {
    const Vec mean = train_mean();
    Mat cov(n(), n());
    for (int t = 0; t < train_end; ++t) {
        for (int i = 0; i < n(); ++i) {
            const double di = values(t, i) - mean[i];
            for (int j = 0; j <= i; ++j) cov(i, j) += di * (values(t, j) - mean[j]);
        }
    }
    for (int i = 0; i < n(); ++i)
        for (int j = 0; j <= i; ++j) {
            cov(i, j) /= train_end;
            cov(j, i) = cov(i, j);
        }
    return cov;
}

Vec ReturnsPanel::train_variances() const {
    const Mat cov = train_covariance();
    Vec v(n());
    for (int i = 0; i < n(); ++i) v[i] = cov(i, i);
    return v;
}

void ReturnsPanel::validate() const {
    if (T() < 2 || n() < 1) throw DataError("panel requires T >= 2 and n >= 1");
    if (static_cast<int>(dates.size()) != T()) throw DataError("date count does not match rows");
    if (static_cast<int>(assets.size()) != n()) throw DataError("asset count does not match columns");
    for (int t = 1; t < T(); ++t)
        if (!(dates[t - 1] < dates[t]))
            throw DataError("dates are not strictly increasing at row " + std::to_string(t));
    if (!(0 < train_end && train_end < val_end && val_end < T()))
        throw DataError("split indices must satisfy 0 < train_end < val_end < T");
    for (int t = 0; t < T(); ++t)
        for (int j = 0; j < n(); ++j)
            if (!std::isfinite(values(t, j)))
                throw DataError("non-finite value at row " + std::to_string(t) + ", column " +
                                std::to_string(j));
}

void set_default_splits(ReturnsPanel& panel) {
    panel.train_end = static_cast<int>(panel.T() * 0.70);
    panel.val_end = panel.train_end + static_cast<int>(panel.T() * 0.15);
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

}  // namespace

void demean_training_window(ReturnsPanel& panel) {
    const Vec mean = panel.train_mean();
    for (int t = 0; t < panel.T(); ++t)
        for (int j = 0; j < panel.n(); ++j) panel.values(t, j) -= mean[j];
}

std::string synthetic_date(int index) {
    // 2000-01-01 is day 10957 since 1970-01-01; shift to the 0000-03-01
    // epoch the civil-date algorithm expects
    int days = 10957 + index + 719468;
    int era = days / 146097;
    int doe = days - era * 146097;
    int yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    int y = yoe + era * 400;
    int doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    int mp = (5 * doy + 2) / 153;
    int d = doy - (153 * mp + 2) / 5 + 1;
    int m = mp + (mp < 10 ? 3 : -9);
    y += (m <= 2);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
    return buf;
}

ReturnsPanel load_csv(const std::string& path, bool prices) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw DataError("empty file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split_line(line);
    if (header.size() < 2 || header[0] != "date")
        throw DataError("expected header 'date,<label>...' in " + path);

    ReturnsPanel panel;
    panel.assets.assign(header.begin() + 1, header.end());
    const int n = static_cast<int>(panel.assets.size());

    std::vector<Vec> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_line(line);
        if (static_cast<int>(fields.size()) != n + 1)
            throw DataError(path + ": row " + std::to_string(lineno) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(n + 1));
        panel.dates.push_back(fields[0]);
        Vec row(n);
        for (int j = 0; j < n; ++j) {
            if (fields[j + 1].empty())
                throw DataError(path + ": missing value at row " + std::to_string(lineno) +
                                ", column " + panel.assets[j]);
            std::size_t pos = 0;
            try {
                row[j] = std::stod(fields[j + 1], &pos);
            } catch (const std::exception&) {
                pos = 0;
            }
            if (pos != fields[j + 1].size() || !std::isfinite(row[j]))
                throw DataError(path + ": bad value '" + fields[j + 1] + "' at row " +
                                std::to_string(lineno) + ", column " + panel.assets[j]);
            if (prices && row[j] <= 0.0)
                throw DataError(path + ": non-positive price at row " + std::to_string(lineno) +
                                ", column " + panel.assets[j]);
        }
        rows.push_back(std::move(row));
    }

    for (std::size_t t = 1; t < panel.dates.size(); ++t)
        if (!(panel.dates[t - 1] < panel.dates[t]))
            throw DataError(path + ": dates not strictly increasing at row " + std::to_string(t + 1));

    if (prices) {
        if (rows.size() < 2) throw DataError(path + ": need at least two price rows");
        std::vector<Vec> rets(rows.size() - 1, Vec(n));
        for (std::size_t t = 1; t < rows.size(); ++t)
            for (int j = 0; j < n; ++j)
                rets[t - 1][j] = 100.0 * (std::log(rows[t][j]) - std::log(rows[t - 1][j]));
        rows = std::move(rets);
        panel.dates.erase(panel.dates.begin());
    }

    const int T = static_cast<int>(rows.size());
    if (T < 10)
        throw DataError(path + ": insufficient data, need at least 10 rows, got " +
                        std::to_string(T));
    panel.values = Mat(T, n);
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < n; ++j) panel.values(t, j) = rows[t][j];

    set_default_splits(panel);
    demean_training_window(panel);
    panel.validate();
    return panel;
}

void write_csv(const ReturnsPanel& panel, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    out << "date";
    for (const auto& a : panel.assets) out << ',' << a;
    out << '\n';
    char buf[40];
    for (int t = 0; t < panel.T(); ++t) {
        out << panel.dates[t];
        for (int j = 0; j < panel.n(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.12g", panel.values(t, j));
            out << ',' << buf;
        }
        out << '\n';
    }
    if (!out) throw DataError("write failed: " + path);
}

ReturnsPanel simulate(const SimulationSpec& spec) {
    if (spec.n < 1) throw ArgumentError("simulate: n must be >= 1");
    if (spec.T < 10) throw ArgumentError("simulate: T must be >= 10");

    Rng rng(spec.seed);
    ReturnsPanel panel;
    panel.values = Mat(spec.T, spec.n);
    panel.dates.reserve(spec.T);
    for (int t = 0; t < spec.T; ++t) panel.dates.push_back(synthetic_date(t));
    panel.assets.reserve(spec.n);
    for (int j = 0; j < spec.n; ++j) panel.assets.push_back("asset" + std::to_string(j + 1));

    auto draw_row = [&](const LowerTriangular& L, int t) {
        Vec eps(spec.n);
        for (int j = 0; j < spec.n; ++j) eps[j] = rng.normal();
        for (int i = spec.n - 1; i >= 0; --i) {
            double s = 0.0;
            for (int k = 0; k <= i; ++k) s += L.at(i, k) * eps[k];
            panel.values(t, i) = s;
        }
    };

    switch (spec.dgp) {
        case Dgp::iid_gaussian: {
            Mat cov = spec.iid_covariance.rows() == spec.n ? spec.iid_covariance
                                                           : Mat::identity(spec.n);
            const LowerTriangular L = cholesky(cov);
            for (int t = 0; t < spec.T; ++t) draw_row(L, t);
            break;
        }
        case Dgp::scalar_bekk: {
            if (!spec.bekk) throw ArgumentError("simulate: scalar_bekk parameters missing");
            spec.bekk->validate();
            Mat H = spec.bekk->unconditional_covariance();
            const Mat CC = spec.bekk->C.outer();
            Vec r_prev(spec.n, 0.0);
            for (int t = 0; t < spec.T; ++t) {
                if (t > 0) {
                    Mat Hn = CC;
                    add_scaled(Hn, outer_product(r_prev), spec.bekk->a);
                    add_scaled(Hn, H, spec.bekk->b);
                    H = std::move(Hn);
                }
                draw_row(cholesky(H), t);
                r_prev = panel.row(t);
            }
            break;
        }
        case Dgp::dcc: {
            if (!spec.dcc) throw ArgumentError("simulate: dcc parameters missing");
            spec.dcc->validate();
            const int n = spec.n;
            if (spec.dcc->n() != n) throw ArgumentError("simulate: dcc parameter count != n");
            Vec h(n);
            for (int i = 0; i < n; ++i) h[i] = spec.dcc->garch[i].unconditional_variance();
            Mat Q = spec.dcc->S;
            Vec r_prev(n, 0.0), h_prev = h;
            for (int t = 0; t < spec.T; ++t) {
                if (t > 0) {
                    for (int i = 0; i < n; ++i)
                        h[i] = spec.dcc->garch[i].omega +
                               spec.dcc->garch[i].alpha * r_prev[i] * r_prev[i] +
                               spec.dcc->garch[i].beta * h_prev[i];
                    Vec z(n);
                    for (int i = 0; i < n; ++i) z[i] = r_prev[i] / std::sqrt(h_prev[i]);
                    Mat Qn = spec.dcc->S;
                    for (int i = 0; i < n; ++i)
                        for (int j = 0; j < n; ++j)
                            Qn(i, j) = (1.0 - spec.dcc->a - spec.dcc->b) * spec.dcc->S(i, j) +
                                       spec.dcc->a * z[i] * z[j] + spec.dcc->b * Q(i, j);
                    Q = std::move(Qn);
                }
                Mat H(n, n);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j)
                        H(i, j) = std::sqrt(h[i]) * std::sqrt(h[j]) * Q(i, j) /
                                  std::sqrt(Q(i, i) * Q(j, j));
                draw_row(cholesky(H), t);
                r_prev = panel.row(t);
                h_prev = h;
            }
            break;
        }
    }

    set_default_splits(panel);
    demean_training_window(panel);
    panel.validate();
    return panel;
}

ReturnsPanel random_subpanel(const ReturnsPanel& panel, int k, std::uint64_t seed) {
    if (k < 1 || k > panel.n())
        throw ArgumentError("random_subpanel: k must be in [1, n], got " + std::to_string(k));
    Rng rng(seed);
    std::vector<int> cols(panel.n());
    std::iota(cols.begin(), cols.end(), 0);
    for (int i = 0; i < k; ++i) {
        const int j = i + static_cast<int>(rng.below(cols.size() - i));
        std::swap(cols[i], cols[j]);
    }
    cols.resize(k);

    ReturnsPanel out;
    out.dates = panel.dates;
    out.train_end = panel.train_end;
    out.val_end = panel.val_end;
    out.values = Mat(panel.T(), k);
    for (int j = 0; j < k; ++j) {
        out.assets.push_back(panel.assets[cols[j]]);
        for (int t = 0; t < panel.T(); ++t) out.values(t, j) = panel.values(t, cols[j]);
    }
    out.validate();
    return out;
}

}  // namespace mvcov
