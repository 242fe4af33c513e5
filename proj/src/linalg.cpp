#include "mvcov/linalg.hpp"

#include <cmath>
#include <string>

#include "mvcov/errors.hpp"

namespace mvcov {

Mat Mat::identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

LowerTriangular::LowerTriangular(int n, Vec packed) : n_(n), packed_(std::move(packed)) {
    if (packed_.size() != static_cast<std::size_t>(n) * (n + 1) / 2)
        throw ArgumentError("packed length does not match dimension " + std::to_string(n));
}

int LowerTriangular::dim_from_packed_size(std::size_t k) {
    // n(n+1)/2 = k
    const int n = static_cast<int>((std::sqrt(8.0 * static_cast<double>(k) + 1.0) - 1.0) / 2.0 + 0.5);
    if (static_cast<std::size_t>(n) * (n + 1) / 2 != k)
        throw ArgumentError("length " + std::to_string(k) + " is not a triangular number");
    return n;
}

Mat LowerTriangular::unpack() const {
    Mat m(n_, n_);
    for (int i = 0; i < n_; ++i)
        for (int j = 0; j <= i; ++j) m(i, j) = at(i, j);
    return m;
}

LowerTriangular LowerTriangular::pack(const Mat& full) {
    LowerTriangular L(full.rows());
    for (int i = 0; i < full.rows(); ++i)
        for (int j = 0; j <= i; ++j) L.at(i, j) = full(i, j);
    return L;
}

Mat LowerTriangular::outer() const {
    Mat m(n_, n_);
    for (int i = 0; i < n_; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = 0.0;
            for (int k = 0; k <= j; ++k) s += at(i, k) * at(j, k);
            m(i, j) = s;
            m(j, i) = s;
        }
    }
    return m;
}

SPDMatrix::SPDMatrix(Mat values) : values_(std::move(values)) {
    if (values_.rows() != values_.cols())
        throw ArgumentError("SPDMatrix requires a square matrix");
}

const LowerTriangular& SPDMatrix::chol() const {
    if (!chol_) chol_ = cholesky(values_);
    return *chol_;
}

LowerTriangular cholesky(const Mat& m) {
    const int n = m.rows();
    LowerTriangular L(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = m(i, j);
            for (int k = 0; k < j; ++k) s -= L.at(i, k) * L.at(j, k);
            if (i == j) {
                if (!(s > 0.0) || !std::isfinite(s))
                    throw DecompositionError(i, "matrix is not positive definite at pivot " +
                                                    std::to_string(i));
                L.at(i, i) = std::sqrt(s);
            } else {
                L.at(i, j) = s / L.at(j, j);
            }
        }
    }
    return L;
}

void forward_solve(const LowerTriangular& L, Vec& b) {
    const int n = L.dim();
    for (int i = 0; i < n; ++i) {
        double s = b[i];
        for (int k = 0; k < i; ++k) s -= L.at(i, k) * b[k];
        b[i] = s / L.at(i, i);
    }
}

void back_solve(const LowerTriangular& L, Vec& b) {
    const int n = L.dim();
    for (int i = n - 1; i >= 0; --i) {
        double s = b[i];
        for (int k = i + 1; k < n; ++k) s -= L.at(k, i) * b[k];
        b[i] = s / L.at(i, i);
    }
}

Vec chol_solve(const LowerTriangular& L, Vec b) {
    forward_solve(L, b);
    back_solve(L, b);
    return b;
}

LogdetQuad logdet_and_quadform(const LowerTriangular& L, const Vec& r) {
    const int n = L.dim();
    double logdet = 0.0;
    for (int i = 0; i < n; ++i) logdet += std::log(L.at(i, i));
    logdet *= 2.0;
    Vec y = r;
    forward_solve(L, y);
    double quad = 0.0;
    for (double v : y) quad += v * v;
    return {logdet, quad};
}

LogdetQuad logdet_and_quadform(const SPDMatrix& m, const Vec& r) {
    if (static_cast<int>(r.size()) != m.dim())
        throw ArgumentError("vector length does not match matrix dimension");
    return logdet_and_quadform(m.chol(), r);
}

double frobenius_norm(const Mat& m) {
    double s = 0.0;
    const std::size_t total = static_cast<std::size_t>(m.rows()) * m.cols();
    for (std::size_t i = 0; i < total; ++i) s += m.data()[i] * m.data()[i];
    return std::sqrt(s);
}

Mat outer_product(const Vec& v) {
    const int n = static_cast<int>(v.size());
    Mat m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = v[i] * v[j];
    return m;
}

void add_scaled(Mat& dst, const Mat& src, double c) {
    const std::size_t total = static_cast<std::size_t>(dst.rows()) * dst.cols();
    for (std::size_t i = 0; i < total; ++i) dst.data()[i] += c * src.data()[i];
}

double frobenius_inner(const Mat& a, const Mat& b) {
    double s = 0.0;
    const std::size_t total = static_cast<std::size_t>(a.rows()) * a.cols();
    for (std::size_t i = 0; i < total; ++i) s += a.data()[i] * b.data()[i];
    return s;
}

Vec mat_vec(const Mat& m, const Vec& v) {
    Vec out(m.rows(), 0.0);
    for (int i = 0; i < m.rows(); ++i) {
        double s = 0.0;
        for (int j = 0; j < m.cols(); ++j) s += m(i, j) * v[j];
        out[i] = s;
    }
    return out;
}

}  // namespace mvcov
