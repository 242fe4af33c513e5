#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace mvcov {

using Vec = std::vector<double>;

// Dense row-major matrix. Small n only; everything here is O(n^3) at worst.
class Mat {
  public:
    Mat() = default;
    Mat(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

    static Mat identity(int n);

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    double& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
    double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool operator==(const Mat&) const = default;

  private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

// Packed n(n+1)/2 storage, row-major over the lower triangle.
class LowerTriangular {
  public:
    LowerTriangular() = default;
    explicit LowerTriangular(int n) : n_(n), packed_(static_cast<std::size_t>(n) * (n + 1) / 2, 0.0) {}
    LowerTriangular(int n, Vec packed);

    // Packed length k must be a triangular number; returns the matching n.
    static int dim_from_packed_size(std::size_t k);

    int dim() const { return n_; }
    std::size_t packed_size() const { return packed_.size(); }

    double& at(int i, int j) { return packed_[idx(i, j)]; }
    double at(int i, int j) const { return packed_[idx(i, j)]; }

    Vec& packed() { return packed_; }
    const Vec& packed() const { return packed_; }

    Mat unpack() const;
    static LowerTriangular pack(const Mat& full);

    // L * L'
    Mat outer() const;

    bool operator==(const LowerTriangular&) const = default;

  private:
    std::size_t idx(int i, int j) const {
        return static_cast<std::size_t>(i) * (i + 1) / 2 + j;
    }
    int n_ = 0;
    Vec packed_;
};

// Symmetric positive-definite matrix with a lazily cached Cholesky factor.
class SPDMatrix {
  public:
    SPDMatrix() = default;
    explicit SPDMatrix(Mat values);

    int dim() const { return values_.rows(); }
    const Mat& values() const { return values_; }

    // Lower Cholesky factor; computed on first use, then cached.
    const LowerTriangular& chol() const;

    bool has_chol() const { return chol_.has_value(); }

  private:
    Mat values_;
    mutable std::optional<LowerTriangular> chol_;
};

// Lower Cholesky factor of a symmetric PD matrix.
// Throws DecompositionError carrying the failing pivot index.
LowerTriangular cholesky(const Mat& m);
inline LowerTriangular cholesky(const SPDMatrix& m) { return m.chol(); }

// Solves L x = b in place.
void forward_solve(const LowerTriangular& L, Vec& b);
// Solves L' x = b in place.
void back_solve(const LowerTriangular& L, Vec& b);
// Solves (L L') x = b, returning x.
Vec chol_solve(const LowerTriangular& L, Vec b);

// log|m| and r' m^{-1} r via the Cholesky factor; no explicit inverse.
struct LogdetQuad {
    double logdet;
    double quad;
};
LogdetQuad logdet_and_quadform(const SPDMatrix& m, const Vec& r);
LogdetQuad logdet_and_quadform(const LowerTriangular& L, const Vec& r);

// Frobenius norm, the fixed norm used for all boundedness checks.
double frobenius_norm(const Mat& m);
inline double spectral_norm_upper_bound(const SPDMatrix& m) { return frobenius_norm(m.values()); }

// Helpers shared by the filters.
Mat outer_product(const Vec& v);                 // v v'
void add_scaled(Mat& dst, const Mat& src, double c);
double frobenius_inner(const Mat& a, const Mat& b);  // sum_ij a_ij b_ij
Vec mat_vec(const Mat& m, const Vec& v);

}  // namespace mvcov
