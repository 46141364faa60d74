#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string_view>
#include <vector>

namespace fec {

// Cache-line aligned storage. Vectorized kernels choose their scalar
// prologue from the buffer address, so a fixed alignment keeps the
// floating-point evaluation order (and results) independent of where the
// allocator happened to place the data.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <class U>
    bool operator==(const AlignedAllocator<U>&) const noexcept {
        return true;
    }
};

// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool all_finite() const;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double, AlignedAllocator<double>> data_;
};

enum class Metric { Euclidean, Cosine };

std::string_view to_string(Metric m);
Metric parse_metric(std::string_view name);

double dot(std::span<const double> u, std::span<const double> v);
double norm(std::span<const double> u);

// Euclidean: |u - v|. Cosine: 1 - u.v / (|u||v|), clamped to [0, 2].
// Throws std::invalid_argument on dimension mismatch or, for Cosine, a
// zero-norm input.
double distance(std::span<const double> u, std::span<const double> v, Metric m);

std::vector<double> row_mean(const Matrix& x, std::span<const std::size_t> subset);
std::vector<double> column_mean(const Matrix& x);

Matrix select_rows(const Matrix& x, std::span<const std::size_t> indices);
Matrix transpose(const Matrix& a);

// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);

// Unbiased sample covariance (divides by rows - 1) of mean-centered x.
Matrix covariance(const Matrix& x);

struct EigenSystem {
    std::vector<double> values;  // descending
    Matrix vectors;              // column j pairs with values[j]
    int sweeps = 0;
};

// Cyclic Jacobi rotations on a symmetric matrix. Converged when the largest
// off-diagonal magnitude drops below tol * max(1, ||A||_F). Each eigenvector
// has its largest-magnitude coordinate made positive.
EigenSystem symmetric_eigen(const Matrix& a, double tol = 1e-12, int max_sweeps = 100);

// Projects mean-centered rows onto the leading `dims` principal axes.
Matrix pca_project(const Matrix& x, std::size_t dims);

}  // namespace fec
