#include "fec/linalg.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "fec/errors.hpp"

namespace fec {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMat> view(const Matrix& m) {
    return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

Eigen::Map<RowMat> view(Matrix& m) {
    return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(data.begin(), data.end()) {
    if (data_.size() != rows * cols) {
        throw std::invalid_argument("Matrix: data length " + std::to_string(data_.size()) +
                                    " != rows * cols = " + std::to_string(rows * cols));
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw std::invalid_argument("Matrix: ragged initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string_view to_string(Metric m) {
    return m == Metric::Euclidean ? "euclidean" : "cosine";
}

Metric parse_metric(std::string_view name) {
    if (name == "euclidean") return Metric::Euclidean;
    if (name == "cosine") return Metric::Cosine;
    throw std::invalid_argument("unknown metric: " + std::string(name));
}

double dot(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw std::invalid_argument("dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return s;
}

double norm(std::span<const double> u) {
    return std::sqrt(dot(u, u));
}

double distance(std::span<const double> u, std::span<const double> v, Metric m) {
    if (u.size() != v.size()) {
        throw std::invalid_argument("distance: dimension mismatch (" + std::to_string(u.size()) +
                                    " vs " + std::to_string(v.size()) + ")");
    }
    if (m == Metric::Euclidean) {
        double s = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double d = u[i] - v[i];
            s += d * d;
        }
        return std::sqrt(s);
    }
    const double nu = norm(u);
    const double nv = norm(v);
    if (nu == 0.0 || nv == 0.0) throw std::invalid_argument("distance: zero-norm vector under cosine metric");
    const double sim = dot(u, v) / (nu * nv);
    return std::clamp(1.0 - sim, 0.0, 2.0);
}

std::vector<double> row_mean(const Matrix& x, std::span<const std::size_t> subset) {
    if (subset.empty()) throw std::invalid_argument("row_mean: empty subset");
    std::vector<double> mean(x.cols(), 0.0);
    for (std::size_t idx : subset) {
        if (idx >= x.rows()) throw std::out_of_range("row_mean: row index out of range");
        const auto r = x.row(idx);
        for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += r[j];
    }
    const double inv = 1.0 / static_cast<double>(subset.size());
    for (double& v : mean) v *= inv;
    return mean;
}

std::vector<double> column_mean(const Matrix& x) {
    std::vector<std::size_t> all(x.rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return row_mean(x, all);
}

Matrix select_rows(const Matrix& x, std::span<const std::size_t> indices) {
    Matrix out(indices.size(), x.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= x.rows()) throw std::out_of_range("select_rows: index out of range");
        const auto src = x.row(indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
    Matrix out(a.rows(), b.cols());
    view(out).noalias() = view(a) * view(b);
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
    Matrix out(a.rows(), b.rows());
    view(out).noalias() = view(a) * view(b).transpose();
    return out;
}

Matrix covariance(const Matrix& x) {
    if (x.rows() < 2) throw std::invalid_argument("covariance: need at least two rows");
    const auto mean = column_mean(x);
    Matrix centered = x;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto r = centered.row(i);
        for (std::size_t j = 0; j < x.cols(); ++j) r[j] -= mean[j];
    }
    const std::size_t d = x.cols();
    Matrix cov(d, d);
    const double inv = 1.0 / static_cast<double>(x.rows() - 1);
    for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = a; b < d; ++b) {
            double s = 0.0;
            for (std::size_t i = 0; i < x.rows(); ++i) s += centered(i, a) * centered(i, b);
            cov(a, b) = s * inv;
            cov(b, a) = cov(a, b);
        }
    }
    return cov;
}

EigenSystem symmetric_eigen(const Matrix& a_in, double tol, int max_sweeps) {
    if (a_in.rows() != a_in.cols()) throw std::invalid_argument("symmetric_eigen: matrix not square");
    const std::size_t n = a_in.rows();
    Matrix a = a_in;
    Matrix v(n, n);
    for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

    double frob = 0.0;
    for (double x : a.data()) frob += x * x;
    const double threshold = tol * std::max(1.0, std::sqrt(frob));

    auto max_off = [&] {
        double m = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) m = std::max(m, std::abs(a(p, q)));
        return m;
    };

    int sweep = 0;
    double off = max_off();
    while (off >= threshold) {
        if (sweep == max_sweeps) {
            throw ConvergenceError("symmetric_eigen: no convergence after " + std::to_string(max_sweeps) +
                                       " sweeps (off-diagonal " + std::to_string(off) + ")",
                                   off);
        }
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                a(p, p) -= t * apq;
                a(q, q) += t * apq;
                a(p, q) = a(q, p) = 0.0;
                for (std::size_t r = 0; r < n; ++r) {
                    if (r == p || r == q) continue;
                    const double arp = a(r, p);
                    const double arq = a(r, q);
                    a(r, p) = a(p, r) = c * arp - s * arq;
                    a(r, q) = a(q, r) = s * arp + c * arq;
                }
                for (std::size_t r = 0; r < n; ++r) {
                    const double vrp = v(r, p);
                    const double vrq = v(r, q);
                    v(r, p) = c * vrp - s * vrq;
                    v(r, q) = s * vrp + c * vrq;
                }
            }
        }
        ++sweep;
        off = max_off();
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    EigenSystem out;
    out.sweeps = sweep;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        out.values[j] = a(src, src);
        std::size_t arg = 0;
        for (std::size_t r = 1; r < n; ++r)
            if (std::abs(v(r, src)) > std::abs(v(arg, src))) arg = r;
        const double sign = v(arg, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t r = 0; r < n; ++r) out.vectors(r, j) = sign * v(r, src);
    }
    return out;
}

Matrix pca_project(const Matrix& x, std::size_t dims) {
    if (x.rows() < 2) throw std::invalid_argument("pca_project: need at least two rows");
    if (dims < 1 || dims > std::min(x.rows(), x.cols())) {
        throw std::invalid_argument("pca_project: dims " + std::to_string(dims) + " outside [1, " +
                                    std::to_string(std::min(x.rows(), x.cols())) + "]");
    }
    const auto eig = symmetric_eigen(covariance(x));
    const auto mean = column_mean(x);
    Matrix out(x.rows(), dims);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto r = x.row(i);
        for (std::size_t k = 0; k < dims; ++k) {
            double s = 0.0;
            for (std::size_t j = 0; j < x.cols(); ++j) s += (r[j] - mean[j]) * eig.vectors(j, k);
            out(i, k) = s;
        }
    }
    return out;
}

}  // namespace fec
