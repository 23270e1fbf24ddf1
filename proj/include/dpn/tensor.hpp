#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dpn/errors.hpp"

namespace dpn {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

inline std::size_t shape_product(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

/// Dense row-major array of doubles. Every arithmetic helper checks shapes and
/// throws DimensionError on mismatch.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
        check_dims();
        data_.assign(shape_product(shape_), fill);
    }

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_dims();
        if (shape_product(shape_) != data_.size()) {
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_string(shape_));
        }
    }

    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    std::size_t dim(std::size_t axis) const {
        if (axis >= shape_.size()) {
            throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                                 shape_string(shape_));
        }
        return shape_[axis];
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * shape_[1] + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * shape_[1] + j]; }

    double& operator()(std::size_t i, std::size_t j, std::size_t k) noexcept {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const noexcept {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    // Row i of a rank-2 tensor.
    std::span<double> row(std::size_t i) { return {data_.data() + i * shape_[1], shape_[1]}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * shape_[1], shape_[1]}; }

    void fill(double value) { std::fill(data_.begin(), data_.end(), value); }

    bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    void check_dims() const {
        for (std::size_t d : shape_) {
            if (d == 0) throw DimensionError("tensor shape " + shape_string(shape_) + " has a zero dimension");
        }
    }

    Shape shape_;
    std::vector<double> data_;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

inline void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                             shape_string(t.shape()));
    }
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(what) + ": shape " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

inline MatrixMap as_matrix(Tensor& t) {
    require_rank(t, 2, "as_matrix");
    return MatrixMap(t.data().data(), static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
}

inline ConstMatrixMap as_matrix(const Tensor& t) {
    require_rank(t, 2, "as_matrix");
    return ConstMatrixMap(t.data().data(), static_cast<Eigen::Index>(t.dim(0)),
                          static_cast<Eigen::Index>(t.dim(1)));
}

// A · B
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    if (a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    }
    Tensor out({a.dim(0), b.dim(1)});
    as_matrix(out).noalias() = as_matrix(a) * as_matrix(b);
    return out;
}

// A · Bᵀ
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul_nt");
    require_rank(b, 2, "matmul_nt");
    if (a.dim(1) != b.dim(1)) {
        throw DimensionError("matmul_nt: " + shape_string(a.shape()) + " x " + shape_string(b.shape()) + "^T");
    }
    Tensor out({a.dim(0), b.dim(0)});
    as_matrix(out).noalias() = as_matrix(a) * as_matrix(b).transpose();
    return out;
}

// Aᵀ · B
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul_tn");
    require_rank(b, 2, "matmul_tn");
    if (a.dim(0) != b.dim(0)) {
        throw DimensionError("matmul_tn: " + shape_string(a.shape()) + "^T x " + shape_string(b.shape()));
    }
    Tensor out({a.dim(1), b.dim(1)});
    as_matrix(out).noalias() = as_matrix(a).transpose() * as_matrix(b);
    return out;
}

// acc += Aᵀ · B
inline void add_matmul_tn(Tensor& acc, const Tensor& a, const Tensor& b) {
    if (a.dim(0) != b.dim(0) || acc.dim(0) != a.dim(1) || acc.dim(1) != b.dim(1)) {
        throw DimensionError("add_matmul_tn: " + shape_string(acc.shape()) + " += " + shape_string(a.shape()) +
                             "^T x " + shape_string(b.shape()));
    }
    as_matrix(acc).noalias() += as_matrix(a).transpose() * as_matrix(b);
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "hadamard");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

inline void add_inplace(Tensor& acc, const Tensor& t) {
    require_same_shape(acc, t, "add_inplace");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += t[i];
}

// acc += alpha * t
inline void axpy(Tensor& acc, double alpha, const Tensor& t) {
    require_same_shape(acc, t, "axpy");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += alpha * t[i];
}

inline void scale_inplace(Tensor& t, double alpha) {
    for (double& v : t.data()) v *= alpha;
}

inline Tensor transpose(const Tensor& t) {
    require_rank(t, 2, "transpose");
    Tensor out({t.dim(1), t.dim(0)});
    for (std::size_t i = 0; i < t.dim(0); ++i)
        for (std::size_t j = 0; j < t.dim(1); ++j) out(j, i) = t(i, j);
    return out;
}

inline double sum_squares(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

inline double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace dpn
