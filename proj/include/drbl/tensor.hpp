#ifndef DRBL_TENSOR_HPP
#define DRBL_TENSOR_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "drbl/errors.hpp"

namespace drbl {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

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

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using ColVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Dense row-major tensor. The flat buffer is an Eigen vector so it can be
/// viewed as a matrix (leading dimensions collapsed into rows) without copying.
/// Batch-major sequence tensors are laid out [batch x time x features].
template <typename Scalar>
class BasicTensor {
public:
    using Vector = ColVector<Scalar>;
    using Matrix = RowMatrix<Scalar>;
    using MatrixMap = Eigen::Map<Matrix>;
    using ConstMatrixMap = Eigen::Map<const Matrix>;

    BasicTensor() = default;

    explicit BasicTensor(Shape shape) : shape_(std::move(shape)) {
        validate_shape();
        data_ = Vector::Zero(static_cast<Eigen::Index>(shape_size(shape_)));
    }

    BasicTensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape();
        if (static_cast<std::size_t>(data_.size()) != shape_size(shape_)) {
            throw DimensionError("tensor of shape " + shape_string(shape_) + " needs " +
                                 std::to_string(shape_size(shape_)) + " values, got " +
                                 std::to_string(data_.size()));
        }
    }

    static BasicTensor filled(Shape shape, Scalar value) {
        BasicTensor t(std::move(shape));
        t.data_.setConstant(value);
        return t;
    }

    /// 2-D tensor from nested rows; all rows must have equal length.
    static BasicTensor from_rows(std::initializer_list<std::initializer_list<Scalar>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r ? rows.begin()->size() : 0;
        BasicTensor t(Shape{r, c});
        std::size_t i = 0;
        for (const auto& row : rows) {
            if (row.size() != c) throw DimensionError("ragged rows in tensor literal");
            for (Scalar v : row) t.data_[static_cast<Eigen::Index>(i++)] = v;
        }
        return t;
    }

    static BasicTensor from_matrix(const Matrix& m) {
        BasicTensor t(Shape{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
        t.matrix() = m;
        return t;
    }

    static BasicTensor from_vector(const Vector& v) {
        return BasicTensor(Shape{static_cast<std::size_t>(v.size())}, v);
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return static_cast<std::size_t>(data_.size()); }
    /// Default-constructed tensors hold nothing and have no shape.
    bool empty() const noexcept { return data_.size() == 0; }

    Vector& data() noexcept { return data_; }
    const Vector& data() const noexcept { return data_; }

    Scalar& operator[](std::size_t i) { return data_[static_cast<Eigen::Index>(i)]; }
    Scalar operator[](std::size_t i) const { return data_[static_cast<Eigen::Index>(i)]; }

    Scalar& at(std::size_t i, std::size_t j) { return data_[index2(i, j)]; }
    Scalar at(std::size_t i, std::size_t j) const { return data_[index2(i, j)]; }
    Scalar& at(std::size_t i, std::size_t j, std::size_t k) { return data_[index3(i, j, k)]; }
    Scalar at(std::size_t i, std::size_t j, std::size_t k) const { return data_[index3(i, j, k)]; }

    /// Matrix view with the last axis as columns and all leading axes as rows.
    MatrixMap matrix() { return MatrixMap(data_.data(), rows(), cols()); }
    ConstMatrixMap matrix() const { return ConstMatrixMap(data_.data(), rows(), cols()); }

    BasicTensor reshaped(Shape shape) const { return BasicTensor(std::move(shape), data_); }

    bool all_finite() const { return data_.allFinite(); }

    friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    void validate_shape() const {
        for (std::size_t d : shape_) {
            if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape_));
        }
    }

    Eigen::Index cols() const { return shape_.empty() ? 1 : static_cast<Eigen::Index>(shape_.back()); }
    Eigen::Index rows() const { return shape_.empty() ? 1 : data_.size() / cols(); }

    Eigen::Index index2(std::size_t i, std::size_t j) const {
        return static_cast<Eigen::Index>(i * shape_[1] + j);
    }
    Eigen::Index index3(std::size_t i, std::size_t j, std::size_t k) const {
        return static_cast<Eigen::Index>((i * shape_[1] + j) * shape_[2] + k);
    }

    Shape shape_;
    Vector data_;
};

using Real = double;
using Tensor = BasicTensor<Real>;
using Matrix = RowMatrix<Real>;
using Vector = ColVector<Real>;

} // namespace drbl

#endif // DRBL_TENSOR_HPP
