#ifndef DRBL_OPS_HPP
#define DRBL_OPS_HPP

#include <algorithm>
#include <cmath>
#include <utility>

#include "drbl/tensor.hpp"

// Differentiable primitives. Each forward function has a matching
// `*_backward` that maps the upstream gradient to input gradients; the layer
// code composes these by hand rather than through a tape.

namespace drbl {

// --- scalar kernels -------------------------------------------------------

template <typename Scalar>
inline Scalar sigmoid_scalar(Scalar x) {
    if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
    const Scalar e = std::exp(x);
    return e / (Scalar(1) + e);
}

/// Elementwise sigmoid of any Eigen expression, evaluated into a plain object.
template <typename Derived>
inline typename Derived::PlainObject sigmoid_eval(const Eigen::MatrixBase<Derived>& x) {
    using Scalar = typename Derived::Scalar;
    return x.unaryExpr([](Scalar v) { return sigmoid_scalar(v); });
}

template <typename Derived>
inline typename Derived::PlainObject tanh_eval(const Eigen::MatrixBase<Derived>& x) {
    return x.array().tanh().matrix();
}

template <typename Derived>
inline typename Derived::PlainObject relu_eval(const Eigen::MatrixBase<Derived>& x) {
    return x.cwiseMax(typename Derived::Scalar(0));
}

// --- tensor-level ops -----------------------------------------------------

template <typename Scalar>
BasicTensor<Scalar> matmul(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul shape mismatch: " + shape_string(a.shape()) + " x " +
                             shape_string(b.shape()));
    }
    return BasicTensor<Scalar>::from_matrix(a.matrix() * b.matrix());
}

/// Returns (dA, dB) = (dC B^T, A^T dC).
template <typename Scalar>
std::pair<BasicTensor<Scalar>, BasicTensor<Scalar>> matmul_backward(const BasicTensor<Scalar>& a,
                                                                    const BasicTensor<Scalar>& b,
                                                                    const BasicTensor<Scalar>& dc) {
    return {BasicTensor<Scalar>::from_matrix(dc.matrix() * b.matrix().transpose()),
            BasicTensor<Scalar>::from_matrix(a.matrix().transpose() * dc.matrix())};
}

template <typename Scalar>
BasicTensor<Scalar> sigmoid(const BasicTensor<Scalar>& x) {
    return BasicTensor<Scalar>(x.shape(), sigmoid_eval(x.data()));
}

/// Takes the forward output y.
template <typename Scalar>
BasicTensor<Scalar> sigmoid_backward(const BasicTensor<Scalar>& y, const BasicTensor<Scalar>& dy) {
    return BasicTensor<Scalar>(
        y.shape(), (y.data().array() * (Scalar(1) - y.data().array()) * dy.data().array()).matrix());
}

template <typename Scalar>
BasicTensor<Scalar> tanh_act(const BasicTensor<Scalar>& x) {
    return BasicTensor<Scalar>(x.shape(), tanh_eval(x.data()));
}

/// Takes the forward output y.
template <typename Scalar>
BasicTensor<Scalar> tanh_backward(const BasicTensor<Scalar>& y, const BasicTensor<Scalar>& dy) {
    return BasicTensor<Scalar>(
        y.shape(), ((Scalar(1) - y.data().array().square()) * dy.data().array()).matrix());
}

template <typename Scalar>
BasicTensor<Scalar> relu(const BasicTensor<Scalar>& x) {
    return BasicTensor<Scalar>(x.shape(), relu_eval(x.data()));
}

/// Takes the forward input x.
template <typename Scalar>
BasicTensor<Scalar> relu_backward(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& dy) {
    return BasicTensor<Scalar>(
        x.shape(), (x.data().array() > Scalar(0)).select(dy.data().array(), Scalar(0)).matrix());
}

/// Feature-axis concatenation of two [T x h] (or [batch x T x h]) tensors, a first.
template <typename Scalar>
BasicTensor<Scalar> concat_features(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
    if (a.rank() != b.rank() || a.rank() < 2 ||
        !std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin())) {
        throw DimensionError("concat_features leading-dimension mismatch: " + shape_string(a.shape()) +
                             " vs " + shape_string(b.shape()));
    }
    Shape out_shape = a.shape();
    out_shape.back() = a.shape().back() + b.shape().back();
    BasicTensor<Scalar> out(out_shape);
    auto m = out.matrix();
    const auto ca = static_cast<Eigen::Index>(a.shape().back());
    m.leftCols(ca) = a.matrix();
    m.rightCols(m.cols() - ca) = b.matrix();
    return out;
}

/// Splits a concatenated tensor (or its gradient) at feature column `left_width`.
template <typename Scalar>
std::pair<BasicTensor<Scalar>, BasicTensor<Scalar>> split_features(const BasicTensor<Scalar>& x,
                                                                   std::size_t left_width) {
    if (x.rank() < 2 || left_width == 0 || left_width >= x.shape().back()) {
        throw DimensionError("cannot split " + shape_string(x.shape()) + " at column " +
                             std::to_string(left_width));
    }
    Shape ls = x.shape(), rs = x.shape();
    ls.back() = left_width;
    rs.back() = x.shape().back() - left_width;
    BasicTensor<Scalar> l(ls), r(rs);
    const auto lw = static_cast<Eigen::Index>(left_width);
    l.matrix() = x.matrix().leftCols(lw);
    r.matrix() = x.matrix().rightCols(x.matrix().cols() - lw);
    return {std::move(l), std::move(r)};
}

/// Reverses the time axis of [T x d] or [batch x T x d]. Its own backward rule.
template <typename Scalar>
BasicTensor<Scalar> reverse_time(const BasicTensor<Scalar>& x) {
    if (x.rank() != 2 && x.rank() != 3) {
        throw DimensionError("reverse_time expects [T x d] or [batch x T x d], got " + shape_string(x.shape()));
    }
    const std::size_t batch = x.rank() == 3 ? x.dim(0) : 1;
    const std::size_t steps = x.dim(x.rank() - 2);
    const auto width = static_cast<Eigen::Index>(x.shape().back());
    BasicTensor<Scalar> out(x.shape());
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < steps; ++t) {
            const auto src = static_cast<Eigen::Index>((b * steps + t) * width);
            const auto dst = static_cast<Eigen::Index>((b * steps + (steps - 1 - t)) * width);
            out.data().segment(dst, width) = x.data().segment(src, width);
        }
    }
    return out;
}

} // namespace drbl

#endif // DRBL_OPS_HPP
