#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "latnet/errors.hpp"
#include "latnet/rng.hpp"

namespace latnet {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

enum class Norm { linf, l2 };

inline const char* norm_name(Norm n) { return n == Norm::linf ? "linf" : "l2"; }

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

inline Index shape_size(const Shape& s) {
    Index n = 1;
    for (Index d : s) n *= d;
    return n;
}

// Dense n-dimensional array of real scalars, flat row-major storage on top of
// an Eigen array. This is the universal value type: inputs, activations,
// parameters, gradients and perturbations are all tensors. Tensors are plain
// values; copies are deep and a constructed tensor is safe to share across
// concurrent readers.
template <typename Scalar>
class TensorT {
public:
    using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

    TensorT() = default;

    explicit TensorT(Shape shape) : shape_(std::move(shape)) {
        check_shape(shape_);
        data_ = Storage::Zero(shape_size(shape_));
    }

    TensorT(Shape shape, Scalar fill) : shape_(std::move(shape)) {
        check_shape(shape_);
        data_ = Storage::Constant(shape_size(shape_), fill);
    }

    TensorT(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape(shape_);
        if (data_.size() != shape_size(shape_))
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
    }

    TensorT(Shape shape, std::initializer_list<Scalar> values)
        : TensorT(std::move(shape), Storage(Eigen::Map<const Storage>(values.begin(),
                                                                      static_cast<Index>(values.size())))) {}

    static TensorT zeros(Shape shape) { return TensorT(std::move(shape)); }
    static TensorT full(Shape shape, Scalar v) { return TensorT(std::move(shape), v); }

    static TensorT identity(Index n) {
        TensorT t({n, n});
        for (Index i = 0; i < n; ++i) t.data_[i * n + i] = Scalar(1);
        return t;
    }

    const Shape& shape() const { return shape_; }
    Index rank() const { return static_cast<Index>(shape_.size()); }
    Index dim(Index i) const { return shape_[static_cast<std::size_t>(i)]; }
    Index size() const { return data_.size(); }

    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }

    Storage& array() { return data_; }
    const Storage& array() const { return data_; }

    Scalar operator[](Index flat) const { return data_[flat]; }
    Scalar& operator[](Index flat) { return data_[flat]; }

    Scalar operator()(Index i, Index j) const { return data_[i * shape_[1] + j]; }
    Scalar& operator()(Index i, Index j) { return data_[i * shape_[1] + j]; }
    Scalar operator()(Index i, Index j, Index k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    Scalar& operator()(Index i, Index j, Index k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    Scalar operator()(Index i, Index j, Index k, Index l) const {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    Scalar& operator()(Index i, Index j, Index k, Index l) {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

    // Row-major reinterpretation; element count must be preserved.
    TensorT reshaped(Shape new_shape) const& {
        TensorT t(*this);
        t.reshape_in_place(std::move(new_shape));
        return t;
    }
    TensorT reshaped(Shape new_shape) && {
        reshape_in_place(std::move(new_shape));
        return std::move(*this);
    }

    void reshape_in_place(Shape new_shape) {
        check_shape(new_shape);
        if (shape_size(new_shape) != data_.size())
            throw ShapeError("reshape from " + shape_str(shape_) + " to " + shape_str(new_shape) +
                             " changes element count");
        shape_ = std::move(new_shape);
    }

    // Reallocates only when the element count changes.
    void resize(Shape new_shape) {
        check_shape(new_shape);
        const Index n = shape_size(new_shape);
        if (n != data_.size()) data_.resize(n);
        shape_ = std::move(new_shape);
    }

    void set_zero() { data_.setZero(); }

    bool all_finite() const { return data_.isFinite().all(); }

    friend bool operator==(const TensorT& a, const TensorT& b) {
        return a.shape_ == b.shape_ && (a.data_ == b.data_).all();
    }

private:
    static void check_shape(const Shape& s) {
        for (Index d : s)
            if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(s));
    }

    Shape shape_;
    Storage data_{};
};

using Tensor = TensorT<double>;

namespace detail {

template <typename Scalar>
using MatrixRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using MatMap = Eigen::Map<MatrixRM<Scalar>>;

template <typename Scalar>
using ConstMatMap = Eigen::Map<const MatrixRM<Scalar>>;

template <typename Scalar>
inline void require_same_shape(const TensorT<Scalar>& a, const TensorT<Scalar>& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

}  // namespace detail

// --- elementwise arithmetic -------------------------------------------------

template <typename Scalar>
TensorT<Scalar> operator+(const TensorT<Scalar>& a, const TensorT<Scalar>& b) {
    detail::require_same_shape(a, b, "operator+");
    return TensorT<Scalar>(a.shape(), a.array() + b.array());
}

template <typename Scalar>
TensorT<Scalar> operator-(const TensorT<Scalar>& a, const TensorT<Scalar>& b) {
    detail::require_same_shape(a, b, "operator-");
    return TensorT<Scalar>(a.shape(), a.array() - b.array());
}

template <typename Scalar>
TensorT<Scalar> operator*(Scalar s, const TensorT<Scalar>& t) {
    return TensorT<Scalar>(t.shape(), s * t.array());
}

template <typename Scalar>
TensorT<Scalar> operator*(const TensorT<Scalar>& t, Scalar s) {
    return s * t;
}

template <typename Scalar>
TensorT<Scalar>& operator+=(TensorT<Scalar>& a, const TensorT<Scalar>& b) {
    detail::require_same_shape(a, b, "operator+=");
    a.array() += b.array();
    return a;
}

template <typename Scalar>
TensorT<Scalar>& operator-=(TensorT<Scalar>& a, const TensorT<Scalar>& b) {
    detail::require_same_shape(a, b, "operator-=");
    a.array() -= b.array();
    return a;
}

// Elementwise clipping to [lo, hi].
template <typename Scalar>
TensorT<Scalar> clamp(const TensorT<Scalar>& t, Scalar lo, Scalar hi) {
    return TensorT<Scalar>(t.shape(), t.array().max(lo).min(hi));
}

// Elementwise -1 / 0 / +1 with sign(0) = 0.
template <typename Scalar>
TensorT<Scalar> sign(const TensorT<Scalar>& t) {
    return TensorT<Scalar>(t.shape(), t.array().sign());
}

template <typename Scalar>
TensorT<Scalar> reshape(TensorT<Scalar> t, Shape new_shape) {
    t.reshape_in_place(std::move(new_shape));
    return t;
}

// --- norms -------------------------------------------------------------------

template <typename Scalar>
Scalar linf_norm(const TensorT<Scalar>& t) {
    return t.size() == 0 ? Scalar(0) : t.array().abs().maxCoeff();
}

template <typename Scalar>
Scalar l2_norm(const TensorT<Scalar>& t) {
    return t.array().matrix().norm();
}

template <typename Scalar>
Scalar norm_of(const TensorT<Scalar>& t, Norm n) {
    return n == Norm::linf ? linf_norm(t) : l2_norm(t);
}

// --- matmul -------------------------------------------------------------------

template <typename Scalar>
void matmul_into(const TensorT<Scalar>& a, const TensorT<Scalar>& b, TensorT<Scalar>& out) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul: operands must be rank 2, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    if (a.dim(1) != b.dim(0))
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
    out.resize({m, n});
    detail::ConstMatMap<Scalar> am(a.data(), m, k), bm(b.data(), k, n);
    detail::MatMap<Scalar> om(out.data(), m, n);
    om.noalias() = am * bm;
}

template <typename Scalar>
TensorT<Scalar> matmul(const TensorT<Scalar>& a, const TensorT<Scalar>& b) {
    TensorT<Scalar> out;
    matmul_into(a, b, out);
    return out;
}

// --- 2-D cross-correlation ("conv2d") ----------------------------------------
//
// The batched kernels below are the single implementation used by the layer
// machinery; the per-image conv2d entry point wraps them with batch size 1.
// Lowering is im2col followed by one Eigen matrix product per example.

struct ConvDims {
    Index batch, c_in, h, w;
    Index c_out, kh, kw;
    Index stride, pad;
    Index h_out, w_out;
};

template <typename Scalar>
ConvDims conv2d_dims(const TensorT<Scalar>& input, const TensorT<Scalar>& kernels,
                     const TensorT<Scalar>& bias, Index stride, Index pad) {
    if (input.rank() != 4 || kernels.rank() != 4)
        throw ShapeError("conv2d: want input [B,C,H,W] and kernels [C',C,kh,kw], got " +
                         shape_str(input.shape()) + " and " + shape_str(kernels.shape()));
    if (bias.rank() != 1 || bias.dim(0) != kernels.dim(0))
        throw ShapeError("conv2d: bias shape " + shape_str(bias.shape()) +
                         " does not match kernel count " + std::to_string(kernels.dim(0)));
    if (input.dim(1) != kernels.dim(1))
        throw ShapeError("conv2d: input channels " + std::to_string(input.dim(1)) +
                         " != kernel channels " + std::to_string(kernels.dim(1)));
    if (stride < 1) throw ShapeError("conv2d: stride must be positive");
    if (pad < 0) throw ShapeError("conv2d: padding must be non-negative");

    ConvDims d{input.dim(0), input.dim(1), input.dim(2), input.dim(3),
               kernels.dim(0), kernels.dim(2), kernels.dim(3), stride, pad, 0, 0};
    const Index hn = d.h + 2 * pad - d.kh;
    const Index wn = d.w + 2 * pad - d.kw;
    if (hn < 0 || wn < 0 || hn % stride != 0 || wn % stride != 0)
        throw ShapeError("conv2d: output size (H+2p-kh)/s+1 is not a positive integer for input " +
                         shape_str(input.shape()) + " kernel " + shape_str(kernels.shape()));
    d.h_out = hn / stride + 1;
    d.w_out = wn / stride + 1;
    return d;
}

namespace detail {

// Unpack one C x H x W image into a (C*kh*kw) x (H'*W') patch matrix.
template <typename Scalar>
void im2col(const Scalar* img, const ConvDims& d, Scalar* cols) {
    const Index hw_out = d.h_out * d.w_out;
    Index row = 0;
    for (Index c = 0; c < d.c_in; ++c) {
        const Scalar* plane = img + c * d.h * d.w;
        for (Index ki = 0; ki < d.kh; ++ki) {
            for (Index kj = 0; kj < d.kw; ++kj, ++row) {
                Scalar* dst = cols + row * hw_out;
                for (Index oh = 0; oh < d.h_out; ++oh) {
                    const Index ih = oh * d.stride - d.pad + ki;
                    Scalar* out_row = dst + oh * d.w_out;
                    if (ih < 0 || ih >= d.h) {
                        for (Index ow = 0; ow < d.w_out; ++ow) out_row[ow] = Scalar(0);
                        continue;
                    }
                    const Scalar* in_row = plane + ih * d.w;
                    for (Index ow = 0; ow < d.w_out; ++ow) {
                        const Index iw = ow * d.stride - d.pad + kj;
                        out_row[ow] = (iw >= 0 && iw < d.w) ? in_row[iw] : Scalar(0);
                    }
                }
            }
        }
    }
}

// Scatter-add the patch matrix back onto a C x H x W gradient image.
template <typename Scalar>
void col2im_add(const Scalar* cols, const ConvDims& d, Scalar* img) {
    const Index hw_out = d.h_out * d.w_out;
    Index row = 0;
    for (Index c = 0; c < d.c_in; ++c) {
        Scalar* plane = img + c * d.h * d.w;
        for (Index ki = 0; ki < d.kh; ++ki) {
            for (Index kj = 0; kj < d.kw; ++kj, ++row) {
                const Scalar* src = cols + row * hw_out;
                for (Index oh = 0; oh < d.h_out; ++oh) {
                    const Index ih = oh * d.stride - d.pad + ki;
                    if (ih < 0 || ih >= d.h) continue;
                    Scalar* in_row = plane + ih * d.w;
                    const Scalar* src_row = src + oh * d.w_out;
                    for (Index ow = 0; ow < d.w_out; ++ow) {
                        const Index iw = ow * d.stride - d.pad + kj;
                        if (iw >= 0 && iw < d.w) in_row[iw] += src_row[ow];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// Forward cross-correlation over a batch: input [B,C,H,W] -> out [B,C',H',W'].
// `cols` is caller-owned scratch, reused across calls without reallocating.
template <typename Scalar>
void conv2d_batch(const TensorT<Scalar>& input, const TensorT<Scalar>& kernels,
                  const TensorT<Scalar>& bias, Index stride, Index pad, TensorT<Scalar>& out,
                  TensorT<Scalar>& cols) {
    const ConvDims d = conv2d_dims(input, kernels, bias, stride, pad);
    const Index k = d.c_in * d.kh * d.kw;
    const Index hw = d.h_out * d.w_out;
    out.resize({d.batch, d.c_out, d.h_out, d.w_out});
    cols.resize({k, hw});

    detail::ConstMatMap<Scalar> wm(kernels.data(), d.c_out, k);
    for (Index b = 0; b < d.batch; ++b) {
        detail::im2col(input.data() + b * d.c_in * d.h * d.w, d, cols.data());
        detail::ConstMatMap<Scalar> cm(cols.data(), k, hw);
        detail::MatMap<Scalar> om(out.data() + b * d.c_out * hw, d.c_out, hw);
        om.noalias() = wm * cm;
        om.colwise() += Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(bias.data(), d.c_out);
    }
}

// Gradient with respect to the convolution input.
template <typename Scalar>
void conv2d_input_grad_batch(const TensorT<Scalar>& kernels, const TensorT<Scalar>& grad_out,
                             const ConvDims& d, TensorT<Scalar>& grad_in, TensorT<Scalar>& cols) {
    const Index k = d.c_in * d.kh * d.kw;
    const Index hw = d.h_out * d.w_out;
    grad_in.resize({d.batch, d.c_in, d.h, d.w});
    grad_in.set_zero();
    cols.resize({k, hw});

    detail::ConstMatMap<Scalar> wm(kernels.data(), d.c_out, k);
    for (Index b = 0; b < d.batch; ++b) {
        detail::ConstMatMap<Scalar> gm(grad_out.data() + b * d.c_out * hw, d.c_out, hw);
        detail::MatMap<Scalar> cm(cols.data(), k, hw);
        cm.noalias() = wm.transpose() * gm;
        detail::col2im_add(cols.data(), d, grad_in.data() + b * d.c_in * d.h * d.w);
    }
}

// Gradients with respect to kernels and bias, accumulated over the batch into
// `grad_kernels` / `grad_bias` (both zeroed here).
template <typename Scalar>
void conv2d_param_grad_batch(const TensorT<Scalar>& input, const TensorT<Scalar>& grad_out,
                             const ConvDims& d, TensorT<Scalar>& grad_kernels,
                             TensorT<Scalar>& grad_bias, TensorT<Scalar>& cols) {
    const Index k = d.c_in * d.kh * d.kw;
    const Index hw = d.h_out * d.w_out;
    grad_kernels.resize({d.c_out, d.c_in, d.kh, d.kw});
    grad_kernels.set_zero();
    grad_bias.resize({d.c_out});
    grad_bias.set_zero();
    cols.resize({k, hw});

    detail::MatMap<Scalar> dwm(grad_kernels.data(), d.c_out, k);
    Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> dbm(grad_bias.data(), d.c_out);
    for (Index b = 0; b < d.batch; ++b) {
        detail::im2col(input.data() + b * d.c_in * d.h * d.w, d, cols.data());
        detail::ConstMatMap<Scalar> cm(cols.data(), k, hw);
        detail::ConstMatMap<Scalar> gm(grad_out.data() + b * d.c_out * hw, d.c_out, hw);
        dwm.noalias() += gm * cm.transpose();
        dbm.noalias() += gm.rowwise().sum();
    }
}

// Per-image convenience entry point: input [C,H,W] -> [C',H',W'].
template <typename Scalar>
TensorT<Scalar> conv2d(const TensorT<Scalar>& input, const TensorT<Scalar>& kernels,
                       const TensorT<Scalar>& bias, Index stride, Index pad) {
    if (input.rank() != 3)
        throw ShapeError("conv2d: want input [C,H,W], got " + shape_str(input.shape()));
    TensorT<Scalar> batched = input.reshaped({1, input.dim(0), input.dim(1), input.dim(2)});
    TensorT<Scalar> out, cols;
    conv2d_batch(batched, kernels, bias, stride, pad, out, cols);
    return std::move(out).reshaped({out.dim(1), out.dim(2), out.dim(3)});
}

// --- sampling -----------------------------------------------------------------

// center + noise with ||noise|| <= eps. The linf ball draws each coordinate
// uniformly; the l2 ball draws a uniform direction and radius eps * u^(1/n).
// eps == 0 returns the center without consuming any randomness.
template <typename Scalar>
TensorT<Scalar> sample_uniform_ball(Rng& rng, const TensorT<Scalar>& center, Scalar eps, Norm norm) {
    if (eps < Scalar(0)) throw ArgumentError("sample_uniform_ball: negative eps");
    if (eps == Scalar(0)) return center;
    TensorT<Scalar> out(center.shape());
    const Index n = center.size();
    if (norm == Norm::linf) {
        for (Index i = 0; i < n; ++i)
            out[i] = center[i] + static_cast<Scalar>(rng.uniform(-double(eps), double(eps)));
        return out;
    }
    // Direction uniform on the sphere via normalized Gaussian draws.
    double norm2 = 0.0;
    do {
        norm2 = 0.0;
        for (Index i = 0; i < n; ++i) {
            const double g = rng.normal();
            out[i] = static_cast<Scalar>(g);
            norm2 += g * g;
        }
    } while (norm2 == 0.0);
    const double radius = double(eps) * std::pow(rng.uniform(), 1.0 / static_cast<double>(n));
    const double scale = radius / std::sqrt(norm2);
    for (Index i = 0; i < n; ++i) out[i] = center[i] + static_cast<Scalar>(scale * double(out[i]));
    return out;
}

}  // namespace latnet
