#include "latnet/layers.hpp"

#include <cmath>

namespace latnet {

namespace {

void he_fill(Tensor& t, Index fan_in, Rng& rng) {
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (Index i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
}

}  // namespace

DenseLayer make_dense(Index out, Index in, Rng& rng) {
    DenseLayer l{Tensor({out, in}), Tensor({out})};
    he_fill(l.weights, in, rng);
    return l;
}

Conv2DLayer make_conv2d(Index c_out, Index c_in, Index kh, Index kw, Index stride, Index padding,
                        Rng& rng) {
    Conv2DLayer l{Tensor({c_out, c_in, kh, kw}), Tensor({c_out}), stride, padding};
    he_fill(l.kernels, c_in * kh * kw, rng);
    return l;
}

Shape layer_output_shape(const Layer& layer, const Shape& in) {
    return std::visit(
        [&](const auto& l) -> Shape {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, DenseLayer>) {
                if (in.size() != 1 || in[0] != l.weights.dim(1))
                    throw ShapeError("dense layer expects input [" + std::to_string(l.weights.dim(1)) +
                                     "], got " + shape_str(in));
                return {l.weights.dim(0)};
            } else if constexpr (std::is_same_v<T, Conv2DLayer>) {
                if (in.size() != 3)
                    throw ShapeError("conv2d layer expects input [C,H,W], got " + shape_str(in));
                Tensor probe({1, in[0], in[1], in[2]});
                const ConvDims d = conv2d_dims(probe, l.kernels, l.bias, l.stride, l.padding);
                return {d.c_out, d.h_out, d.w_out};
            } else if constexpr (std::is_same_v<T, MaxPool2DLayer>) {
                if (in.size() != 3)
                    throw ShapeError("maxpool layer expects input [C,H,W], got " + shape_str(in));
                if ((in[1] - l.window) % l.stride != 0 || (in[2] - l.window) % l.stride != 0 ||
                    in[1] < l.window || in[2] < l.window)
                    throw ShapeError("maxpool window/stride incompatible with input " + shape_str(in));
                return {in[0], (in[1] - l.window) / l.stride + 1, (in[2] - l.window) / l.stride + 1};
            } else if constexpr (std::is_same_v<T, FlattenLayer>) {
                return {shape_size(in)};
            } else {
                return in;  // ReLU
            }
        },
        layer);
}

bool layer_has_params(const Layer& layer) {
    return std::holds_alternative<DenseLayer>(layer) || std::holds_alternative<Conv2DLayer>(layer);
}

Index layer_param_count(const Layer& layer) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) return d->weights.size() + d->bias.size();
    if (const auto* c = std::get_if<Conv2DLayer>(&layer)) return c->kernels.size() + c->bias.size();
    return 0;
}

const char* layer_type_name(const Layer& layer) {
    return std::visit(
        [](const auto& l) {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, DenseLayer>) return "dense";
            else if constexpr (std::is_same_v<T, Conv2DLayer>) return "conv2d";
            else if constexpr (std::is_same_v<T, ReluLayer>) return "relu";
            else if constexpr (std::is_same_v<T, MaxPool2DLayer>) return "maxpool2d";
            else return "flatten";
        },
        layer);
}

void dense_forward(const DenseLayer& l, const Tensor& in, Tensor& out) {
    const Index batch = in.dim(0), nin = l.weights.dim(1), nout = l.weights.dim(0);
    out.resize({batch, nout});
    detail::ConstMatMap<double> x(in.data(), batch, nin), w(l.weights.data(), nout, nin);
    detail::MatMap<double> y(out.data(), batch, nout);
    y.noalias() = x * w.transpose();
    y.rowwise() += Eigen::Map<const Eigen::VectorXd>(l.bias.data(), nout).transpose();
}

void dense_backward(const DenseLayer& l, const Tensor& in, const Tensor& grad_out, Tensor& grad_in,
                    Tensor* grad_weights, Tensor* grad_bias) {
    const Index batch = in.dim(0), nin = l.weights.dim(1), nout = l.weights.dim(0);
    detail::ConstMatMap<double> x(in.data(), batch, nin), w(l.weights.data(), nout, nin),
        gy(grad_out.data(), batch, nout);
    grad_in.resize({batch, nin});
    detail::MatMap<double> gx(grad_in.data(), batch, nin);
    gx.noalias() = gy * w;
    if (grad_weights) {
        grad_weights->resize({nout, nin});
        detail::MatMap<double> gw(grad_weights->data(), nout, nin);
        gw.noalias() = gy.transpose() * x;
    }
    if (grad_bias) {
        grad_bias->resize({nout});
        Eigen::Map<Eigen::VectorXd>(grad_bias->data(), nout) = gy.colwise().sum().transpose();
    }
}

void conv2d_forward(const Conv2DLayer& l, const Tensor& in, Tensor& out, Tensor& cols) {
    conv2d_batch(in, l.kernels, l.bias, l.stride, l.padding, out, cols);
}

void conv2d_backward(const Conv2DLayer& l, const Tensor& in, const Tensor& grad_out, Tensor& grad_in,
                     Tensor* grad_kernels, Tensor* grad_bias, Tensor& cols) {
    const ConvDims d = conv2d_dims(in, l.kernels, l.bias, l.stride, l.padding);
    conv2d_input_grad_batch(l.kernels, grad_out, d, grad_in, cols);
    if (grad_kernels && grad_bias) {
        conv2d_param_grad_batch(in, grad_out, d, *grad_kernels, *grad_bias, cols);
    }
}

void relu_forward(const Tensor& in, Tensor& out) {
    out.resize(in.shape());
    out.array() = in.array().max(0.0);
}

// Subgradient at 0 is 0: gradient passes only where the input is strictly
// positive.
void relu_backward(const Tensor& in, const Tensor& grad_out, Tensor& grad_in) {
    grad_in.resize(in.shape());
    grad_in.array() = (in.array() > 0.0).select(grad_out.array(), 0.0);
}

void maxpool_forward(const MaxPool2DLayer& l, const Tensor& in, Tensor& out) {
    const Index batch = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
    const Index ho = (h - l.window) / l.stride + 1, wo = (w - l.window) / l.stride + 1;
    out.resize({batch, c, ho, wo});
    const double* src = in.data();
    double* dst = out.data();
    for (Index bc = 0; bc < batch * c; ++bc) {
        const double* plane = src + bc * h * w;
        double* oplane = dst + bc * ho * wo;
        for (Index oh = 0; oh < ho; ++oh) {
            for (Index ow = 0; ow < wo; ++ow) {
                const Index ih0 = oh * l.stride, iw0 = ow * l.stride;
                double best = plane[ih0 * w + iw0];
                for (Index ki = 0; ki < l.window; ++ki)
                    for (Index kj = 0; kj < l.window; ++kj) {
                        const double v = plane[(ih0 + ki) * w + iw0 + kj];
                        if (v > best) best = v;
                    }
                oplane[oh * wo + ow] = best;
            }
        }
    }
}

// Ties route the gradient to the first maximal element in row-major window
// order, recomputed from the forward input so repeated calls are bitwise
// identical.
void maxpool_backward(const MaxPool2DLayer& l, const Tensor& in, const Tensor& grad_out,
                      Tensor& grad_in) {
    const Index batch = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
    const Index ho = (h - l.window) / l.stride + 1, wo = (w - l.window) / l.stride + 1;
    grad_in.resize(in.shape());
    grad_in.set_zero();
    const double* src = in.data();
    const double* gsrc = grad_out.data();
    double* gdst = grad_in.data();
    for (Index bc = 0; bc < batch * c; ++bc) {
        const double* plane = src + bc * h * w;
        const double* gplane = gsrc + bc * ho * wo;
        double* goplane = gdst + bc * h * w;
        for (Index oh = 0; oh < ho; ++oh) {
            for (Index ow = 0; ow < wo; ++ow) {
                const Index ih0 = oh * l.stride, iw0 = ow * l.stride;
                Index best_idx = ih0 * w + iw0;
                double best = plane[best_idx];
                for (Index ki = 0; ki < l.window; ++ki)
                    for (Index kj = 0; kj < l.window; ++kj) {
                        const Index idx = (ih0 + ki) * w + iw0 + kj;
                        if (plane[idx] > best) {
                            best = plane[idx];
                            best_idx = idx;
                        }
                    }
                goplane[best_idx] += gplane[oh * wo + ow];
            }
        }
    }
}

void flatten_forward(const Tensor& in, Tensor& out) {
    out.resize({in.dim(0), in.size() / in.dim(0)});
    out.array() = in.array();
}

void flatten_backward(const Tensor& in, const Tensor& grad_out, Tensor& grad_in) {
    grad_in.resize(in.shape());
    grad_in.array() = grad_out.array();
}

}  // namespace latnet
