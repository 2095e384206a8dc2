#pragma once

#include <variant>

#include "latnet/rng.hpp"
#include "latnet/tensor.hpp"

namespace latnet {

// Layers are closed-set value types; a network owns its layers and copying a
// network deep-copies all parameters.

struct DenseLayer {
    Tensor weights;  // [out x in], row-major
    Tensor bias;     // [out]
};

struct Conv2DLayer {
    Tensor kernels;  // [C_out, C_in, kh, kw]
    Tensor bias;     // [C_out]
    Index stride = 1;
    Index padding = 0;
};

struct ReluLayer {};

struct MaxPool2DLayer {
    Index window = 2;
    Index stride = 2;
};

struct FlattenLayer {};

using Layer = std::variant<DenseLayer, Conv2DLayer, ReluLayer, MaxPool2DLayer, FlattenLayer>;

// He fan-in scaled normal initialization for the parameterized layers.
DenseLayer make_dense(Index out, Index in, Rng& rng);
Conv2DLayer make_conv2d(Index c_out, Index c_in, Index kh, Index kw, Index stride, Index padding,
                        Rng& rng);

// Per-example output shape of a layer (no batch dimension). Throws ShapeError
// when the layer cannot consume the given input shape.
Shape layer_output_shape(const Layer& layer, const Shape& in);

bool layer_has_params(const Layer& layer);
Index layer_param_count(const Layer& layer);
const char* layer_type_name(const Layer& layer);

// Visits each parameter tensor of a layer in a fixed order (weights, bias).
template <typename Fn>
void for_each_param(Layer& layer, Fn&& fn) {
    std::visit(
        [&](auto& l) {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, DenseLayer>) {
                fn(l.weights);
                fn(l.bias);
            } else if constexpr (std::is_same_v<L, Conv2DLayer>) {
                fn(l.kernels);
                fn(l.bias);
            }
        },
        layer);
}

template <typename Fn>
void for_each_param(const Layer& layer, Fn&& fn) {
    std::visit(
        [&](const auto& l) {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, DenseLayer>) {
                fn(l.weights);
                fn(l.bias);
            } else if constexpr (std::is_same_v<L, Conv2DLayer>) {
                fn(l.kernels);
                fn(l.bias);
            }
        },
        layer);
}

// --- batched kernels ----------------------------------------------------------
// All take activations with a leading batch dimension. Output tensors are
// resized in place so steady-state calls do not allocate.

void dense_forward(const DenseLayer& l, const Tensor& in, Tensor& out);
void dense_backward(const DenseLayer& l, const Tensor& in, const Tensor& grad_out, Tensor& grad_in,
                    Tensor* grad_weights, Tensor* grad_bias);

void conv2d_forward(const Conv2DLayer& l, const Tensor& in, Tensor& out, Tensor& cols);
void conv2d_backward(const Conv2DLayer& l, const Tensor& in, const Tensor& grad_out, Tensor& grad_in,
                     Tensor* grad_kernels, Tensor* grad_bias, Tensor& cols);

void relu_forward(const Tensor& in, Tensor& out);
void relu_backward(const Tensor& in, const Tensor& grad_out, Tensor& grad_in);

void maxpool_forward(const MaxPool2DLayer& l, const Tensor& in, Tensor& out);
void maxpool_backward(const MaxPool2DLayer& l, const Tensor& in, const Tensor& grad_out,
                      Tensor& grad_in);

void flatten_forward(const Tensor& in, Tensor& out);
void flatten_backward(const Tensor& in, const Tensor& grad_out, Tensor& grad_in);

}  // namespace latnet
