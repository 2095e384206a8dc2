#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "latnet/data.hpp"
#include "latnet/layers.hpp"

namespace latnet {

// Ordered layer stack f = f_l o ... o f_1. Boundary i is the activation after
// layer i, with boundary 0 the input itself; f splits at any boundary i into
// the prefix h_i (layers 1..i) and suffix g_i (layers i+1..l). A network is
// immutable during inference and attacks; training owns its copy exclusively.
struct Network {
    std::vector<Layer> layers;
    Shape input_shape;  // per example, no batch dimension
    int num_classes = 0;

    Index num_layers() const { return static_cast<Index>(layers.size()); }
};

// Checks that consecutive layer shapes compose and the final output length
// equals num_classes. Throws ShapeError otherwise.
void validate(const Network& net);

// Per-example activation shapes at boundaries 0..l.
std::vector<Shape> boundary_shapes(const Network& net);

// The desk-scale MNIST classifier: two 5x5 conv/pool stages into a 1024-wide
// dense head. Parameters drawn from `rng`.
Network make_mnist_cnn(Rng& rng);

// Activations recorded by a forward pass. acts[j] holds the activation at
// boundary start + j; the last entry is the logits when the pass ran to the
// final layer. Batched traces carry a leading batch dimension on every entry.
struct ForwardTrace {
    Index start = 0;
    bool batched = true;
    std::vector<Tensor> acts;

    const Tensor& at_boundary(Index i) const { return acts[static_cast<std::size_t>(i - start)]; }
    Tensor& at_boundary(Index i) { return acts[static_cast<std::size_t>(i - start)]; }
    const Tensor& logits() const { return acts.back(); }
    Index top_boundary() const { return start + static_cast<Index>(acts.size()) - 1; }

    // Spec-facing view: activation h_i of a full-network trace.
    const Tensor& activation(Index i) const { return at_boundary(i); }
};

// Reusable scratch for the forward/backward kernels. Steady-state passes over
// same-shaped batches perform no allocation.
struct Workspace {
    std::vector<Tensor> cols;  // per-layer im2col scratch
    Tensor grad_a, grad_b;     // ping-pong gradient buffers
    Tensor seed;               // loss gradient at the top boundary
};

struct LayerGrads {
    Tensor weights;  // empty for parameterless layers
    Tensor bias;
};

// Gradients of the (mean) loss. param_grads aligns with net.layers;
// input_grad is the gradient at the boundary backpropagation stopped at;
// latent_grad carries (boundary index, gradient) when requested.
struct GradientBundle {
    std::vector<LayerGrads> param_grads;
    Tensor input_grad;
    std::optional<std::pair<Index, Tensor>> latent_grad;
};

struct BackwardOptions {
    bool want_param_grads = true;
    std::optional<Index> latent_at;
    Index stop_boundary = 0;
};

// --- core engines (batched activations) ---------------------------------------

// Runs layers start+1 .. stop on x (activation at boundary `start`, with batch
// dimension) recording every boundary activation in `trace`.
void forward_span_into(const Network& net, Index start, Index stop, const Tensor& x,
                       ForwardTrace& trace, Workspace& ws);

// Backpropagates `grad_top` (gradient at boundary `top`) down to
// opt.stop_boundary. The trace must cover boundaries [stop_boundary, top].
GradientBundle backprop_from(const Network& net, const ForwardTrace& trace, Index top,
                             const Tensor& grad_top, const BackwardOptions& opt, Workspace& ws);

// Cross-entropy backward from the trace logits.
GradientBundle backward_batch(const Network& net, const ForwardTrace& trace,
                              std::span<const int> labels, const BackwardOptions& opt, Workspace& ws);

// --- spec-facing operations ----------------------------------------------------

// Full forward pass; x is either one example (shape == input_shape) or a batch
// with a leading batch dimension. Single-example traces store unbatched
// activations.
ForwardTrace forward(const Network& net, const Tensor& x);

// Logits of the suffix sub-network g_i applied to an activation at boundary i.
Tensor forward_from(const Network& net, Index i, const Tensor& latent);

// Mean cross-entropy of logits [C] or [B,C] against labels, computed with
// max-subtraction.
double loss_cross_entropy(const Tensor& logits, int label);
double loss_cross_entropy_batch(const Tensor& logits, std::span<const int> labels);

// Writes (softmax - onehot) / B, the gradient of the mean cross-entropy.
void cross_entropy_logit_grad(const Tensor& logits, std::span<const int> labels, Tensor& grad);

GradientBundle backward(const Network& net, const ForwardTrace& trace, int label,
                        std::optional<Index> want_latent_grad_at = std::nullopt);

int predict(const Network& net, const Tensor& x);
std::vector<int> predict_batch(const Network& net, const Tensor& xb, Workspace& ws);
double accuracy(const Network& net, const Dataset& data);

}  // namespace latnet
