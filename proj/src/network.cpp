#include "latnet/network.hpp"

#include <algorithm>
#include <cmath>

#include "latnet/errors.hpp"

namespace latnet {

namespace {

Shape batched(const Shape& per_example, Index batch) {
    Shape s;
    s.reserve(per_example.size() + 1);
    s.push_back(batch);
    s.insert(s.end(), per_example.begin(), per_example.end());
    return s;
}

void check_boundary_index(const Network& net, Index i, Index lo) {
    if (i < lo || i > net.num_layers())
        throw ArgumentError("boundary index " + std::to_string(i) + " outside [" +
                            std::to_string(lo) + ", " + std::to_string(net.num_layers()) + "]");
}

// Assigns src into dst reusing dst's storage when sizes match.
void assign(Tensor& dst, const Tensor& src) {
    dst.resize(src.shape());
    dst.array() = src.array();
}

}  // namespace

void validate(const Network& net) {
    if (net.layers.empty()) throw ShapeError("network has no layers");
    if (net.input_shape.empty()) throw ShapeError("network input shape is empty");
    if (net.num_classes < 2) throw ArgumentError("network needs at least 2 classes");
    Shape out = boundary_shapes(net).back();
    Index n = 1;
    for (Index d : out) n *= d;
    if (out.size() != 1 || n != net.num_classes)
        throw ShapeError("final layer produces " + shape_str(out) + ", expected [" +
                         std::to_string(net.num_classes) + "]");
}

std::vector<Shape> boundary_shapes(const Network& net) {
    std::vector<Shape> shapes;
    shapes.reserve(net.layers.size() + 1);
    shapes.push_back(net.input_shape);
    for (const Layer& layer : net.layers) shapes.push_back(layer_output_shape(layer, shapes.back()));
    return shapes;
}

Network make_mnist_cnn(Rng& rng) {
    Network net;
    net.input_shape = {1, 28, 28};
    net.num_classes = 10;
    net.layers.push_back(make_conv2d(32, 1, 5, 5, 1, 2, rng));
    net.layers.push_back(ReluLayer{});
    net.layers.push_back(MaxPool2DLayer{2, 2});
    net.layers.push_back(make_conv2d(64, 32, 5, 5, 1, 2, rng));
    net.layers.push_back(ReluLayer{});
    net.layers.push_back(MaxPool2DLayer{2, 2});
    net.layers.push_back(FlattenLayer{});
    net.layers.push_back(make_dense(1024, 64 * 7 * 7, rng));
    net.layers.push_back(ReluLayer{});
    net.layers.push_back(make_dense(10, 1024, rng));
    validate(net);
    return net;
}

void forward_span_into(const Network& net, Index start, Index stop, const Tensor& x,
                       ForwardTrace& trace, Workspace& ws) {
    check_boundary_index(net, start, 0);
    check_boundary_index(net, stop, start);
    if (x.rank() < 2) throw ShapeError("forward expects a batched activation");

    trace.start = start;
    trace.batched = true;
    trace.acts.resize(static_cast<std::size_t>(stop - start + 1));
    ws.cols.resize(net.layers.size());

    assign(trace.acts[0], x);
    for (Index j = start + 1; j <= stop; ++j) {
        const Layer& layer = net.layers[static_cast<std::size_t>(j - 1)];
        const Tensor& in = trace.at_boundary(j - 1);
        Tensor& out = trace.at_boundary(j);
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, DenseLayer>) {
                    dense_forward(l, in, out);
                } else if constexpr (std::is_same_v<L, Conv2DLayer>) {
                    conv2d_forward(l, in, out, ws.cols[static_cast<std::size_t>(j - 1)]);
                } else if constexpr (std::is_same_v<L, ReluLayer>) {
                    relu_forward(in, out);
                } else if constexpr (std::is_same_v<L, MaxPool2DLayer>) {
                    maxpool_forward(l, in, out);
                } else {
                    flatten_forward(in, out);
                }
            },
            layer);
    }
}

GradientBundle backprop_from(const Network& net, const ForwardTrace& trace, Index top,
                             const Tensor& grad_top, const BackwardOptions& opt, Workspace& ws) {
    const Index stop = opt.stop_boundary;
    check_boundary_index(net, stop, 0);
    check_boundary_index(net, top, stop);
    if (trace.start > stop || trace.top_boundary() < top)
        throw ArgumentError("trace does not cover boundaries [" + std::to_string(stop) + ", " +
                            std::to_string(top) + "]");
    if (grad_top.shape() != trace.at_boundary(top).shape())
        throw ShapeError("gradient shape " + shape_str(grad_top.shape()) +
                         " does not match activation " + shape_str(trace.at_boundary(top).shape()));

    GradientBundle bundle;
    bundle.param_grads.resize(net.layers.size());
    ws.cols.resize(net.layers.size());

    Tensor* cur = &ws.grad_a;
    Tensor* nxt = &ws.grad_b;
    assign(*cur, grad_top);
    if (opt.latent_at && *opt.latent_at == top) bundle.latent_grad = {top, *cur};

    for (Index j = top; j > stop; --j) {
        const Layer& layer = net.layers[static_cast<std::size_t>(j - 1)];
        const Tensor& in = trace.at_boundary(j - 1);
        LayerGrads& pg = bundle.param_grads[static_cast<std::size_t>(j - 1)];
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, DenseLayer>) {
                    Tensor* gw = opt.want_param_grads ? &pg.weights : nullptr;
                    Tensor* gb = opt.want_param_grads ? &pg.bias : nullptr;
                    dense_backward(l, in, *cur, *nxt, gw, gb);
                } else if constexpr (std::is_same_v<L, Conv2DLayer>) {
                    Tensor* gw = opt.want_param_grads ? &pg.weights : nullptr;
                    Tensor* gb = opt.want_param_grads ? &pg.bias : nullptr;
                    conv2d_backward(l, in, *cur, *nxt, gw, gb,
                                    ws.cols[static_cast<std::size_t>(j - 1)]);
                } else if constexpr (std::is_same_v<L, ReluLayer>) {
                    relu_backward(in, *cur, *nxt);
                } else if constexpr (std::is_same_v<L, MaxPool2DLayer>) {
                    maxpool_backward(l, in, *cur, *nxt);
                } else {
                    flatten_backward(in, *cur, *nxt);
                }
            },
            layer);
        std::swap(cur, nxt);
        if (opt.latent_at && *opt.latent_at == j - 1) bundle.latent_grad = {j - 1, *cur};
    }
    bundle.input_grad = *cur;
    return bundle;
}

void cross_entropy_logit_grad(const Tensor& logits, std::span<const int> labels, Tensor& grad) {
    if (logits.rank() != 2) throw ShapeError("logit gradient expects [B, C] logits");
    const Index b = logits.dim(0), c = logits.dim(1);
    if (static_cast<Index>(labels.size()) != b)
        throw ShapeError("batch of " + std::to_string(b) + " logits with " +
                         std::to_string(labels.size()) + " labels");
    grad.resize(logits.shape());
    auto lm = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        logits.data(), b, c);
    auto gm = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        grad.data(), b, c);
    for (Index i = 0; i < b; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= c) throw ArgumentError("label " + std::to_string(y) + " outside [0, " +
                                                 std::to_string(c) + ")");
        const double m = lm.row(i).maxCoeff();
        Eigen::ArrayXd e = (lm.row(i).array() - m).exp();
        gm.row(i) = (e / e.sum()).matrix();
        gm(i, y) -= 1.0;
    }
    gm.array() /= static_cast<double>(b);
}

GradientBundle backward_batch(const Network& net, const ForwardTrace& trace,
                              std::span<const int> labels, const BackwardOptions& opt, Workspace& ws) {
    const Index top = net.num_layers();
    if (trace.top_boundary() != top)
        throw ArgumentError("trace does not reach the logits boundary");
    cross_entropy_logit_grad(trace.at_boundary(top), labels, ws.seed);
    return backprop_from(net, trace, top, ws.seed, opt, ws);
}

double loss_cross_entropy_batch(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 2) throw ShapeError("cross entropy expects [B, C] logits");
    const Index b = logits.dim(0), c = logits.dim(1);
    if (static_cast<Index>(labels.size()) != b)
        throw ShapeError("batch of " + std::to_string(b) + " logits with " +
                         std::to_string(labels.size()) + " labels");
    auto lm = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        logits.data(), b, c);
    double total = 0.0;
    for (Index i = 0; i < b; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= c) throw ArgumentError("label " + std::to_string(y) + " outside [0, " +
                                                 std::to_string(c) + ")");
        const double m = lm.row(i).maxCoeff();
        const double lse = m + std::log((lm.row(i).array() - m).exp().sum());
        total += lse - lm(i, y);
    }
    return total / static_cast<double>(b);
}

double loss_cross_entropy(const Tensor& logits, int label) {
    if (logits.rank() == 1) {
        Tensor row = reshape(logits, {1, logits.size()});
        int labels[1] = {label};
        return loss_cross_entropy_batch(row, labels);
    }
    int labels[1] = {label};
    return loss_cross_entropy_batch(logits, labels);
}

namespace {

// Promotes a per-example activation to a batch of one.
Tensor lift(const Tensor& x) { return reshape(x, batched(x.shape(), 1)); }

Tensor drop_batch(const Tensor& x) {
    Shape s(x.shape().begin() + 1, x.shape().end());
    return reshape(x, s);
}

}  // namespace

ForwardTrace forward(const Network& net, const Tensor& x) {
    Workspace ws;
    ForwardTrace trace;
    const bool single = x.shape() == net.input_shape;
    if (!single && (x.rank() != static_cast<Index>(net.input_shape.size()) + 1 ||
                    !std::equal(net.input_shape.begin(), net.input_shape.end(),
                                x.shape().begin() + 1)))
        throw ShapeError("input shape " + shape_str(x.shape()) + " does not match network input " +
                         shape_str(net.input_shape));
    forward_span_into(net, 0, net.num_layers(), single ? lift(x) : x, trace, ws);
    if (single) {
        trace.batched = false;
        for (Tensor& a : trace.acts) a = drop_batch(std::move(a));
    }
    return trace;
}

Tensor forward_from(const Network& net, Index i, const Tensor& latent) {
    check_boundary_index(net, i, 0);
    const Shape at = boundary_shapes(net)[static_cast<std::size_t>(i)];
    const bool single = latent.shape() == at;
    if (!single && (latent.rank() != static_cast<Index>(at.size()) + 1 ||
                    !std::equal(at.begin(), at.end(), latent.shape().begin() + 1)))
        throw ShapeError("activation shape " + shape_str(latent.shape()) +
                         " does not match boundary " + std::to_string(i) + " shape " + shape_str(at));
    Workspace ws;
    ForwardTrace trace;
    forward_span_into(net, i, net.num_layers(), single ? lift(latent) : latent, trace, ws);
    return single ? drop_batch(trace.logits()) : trace.logits();
}

GradientBundle backward(const Network& net, const ForwardTrace& trace, int label,
                        std::optional<Index> want_latent_grad_at) {
    if (trace.start != 0 || trace.top_boundary() != net.num_layers())
        throw ArgumentError("backward needs a full-network trace");
    Workspace ws;
    BackwardOptions opt;
    opt.latent_at = want_latent_grad_at;
    if (trace.batched) return backward_batch(net, trace, std::span<const int>(&label, 1), opt, ws);

    ForwardTrace lifted;
    lifted.start = 0;
    lifted.acts.reserve(trace.acts.size());
    for (const Tensor& a : trace.acts) lifted.acts.push_back(lift(a));
    GradientBundle bundle = backward_batch(net, lifted, std::span<const int>(&label, 1), opt, ws);
    bundle.input_grad = drop_batch(std::move(bundle.input_grad));
    if (bundle.latent_grad)
        bundle.latent_grad->second = drop_batch(std::move(bundle.latent_grad->second));
    return bundle;
}

namespace {

int argmax_row(const double* p, Index n) {
    int best = 0;
    for (Index j = 1; j < n; ++j)
        if (p[j] > p[best]) best = static_cast<int>(j);
    return best;
}

}  // namespace

std::vector<int> predict_batch(const Network& net, const Tensor& xb, Workspace& ws) {
    ForwardTrace trace;
    forward_span_into(net, 0, net.num_layers(), xb, trace, ws);
    const Tensor& logits = trace.logits();
    const Index b = logits.dim(0), c = logits.dim(1);
    std::vector<int> out(static_cast<std::size_t>(b));
    for (Index i = 0; i < b; ++i) out[static_cast<std::size_t>(i)] = argmax_row(logits.data() + i * c, c);
    return out;
}

int predict(const Network& net, const Tensor& x) {
    Workspace ws;
    std::vector<int> p = predict_batch(net, x.shape() == net.input_shape ? lift(x) : x, ws);
    if (p.size() != 1) throw ShapeError("predict expects a single example");
    return p[0];
}

double accuracy(const Network& net, const Dataset& data) {
    if (data.size() == 0) throw ArgumentError("accuracy of an empty dataset");
    Workspace ws;
    constexpr Index kChunk = 256;
    Index correct = 0;
    for (Index at = 0; at < data.size(); at += kChunk) {
        const Index b = std::min(kChunk, data.size() - at);
        std::vector<Index> idx(static_cast<std::size_t>(b));
        for (Index i = 0; i < b; ++i) idx[static_cast<std::size_t>(i)] = at + i;
        Batch batch = take_batch(data, idx);
        std::vector<int> pred = predict_batch(net, batch.images, ws);
        for (Index i = 0; i < b; ++i)
            if (pred[static_cast<std::size_t>(i)] == batch.labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace latnet
