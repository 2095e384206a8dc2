#pragma once

#include <vector>

#include "latnet/network.hpp"

namespace latnet::testing {

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Small random architectures cycling through three families so every layer
// type shows up: conv/pool stacks, conv-only, and dense-only.
inline Network random_network(Rng& rng, int kind) {
    Network net;
    switch (kind % 3) {
        case 0: {
            const Index c = 1 + static_cast<Index>(rng.below(2));
            const Index co = 2 + static_cast<Index>(rng.below(2));
            net.input_shape = {c, 6, 6};
            net.num_classes = 3;
            net.layers.push_back(make_conv2d(co, c, 3, 3, 1, 1, rng));
            net.layers.push_back(ReluLayer{});
            net.layers.push_back(MaxPool2DLayer{2, 2});
            net.layers.push_back(FlattenLayer{});
            net.layers.push_back(make_dense(8, co * 3 * 3, rng));
            net.layers.push_back(ReluLayer{});
            net.layers.push_back(make_dense(3, 8, rng));
            break;
        }
        case 1: {
            const Index co = 2 + static_cast<Index>(rng.below(3));
            net.input_shape = {2, 5, 5};
            net.num_classes = 2;
            net.layers.push_back(make_conv2d(co, 2, 3, 3, 2, 1, rng));
            net.layers.push_back(ReluLayer{});
            net.layers.push_back(FlattenLayer{});
            net.layers.push_back(make_dense(2, co * 3 * 3, rng));
            break;
        }
        default: {
            const Index hidden = 4 + static_cast<Index>(rng.below(5));
            net.input_shape = {6};
            net.num_classes = 3;
            net.layers.push_back(make_dense(hidden, 6, rng));
            net.layers.push_back(ReluLayer{});
            net.layers.push_back(make_dense(3, hidden, rng));
            break;
        }
    }
    validate(net);
    return net;
}

inline Tensor random_batch(Rng& rng, const Network& net, Index b) {
    Shape s;
    s.push_back(b);
    s.insert(s.end(), net.input_shape.begin(), net.input_shape.end());
    return random_tensor(rng, std::move(s), 0.0, 1.0);
}

inline std::vector<int> random_labels(Rng& rng, Index b, int classes) {
    std::vector<int> labels(static_cast<std::size_t>(b));
    for (auto& y : labels) y = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
    return labels;
}

inline double batch_loss(const Network& net, const Tensor& xb, const std::vector<int>& labels) {
    Workspace ws;
    ForwardTrace tr;
    forward_span_into(net, 0, net.num_layers(), xb, tr, ws);
    return loss_cross_entropy_batch(tr.logits(), labels);
}

// Central finite difference of the mean batch loss with respect to one
// parameter coordinate.
inline double fd_param_grad(Network& net, std::size_t layer, bool bias_part, Index coord,
                            const Tensor& xb, const std::vector<int>& labels, double h = 1e-4) {
    Tensor* param = nullptr;
    int seen = 0;
    for_each_param(net.layers[layer], [&](Tensor& t) {
        if ((bias_part && seen == 1) || (!bias_part && seen == 0)) param = &t;
        ++seen;
    });
    const double saved = (*param)[coord];
    (*param)[coord] = saved + h;
    const double up = batch_loss(net, xb, labels);
    (*param)[coord] = saved - h;
    const double down = batch_loss(net, xb, labels);
    (*param)[coord] = saved;
    return (up - down) / (2.0 * h);
}

inline double fd_input_grad(const Network& net, Tensor xb, const std::vector<int>& labels,
                            Index coord, double h = 1e-4) {
    const double saved = xb[coord];
    xb[coord] = saved + h;
    const double up = batch_loss(net, xb, labels);
    xb[coord] = saved - h;
    const double down = batch_loss(net, xb, labels);
    return (up - down) / (2.0 * h);
}

// Finite difference of the suffix loss with respect to a latent coordinate.
inline double fd_latent_grad(const Network& net, Index boundary, Tensor latents,
                             const std::vector<int>& labels, Index coord, double h = 1e-4) {
    Workspace ws;
    ForwardTrace tr;
    const double saved = latents[coord];
    latents[coord] = saved + h;
    forward_span_into(net, boundary, net.num_layers(), latents, tr, ws);
    const double up = loss_cross_entropy_batch(tr.logits(), labels);
    latents[coord] = saved - h;
    forward_span_into(net, boundary, net.num_layers(), latents, tr, ws);
    const double down = loss_cross_entropy_batch(tr.logits(), labels);
    return (up - down) / (2.0 * h);
}

inline bool grad_close(double got, double want, double abs_tol = 1e-6, double rel_tol = 1e-5) {
    const double diff = std::abs(got - want);
    return diff <= std::max(abs_tol, rel_tol * std::max(std::abs(got), std::abs(want)));
}

}  // namespace latnet::testing
