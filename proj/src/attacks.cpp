#include "latnet/attacks.hpp"

#include <cmath>

#include "latnet/errors.hpp"

namespace latnet {

namespace {

void check_finite_budget(double eps, const char* what) {
    if (!(eps >= 0.0) || !std::isfinite(eps))
        throw ArgumentError(std::string(what) + " must be a finite value >= 0");
}

double resolve_step(double step_size, double eps) {
    if (step_size > 0.0) return step_size;
    return eps / 4.0;
}

// Per-example projection; rows of pts/centers are flattened examples.
void project_rows(Tensor& pts, const Tensor& centers, double eps, Norm norm, bool clamp01) {
    if (norm == Norm::linf) {
        pts.array() = pts.array().max(centers.array() - eps).min(centers.array() + eps);
    } else {
        const Index b = pts.dim(0);
        const Index n = pts.size() / b;
        for (Index i = 0; i < b; ++i) {
            auto d = Eigen::Map<Eigen::VectorXd>(pts.data() + i * n, n);
            auto c = Eigen::Map<const Eigen::VectorXd>(centers.data() + i * n, n);
            const double dist = (d - c).norm();
            if (dist > eps) d = c + (d - c) * (eps / dist);
        }
    }
    if (clamp01) pts.array() = pts.array().max(0.0).min(1.0);
}

Tensor lift(const Tensor& x) {
    Shape s;
    s.reserve(x.shape().size() + 1);
    s.push_back(1);
    s.insert(s.end(), x.shape().begin(), x.shape().end());
    return reshape(x, s);
}

Tensor drop_batch(Tensor x) {
    Shape s(x.shape().begin() + 1, x.shape().end());
    x.reshape_in_place(std::move(s));
    return x;
}

void check_batched_input(const Network& net, const Tensor& xb) {
    const Shape& in = net.input_shape;
    if (xb.rank() != static_cast<Index>(in.size()) + 1 ||
        !std::equal(in.begin(), in.end(), xb.shape().begin() + 1))
        throw ShapeError("attack input shape " + shape_str(xb.shape()) +
                         " does not match network input " + shape_str(in));
    if (static_cast<Index>(xb.dim(0)) <= 0) throw ArgumentError("attack needs a nonempty batch");
}

}  // namespace

Tensor project(const Tensor& point, const Tensor& center, double eps, Norm norm, bool clamp01) {
    if (point.shape() != center.shape())
        throw ShapeError("project: point shape " + shape_str(point.shape()) +
                         " differs from center " + shape_str(center.shape()));
    if (eps < 0.0) throw ArgumentError("project: negative eps");
    Tensor out = point;
    Tensor flat_out = reshape(out, {Index(1), out.size()});
    Tensor flat_center = reshape(center, {Index(1), center.size()});
    project_rows(flat_out, flat_center, eps, norm, clamp01);
    return reshape(std::move(flat_out), point.shape());
}

Tensor pgd_batch(const Network& net, const Tensor& xb, std::span<const int> labels,
                 const AttackConfig& cfg, Rng& rng) {
    check_batched_input(net, xb);
    if (cfg.surface == 0) return pgd_from_activation(net, xb, labels, cfg, rng);
    Workspace ws;
    ForwardTrace trace;
    forward_span_into(net, 0, cfg.surface, xb, trace, ws);
    return pgd_from_activation(net, trace.at_boundary(cfg.surface), labels, cfg, rng);
}

Tensor pgd_from_activation(const Network& net, const Tensor& center, std::span<const int> labels,
                           const AttackConfig& cfg, Rng& rng) {
    check_finite_budget(cfg.eps, "attack eps");
    if (cfg.steps < 1) throw ArgumentError("attack needs steps >= 1");
    if (cfg.surface < 0 || cfg.surface >= net.num_layers())
        throw ArgumentError("attack surface " + std::to_string(cfg.surface) + " outside [0, " +
                            std::to_string(net.num_layers() - 1) + "]");
    if (center.rank() < 2)
        throw ShapeError("attack expects a batched activation");
    if (static_cast<Index>(labels.size()) != center.dim(0))
        throw ShapeError("attack batch of " + std::to_string(center.dim(0)) + " inputs with " +
                         std::to_string(labels.size()) + " labels");

    const Index s = cfg.surface;
    const Index l = net.num_layers();
    const double alpha = resolve_step(cfg.step_size, cfg.eps);
    const bool clamp = cfg.clamp_input && s == 0;
    const Index b = center.dim(0);

    Workspace ws;
    ForwardTrace trace;

    Tensor adv = center;
    if (cfg.random_start && cfg.eps > 0.0) {
        const Index n = adv.size() / b;
        Tensor row({n});
        for (Index i = 0; i < b; ++i) {
            std::copy_n(center.data() + i * n, n, row.data());
            Tensor drawn = sample_uniform_ball(rng, row, cfg.eps, cfg.norm);
            std::copy_n(drawn.data(), n, adv.data() + i * n);
        }
        project_rows(adv, center, cfg.eps, cfg.norm, clamp);
    }

    BackwardOptions opt;
    opt.want_param_grads = false;
    opt.stop_boundary = s;
    for (int step = 0; step < cfg.steps; ++step) {
        forward_span_into(net, s, l, adv, trace, ws);
        cross_entropy_logit_grad(trace.logits(), labels, ws.seed);
        GradientBundle g = backprop_from(net, trace, l, ws.seed, opt, ws);
        adv.array() += alpha * g.input_grad.array().sign();
        project_rows(adv, center, cfg.eps, cfg.norm, clamp);
    }
    return adv;
}

Tensor latent_attack_batch(const Network& net, const Tensor& xb, std::span<const int> labels,
                           const LatentAttackConfig& cfg) {
    check_batched_input(net, xb);
    check_finite_budget(cfg.input_eps, "latent attack input_eps");
    check_finite_budget(cfg.latent_eps, "latent attack latent_eps");
    if (cfg.inner_steps < 1 || cfg.outer_steps < 1)
        throw ArgumentError("latent attack needs inner_steps >= 1 and outer_steps >= 1");
    const Index m = cfg.layer;
    const Index l = net.num_layers();
    if (m < 1 || m > l - 1)
        throw ArgumentError("latent attack layer " + std::to_string(m) + " outside [1, " +
                            std::to_string(l - 1) + "]");
    if (static_cast<Index>(labels.size()) != xb.dim(0))
        throw ShapeError("attack batch of " + std::to_string(xb.dim(0)) + " inputs with " +
                         std::to_string(labels.size()) + " labels");

    const double alpha_l = resolve_step(cfg.alpha_latent, cfg.latent_eps);
    const double alpha_x = resolve_step(cfg.alpha_input, cfg.input_eps);

    Workspace ws;
    ForwardTrace head, tail;

    forward_span_into(net, 0, m, xb, head, ws);
    const Tensor z0 = head.at_boundary(m);  // latent of the untouched input

    Tensor adv = xb;
    Tensor target;
    BackwardOptions to_latent;
    to_latent.want_param_grads = false;
    to_latent.stop_boundary = m;
    BackwardOptions to_input;
    to_input.want_param_grads = false;
    to_input.stop_boundary = 0;

    for (int round = 0; round < cfg.outer_steps; ++round) {
        forward_span_into(net, 0, m, adv, head, ws);
        target = head.at_boundary(m);
        for (int step = 0; step < cfg.inner_steps; ++step) {
            forward_span_into(net, m, l, target, tail, ws);
            cross_entropy_logit_grad(tail.logits(), labels, ws.seed);
            GradientBundle g = backprop_from(net, tail, l, ws.seed, to_latent, ws);
            target.array() += alpha_l * g.input_grad.array().sign();
            project_rows(target, z0, cfg.latent_eps, Norm::linf, false);
        }
        for (int step = 0; step < cfg.inner_steps; ++step) {
            forward_span_into(net, 0, m, adv, head, ws);
            ws.seed.resize(target.shape());
            ws.seed.array() = 2.0 * (head.at_boundary(m).array() - target.array());
            GradientBundle g = backprop_from(net, head, m, ws.seed, to_input, ws);
            adv.array() -= alpha_x * g.input_grad.array().sign();
            project_rows(adv, xb, cfg.input_eps, Norm::linf, true);
        }
    }
    return adv;
}

Tensor fgsm(const Network& net, const Tensor& x, int label, double eps) {
    AttackConfig cfg;
    cfg.eps = eps;
    cfg.step_size = eps > 0.0 ? eps : 1.0;  // any alpha >= eps collapses to one full step
    cfg.steps = 1;
    cfg.norm = Norm::linf;
    cfg.surface = 0;
    cfg.random_start = false;
    cfg.clamp_input = true;
    Rng unused(0);
    return pgd(net, x, label, cfg, unused);
}

Tensor pgd(const Network& net, const Tensor& x, int label, const AttackConfig& cfg, Rng& rng) {
    if (cfg.surface != 0) throw ArgumentError("pgd attacks the input; use pgd_latent for layers");
    return pgd_latent(net, x, label, cfg, rng);
}

Tensor pgd_latent(const Network& net, const Tensor& x, int label, const AttackConfig& cfg,
                  Rng& rng) {
    int labels[1] = {label};
    return drop_batch(pgd_batch(net, lift(x), labels, cfg, rng));
}

Tensor latent_attack(const Network& net, const Tensor& x, int label,
                     const LatentAttackConfig& cfg) {
    int labels[1] = {label};
    return drop_batch(latent_attack_batch(net, lift(x), labels, cfg));
}

namespace {

Index count_correct(const Tensor& logits, std::span<const int> labels) {
    const Index b = logits.dim(0), c = logits.dim(1);
    Index correct = 0;
    for (Index i = 0; i < b; ++i) {
        const double* p = logits.data() + i * c;
        int best = 0;
        for (Index j = 1; j < c; ++j)
            if (p[j] > p[best]) best = static_cast<int>(j);
        if (best == labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return correct;
}

}  // namespace

double adversarial_accuracy(const Network& net, const Dataset& data, const AttackConfig& cfg,
                            Rng& rng) {
    if (data.size() == 0) throw ArgumentError("adversarial accuracy of an empty dataset");
    Workspace ws;
    ForwardTrace trace;
    constexpr Index kChunk = 128;
    Index correct = 0;
    for (Index at = 0; at < data.size(); at += kChunk) {
        const Index b = std::min(kChunk, data.size() - at);
        std::vector<Index> idx(static_cast<std::size_t>(b));
        for (Index i = 0; i < b; ++i) idx[static_cast<std::size_t>(i)] = at + i;
        Batch batch = take_batch(data, idx);
        Tensor adv = pgd_batch(net, batch.images, batch.labels, cfg, rng);
        forward_span_into(net, cfg.surface, net.num_layers(), adv, trace, ws);
        correct += count_correct(trace.logits(), batch.labels);
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

double latent_attack_accuracy(const Network& net, const Dataset& data,
                              const LatentAttackConfig& cfg) {
    if (data.size() == 0) throw ArgumentError("adversarial accuracy of an empty dataset");
    Workspace ws;
    ForwardTrace trace;
    constexpr Index kChunk = 128;
    Index correct = 0;
    for (Index at = 0; at < data.size(); at += kChunk) {
        const Index b = std::min(kChunk, data.size() - at);
        std::vector<Index> idx(static_cast<std::size_t>(b));
        for (Index i = 0; i < b; ++i) idx[static_cast<std::size_t>(i)] = at + i;
        Batch batch = take_batch(data, idx);
        Tensor adv = latent_attack_batch(net, batch.images, batch.labels, cfg);
        forward_span_into(net, 0, net.num_layers(), adv, trace, ws);
        correct += count_correct(trace.logits(), batch.labels);
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace latnet
