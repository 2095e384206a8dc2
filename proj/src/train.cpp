#include "latnet/train.hpp"

#include <cmath>

#include "latnet/errors.hpp"

namespace latnet {

const char* technique_name(Technique t) {
    switch (t) {
        case Technique::natural: return "natural";
        case Technique::at: return "at";
        case Technique::fnt: return "fnt";
        case Technique::lat: return "lat";
        case Technique::lat_random: return "lat-random";
    }
    return "?";
}

Technique technique_from_name(const std::string& name) {
    if (name == "natural") return Technique::natural;
    if (name == "at") return Technique::at;
    if (name == "fnt") return Technique::fnt;
    if (name == "lat") return Technique::lat;
    if (name == "lat-random") return Technique::lat_random;
    throw ArgumentError("unknown technique '" + name +
                        "' (natural, at, fnt, lat, lat-random)");
}

namespace {

void check_grad_shapes(const Network& net, const GradientBundle& grads) {
    if (grads.param_grads.size() != net.layers.size())
        throw ShapeError("gradient bundle covers " + std::to_string(grads.param_grads.size()) +
                         " layers, network has " + std::to_string(net.layers.size()));
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerGrads& g = grads.param_grads[i];
        if (g.weights.size() == 0 && g.bias.size() == 0) continue;
        bool ok = false;
        std::visit(
            [&](const auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, DenseLayer>)
                    ok = g.weights.shape() == l.weights.shape() && g.bias.shape() == l.bias.shape();
                else if constexpr (std::is_same_v<L, Conv2DLayer>)
                    ok = g.weights.shape() == l.kernels.shape() && g.bias.shape() == l.bias.shape();
            },
            net.layers[i]);
        if (!ok)
            throw ShapeError("gradient shape mismatch at layer " + std::to_string(i + 1));
    }
}

// theta -= scale * grad for every layer that carries a gradient.
void axpy_params(Network& net, const GradientBundle& grads, double scale) {
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerGrads& g = grads.param_grads[i];
        if (g.weights.size() == 0 && g.bias.size() == 0) continue;
        std::visit(
            [&](auto& l) {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, DenseLayer>) {
                    l.weights.array() -= scale * g.weights.array();
                    l.bias.array() -= scale * g.bias.array();
                } else if constexpr (std::is_same_v<L, Conv2DLayer>) {
                    l.kernels.array() -= scale * g.weights.array();
                    l.bias.array() -= scale * g.bias.array();
                }
            },
            net.layers[i]);
    }
}

// Batch-mean per-example linf distance between two activation batches.
double mean_linf_gap(const Tensor& a, const Tensor& b) {
    const Index n = a.dim(0);
    const Index stride = a.size() / n;
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
        double m = 0.0;
        const double* pa = a.data() + i * stride;
        const double* pb = b.data() + i * stride;
        for (Index j = 0; j < stride; ++j) m = std::max(m, std::abs(pa[j] - pb[j]));
        total += m;
    }
    return total / static_cast<double>(n);
}

// v = momentum * v + scale * g per parameter tensor. The first call of a step
// applies the decay; further calls only add their contribution.
void accumulate_velocity(GradientBundle& vel, const GradientBundle& g, double scale,
                         double momentum, bool decay_first) {
    if (vel.param_grads.size() != g.param_grads.size())
        vel.param_grads.resize(g.param_grads.size());
    for (std::size_t i = 0; i < g.param_grads.size(); ++i) {
        auto acc = [&](Tensor& v, const Tensor& src) {
            if (src.size() == 0) return;
            if (v.size() == 0) v = Tensor(src.shape(), 0.0);
            if (decay_first)
                v.array() = momentum * v.array() + scale * src.array();
            else
                v.array() += scale * src.array();
        };
        acc(vel.param_grads[i].weights, g.param_grads[i].weights);
        acc(vel.param_grads[i].bias, g.param_grads[i].bias);
    }
}

void validate_config(const Network& net, const Dataset& data, const TrainConfig& cfg) {
    if (data.size() == 0) throw ArgumentError("training on an empty dataset");
    if (!(cfg.omega >= 0.0 && cfg.omega <= 1.0)) throw ArgumentError("omega must lie in [0, 1]");
    if (!(cfg.lr > 0.0)) throw ArgumentError("learning rate must be positive");
    if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
        throw ArgumentError("momentum must lie in [0, 1)");
    if (cfg.batch_size < 1) throw ArgumentError("batch size must be >= 1");
    if (cfg.steps < 1) throw ArgumentError("step count must be >= 1");
    if (cfg.technique != Technique::natural && cfg.attack.surface != 0)
        throw ArgumentError("training attack must target the input (surface 0)");
    const Index l = net.num_layers();
    if (cfg.technique == Technique::fnt || cfg.technique == Technique::lat) {
        if (cfg.layer < 1 || cfg.layer > l - 1)
            throw ArgumentError("latent layer " + std::to_string(cfg.layer) + " outside [1, " +
                                std::to_string(l - 1) + "]");
    }
    if (cfg.technique == Technique::lat_random) {
        if (cfg.layer_pool.empty()) throw ArgumentError("lat-random needs a nonempty layer pool");
        for (Index m : cfg.layer_pool)
            if (m < 1 || m > l - 1)
                throw ArgumentError("layer pool entry " + std::to_string(m) + " outside [1, " +
                                    std::to_string(l - 1) + "]");
    }
    if (data.example_shape() != net.input_shape)
        throw ShapeError("dataset examples of shape " + shape_str(data.example_shape()) +
                         " do not fit network input " + shape_str(net.input_shape));
}

std::pair<Network, TrainLog> train_loop(Network net, const Dataset& data, TrainConfig cfg) {
    validate(net);
    validate_config(net, data, cfg);

    Rng master(cfg.seed);
    Rng shuffle_rng = master.split(1);
    Rng attack_rng = master.split(2);
    Rng latent_rng = master.split(3);
    Rng pick_rng = master.split(5);

    const Index l = net.num_layers();
    const bool adversarial = cfg.technique != Technique::natural;
    const bool has_latent_term =
        (cfg.technique == Technique::fnt || cfg.technique == Technique::lat ||
         cfg.technique == Technique::lat_random) &&
        cfg.omega < 1.0;

    Workspace ws;
    ForwardTrace trace, clean_head, latent_trace;
    BackwardOptions full;
    full.want_param_grads = true;
    full.stop_boundary = 0;
    BackwardOptions from_latent;
    from_latent.want_param_grads = true;

    TrainLog log;
    log.steps.reserve(static_cast<std::size_t>(cfg.steps));
    GradientBundle velocity;
    int step = 0;
    int epoch = 0;

    while (step < cfg.steps) {
        const auto order = epoch_batches(data.size(), cfg.batch_size, shuffle_rng, true);
        for (const auto& idx : order) {
            if (step >= cfg.steps) break;
            Batch batch = take_batch(data, idx);

            Tensor x_train = adversarial
                                 ? pgd_batch(net, batch.images, batch.labels, cfg.attack, attack_rng)
                                 : batch.images;
            forward_span_into(net, 0, l, x_train, trace, ws);
            const double j_adv = loss_cross_entropy_batch(trace.logits(), batch.labels);
            GradientBundle g_adv = backward_batch(net, trace, batch.labels, full, ws);

            StepRecord rec;
            rec.step = step;
            rec.j_adv = j_adv;

            if (has_latent_term) {
                const Index m = cfg.technique == Technique::lat_random
                                    ? cfg.layer_pool[static_cast<std::size_t>(
                                          pick_rng.below(cfg.layer_pool.size()))]
                                    : cfg.layer;
                forward_span_into(net, 0, m, batch.images, clean_head, ws);
                const Tensor& z = clean_head.at_boundary(m);
                const double eps_m =
                    cfg.fixed_latent_eps >= 0.0
                        ? cfg.fixed_latent_eps
                        : cfg.latent_eps_scale * mean_linf_gap(z, trace.at_boundary(m));

                Tensor z_pert;
                if (cfg.technique == Technique::fnt) {
                    z_pert = z;
                    if (eps_m > 0.0)
                        for (Index i = 0; i < z_pert.size(); ++i)
                            z_pert[i] += eps_m * latent_rng.normal();
                } else {
                    AttackConfig la = cfg.latent_attack;
                    la.surface = m;
                    la.eps = eps_m;
                    z_pert = pgd_from_activation(net, z, batch.labels, la, latent_rng);
                }

                forward_span_into(net, m, l, z_pert, latent_trace, ws);
                rec.j_latent = loss_cross_entropy_batch(latent_trace.logits(), batch.labels);
                from_latent.stop_boundary = m;
                cross_entropy_logit_grad(latent_trace.logits(), batch.labels, ws.seed);
                GradientBundle g_lat = backprop_from(net, latent_trace, l, ws.seed, from_latent, ws);

                rec.j_combined = cfg.omega * j_adv + (1.0 - cfg.omega) * rec.j_latent;
                rec.latent_eps = eps_m;
                rec.layer = m;
                if (cfg.momentum > 0.0) {
                    accumulate_velocity(velocity, g_adv, cfg.omega, cfg.momentum, true);
                    accumulate_velocity(velocity, g_lat, 1.0 - cfg.omega, cfg.momentum, false);
                    axpy_params(net, velocity, cfg.lr);
                } else {
                    axpy_params(net, g_adv, cfg.lr * cfg.omega);
                    axpy_params(net, g_lat, cfg.lr * (1.0 - cfg.omega));
                }
            } else {
                // Natural/AT, and the omega = 1 degenerate latent techniques,
                // train on the input-space loss alone.
                rec.j_combined = j_adv;
                if (cfg.momentum > 0.0) {
                    accumulate_velocity(velocity, g_adv, 1.0, cfg.momentum, true);
                    axpy_params(net, velocity, cfg.lr);
                } else {
                    axpy_params(net, g_adv, cfg.lr);
                }
            }
            log.steps.push_back(rec);
            ++step;
        }

        if (cfg.eval_subset > 0) {
            Rng eval_rng = master.split(1000 + static_cast<std::uint64_t>(epoch));
            Dataset probe = head(data, std::min(cfg.eval_subset, data.size()));
            EpochRecord er;
            er.epoch = epoch;
            er.step = step;
            er.clean_acc = accuracy(net, probe);
            er.adv_acc = adversarial_accuracy(net, probe, cfg.attack, eval_rng);
            log.epochs.push_back(er);
        }
        ++epoch;
    }
    return {std::move(net), std::move(log)};
}

}  // namespace

Network sgd_update(const Network& net, const GradientBundle& grads, double lr) {
    Network out = net;
    sgd_update_in_place(out, grads, lr);
    return out;
}

void sgd_update_in_place(Network& net, const GradientBundle& grads, double lr) {
    check_grad_shapes(net, grads);
    axpy_params(net, grads, lr);
}

std::pair<Network, TrainLog> train_natural(Network net, const Dataset& data, TrainConfig cfg) {
    cfg.technique = Technique::natural;
    return train_loop(std::move(net), data, std::move(cfg));
}

std::pair<Network, TrainLog> train_adversarial(Network net, const Dataset& data, TrainConfig cfg) {
    cfg.technique = Technique::at;
    cfg.omega = 1.0;
    return train_loop(std::move(net), data, std::move(cfg));
}

std::pair<Network, TrainLog> finetune_lat(Network net, const Dataset& data, TrainConfig cfg) {
    if (cfg.technique != Technique::lat_random) cfg.technique = Technique::lat;
    return train_loop(std::move(net), data, std::move(cfg));
}

std::pair<Network, TrainLog> finetune_fnt(Network net, const Dataset& data, TrainConfig cfg) {
    cfg.technique = Technique::fnt;
    return train_loop(std::move(net), data, std::move(cfg));
}

}  // namespace latnet
