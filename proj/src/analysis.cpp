#include "latnet/analysis.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>

#include "latnet/checkpoint.hpp"
#include "latnet/errors.hpp"
#include "latnet/serialize.hpp"

namespace latnet {

LayerEpsilons compute_layer_epsilons(const Network& net, const Dataset& data,
                                     const AttackConfig& attack, double scale, Rng& rng) {
    if (data.size() == 0) throw ArgumentError("layer epsilons of an empty dataset");
    if (attack.surface != 0) throw ArgumentError("layer epsilons need an input-space attack");
    if (!std::isfinite(scale) || scale < 0.0) throw ArgumentError("scale must be finite and >= 0");

    const Index l = net.num_layers();
    LayerEpsilons out;
    out.scale = scale;
    out.source = attack;
    out.eps.assign(static_cast<std::size_t>(l), 0.0);

    Workspace ws;
    ForwardTrace clean, adv;
    constexpr Index kChunk = 128;
    for (Index at = 0; at < data.size(); at += kChunk) {
        const Index b = std::min(kChunk, data.size() - at);
        std::vector<Index> idx(static_cast<std::size_t>(b));
        for (Index i = 0; i < b; ++i) idx[static_cast<std::size_t>(i)] = at + i;
        Batch batch = take_batch(data, idx);
        Tensor x_adv = pgd_batch(net, batch.images, batch.labels, attack, rng);
        forward_span_into(net, 0, l - 1, batch.images, clean, ws);
        forward_span_into(net, 0, l - 1, x_adv, adv, ws);
        for (Index i = 0; i < l; ++i) {
            const Tensor& a = clean.at_boundary(i);
            const Tensor& c = adv.at_boundary(i);
            const Index stride = a.size() / b;
            for (Index e = 0; e < b; ++e) {
                double m = 0.0;
                const double* pa = a.data() + e * stride;
                const double* pc = c.data() + e * stride;
                for (Index j = 0; j < stride; ++j) m = std::max(m, std::abs(pa[j] - pc[j]));
                out.eps[static_cast<std::size_t>(i)] += m;
            }
        }
    }
    for (double& e : out.eps) e = scale * (e / static_cast<double>(data.size()));
    return out;
}

double estimate_local_lipschitz(const std::function<Tensor(const Tensor&)>& fn, const Tensor& x,
                                double eps, int samples, Rng& rng) {
    if (!(eps > 0.0)) throw ArgumentError("lipschitz neighborhood eps must be > 0");
    if (samples < 1) throw ArgumentError("lipschitz estimation needs samples >= 1");
    const Tensor fx = fn(x);
    double best = 0.0;
    for (int s = 0; s < samples; ++s) {
        Tensor xj;
        double dist = 0.0;
        for (int tries = 0; tries < 1000; ++tries) {
            xj = sample_uniform_ball(rng, x, eps, Norm::linf);
            dist = l2_norm(xj - x);
            if (dist > 0.0) break;
        }
        if (dist == 0.0) throw ArgumentError("lipschitz neighborhood is degenerate");
        best = std::max(best, l2_norm(fn(xj) - fx) / dist);
    }
    return best;
}

std::vector<double> sweep_layer_robustness(const Network& net, const Dataset& data,
                                           const LayerEpsilons& epsilons,
                                           const AttackConfig& latent_attack_template, Rng& rng) {
    const Index l = net.num_layers();
    if (epsilons.eps.size() < static_cast<std::size_t>(l))
        throw ArgumentError("epsilon map covers " + std::to_string(epsilons.eps.size()) +
                            " boundaries, network has " + std::to_string(l));
    std::vector<double> curve;
    curve.reserve(static_cast<std::size_t>(l));
    for (Index i = 0; i < l; ++i) {
        AttackConfig cfg = latent_attack_template;
        cfg.surface = i;
        cfg.eps = epsilons.eps[static_cast<std::size_t>(i)];
        curve.push_back(adversarial_accuracy(net, data, cfg, rng));
    }
    return curve;
}

namespace {

// One point's local estimate for the suffix starting at `boundary`, with the
// center and all neighbors pushed through g_i as a single batch.
double lipschitz_at(const Network& net, const Tensor& latents, Index point, Index boundary,
                    double eps, int samples, Rng& rng, Workspace& ws, ForwardTrace& trace,
                    Tensor& neighbors) {
    const Index n = latents.size() / latents.dim(0);
    const double* z = latents.data() + point * n;

    Shape nb_shape = latents.shape();
    nb_shape[0] = samples + 1;
    neighbors.resize(nb_shape);
    std::copy_n(z, n, neighbors.data());
    for (int s = 1; s <= samples; ++s) {
        double* row = neighbors.data() + s * n;
        double dist2 = 0.0;
        for (int tries = 0; tries < 1000; ++tries) {
            dist2 = 0.0;
            for (Index j = 0; j < n; ++j) {
                row[j] = z[j] + rng.uniform(-eps, eps);
                const double d = row[j] - z[j];
                dist2 += d * d;
            }
            if (dist2 > 0.0) break;
        }
        if (dist2 == 0.0) throw ArgumentError("lipschitz neighborhood is degenerate");
    }

    forward_span_into(net, boundary, net.num_layers(), neighbors, trace, ws);
    const Tensor& logits = trace.logits();
    const Index c = logits.dim(1);
    const double* f0 = logits.data();
    double best = 0.0;
    for (int s = 1; s <= samples; ++s) {
        const double* row = neighbors.data() + s * n;
        const double* fs = logits.data() + s * c;
        double num = 0.0, den = 0.0;
        for (Index j = 0; j < c; ++j) {
            const double d = fs[j] - f0[j];
            num += d * d;
        }
        for (Index j = 0; j < n; ++j) {
            const double d = row[j] - z[j];
            den += d * d;
        }
        best = std::max(best, std::sqrt(num) / std::sqrt(den));
    }
    return best;
}

}  // namespace

LipschitzReport sweep_lipschitz(const Network& net, const Dataset& data,
                                const LayerEpsilons& epsilons, int samples, Rng& rng) {
    if (data.size() == 0) throw ArgumentError("lipschitz sweep of an empty dataset");
    if (samples < 1) throw ArgumentError("lipschitz estimation needs samples >= 1");
    const Index l = net.num_layers();
    if (epsilons.eps.size() < static_cast<std::size_t>(l))
        throw ArgumentError("epsilon map covers " + std::to_string(epsilons.eps.size()) +
                            " boundaries, network has " + std::to_string(l));

    LipschitzReport report;
    report.samples = samples;
    report.neighborhood.assign(epsilons.eps.begin(), epsilons.eps.begin() + l);
    report.mean_lipschitz.assign(static_cast<std::size_t>(l), 0.0);

    Workspace ws;
    ForwardTrace trace, head_trace;
    Tensor neighbors;
    constexpr Index kChunk = 64;
    for (Index i = 0; i < l; ++i) {
        const double eps = epsilons.eps[static_cast<std::size_t>(i)];
        if (eps == 0.0) continue;  // degenerate neighborhood, reported as 0
        double total = 0.0;
        for (Index at = 0; at < data.size(); at += kChunk) {
            const Index b = std::min(kChunk, data.size() - at);
            std::vector<Index> idx(static_cast<std::size_t>(b));
            for (Index e = 0; e < b; ++e) idx[static_cast<std::size_t>(e)] = at + e;
            Batch batch = take_batch(data, idx);
            forward_span_into(net, 0, i, batch.images, head_trace, ws);
            const Tensor& latents = head_trace.at_boundary(i);
            for (Index p = 0; p < b; ++p)
                total += lipschitz_at(net, latents, p, i, eps, samples, rng, ws, trace, neighbors);
        }
        report.mean_lipschitz[static_cast<std::size_t>(i)] =
            total / static_cast<double>(data.size());
    }
    return report;
}

EvalReport evaluate(const Network& net, const Dataset& data, const EvalConfig& cfg) {
    validate(net);
    if (data.size() == 0) throw ArgumentError("evaluation of an empty dataset");

    Rng master(cfg.seed);
    EvalReport r;
    r.seed = cfg.seed;
    r.model_hash = model_hash(net);
    r.config_hash = config_hash(nlohmann::json(cfg));
    r.clean_accuracy = accuracy(net, data);

    std::uint64_t key = 10;
    for (const NamedAttack& a : cfg.attacks) {
        Rng rng = master.split(key++);
        r.attacks.push_back({a.name, adversarial_accuracy(net, data, a.cfg, rng)});
    }
    for (const NamedLatentAttack& a : cfg.latent_attacks)
        r.attacks.push_back({a.name, latent_attack_accuracy(net, data, a.cfg)});

    {
        Rng rng = master.split(100);
        r.epsilons = compute_layer_epsilons(net, data, cfg.source_attack, cfg.eps_scale, rng);
    }
    if (cfg.include_layer_sweep) {
        Rng rng = master.split(101);
        r.layer_adv_accuracy = sweep_layer_robustness(net, data, r.epsilons, cfg.sweep_template, rng);
    }
    if (cfg.include_lipschitz) {
        Rng rng = master.split(102);
        Dataset probe = head(data, std::min(cfg.lipschitz_points, data.size()));
        r.lipschitz = sweep_lipschitz(net, probe, r.epsilons, cfg.lipschitz_samples, rng);
    }
    return r;
}

namespace {

std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
    return buf;
}

}  // namespace

std::string report_json(const EvalReport& report) {
    nlohmann::json j{{"schema", "latnet-eval-report/1"},
                     {"seed", report.seed},
                     {"model_hash", hex64(report.model_hash)},
                     {"config_hash", hex64(report.config_hash)},
                     {"clean_accuracy", report.clean_accuracy}};
    nlohmann::json attacks = nlohmann::json::array();
    for (const AttackResult& a : report.attacks)
        attacks.push_back({{"name", a.name}, {"adv_accuracy", a.adv_accuracy}});
    j["attacks"] = std::move(attacks);
    j["layer_epsilons"] = {{"scale", report.epsilons.scale}, {"eps", report.epsilons.eps}};
    if (!report.layer_adv_accuracy.empty()) j["layer_adv_accuracy"] = report.layer_adv_accuracy;
    if (!report.lipschitz.mean_lipschitz.empty())
        j["lipschitz"] = {{"mean", report.lipschitz.mean_lipschitz},
                          {"neighborhood", report.lipschitz.neighborhood},
                          {"samples", report.lipschitz.samples}};
    return j.dump(2) + "\n";
}

std::string report_layer_csv(const EvalReport& report) {
    std::string out = "# latnet-layer-curves v1\n";
    out += "layer_index,epsilon,adv_accuracy,mean_local_lipschitz\n";
    const std::size_t n = report.epsilons.eps.size();
    char buf[64];
    for (std::size_t i = 0; i < n; ++i) {
        out += std::to_string(i);
        std::snprintf(buf, sizeof buf, ",%.17g", report.epsilons.eps[i]);
        out += buf;
        if (i < report.layer_adv_accuracy.size()) {
            std::snprintf(buf, sizeof buf, ",%.17g", report.layer_adv_accuracy[i]);
            out += buf;
        } else {
            out += ",";
        }
        if (i < report.lipschitz.mean_lipschitz.size()) {
            std::snprintf(buf, sizeof buf, ",%.17g", report.lipschitz.mean_lipschitz[i]);
            out += buf;
        } else {
            out += ",";
        }
        out += "\n";
    }
    return out;
}

std::uint64_t config_hash(const nlohmann::json& j) {
    const std::string dump = j.dump();
    return fnv1a(dump.data(), dump.size());
}

}  // namespace latnet
