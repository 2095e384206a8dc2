#pragma once

#include <functional>
#include <string>
#include <vector>

#include "latnet/attacks.hpp"

namespace latnet {

// Per-boundary perturbation budgets derived from observed latent displacement
// under an input-space attack: eps[i] = scale * mean_x ||h_i(x) - h_i(x_adv)||_inf
// for boundaries 0..l-1 (the attackable surfaces).
struct LayerEpsilons {
    std::vector<double> eps;
    double scale = 1.0;
    AttackConfig source;
};

// Mean local Lipschitz estimate of each suffix g_i over the evaluation set.
struct LipschitzReport {
    std::vector<double> mean_lipschitz;  // index i -> mean over points of the local estimate
    std::vector<double> neighborhood;    // the eps_i each estimate sampled in
    int samples = 0;
};

struct NamedAttack {
    std::string name;
    AttackConfig cfg;
};

struct NamedLatentAttack {
    std::string name;
    LatentAttackConfig cfg;
};

struct EvalConfig {
    std::vector<NamedAttack> attacks;
    std::vector<NamedLatentAttack> latent_attacks;
    AttackConfig source_attack;  // drives the per-layer budgets
    double eps_scale = 1.0;
    AttackConfig sweep_template = default_sweep_template();
    bool include_layer_sweep = true;
    bool include_lipschitz = true;
    int lipschitz_samples = 128;
    Index lipschitz_points = 1000;  // cap on evaluation points for the Lipschitz sweep
    std::uint64_t seed = 0;

    static AttackConfig default_sweep_template() {
        AttackConfig a;
        a.eps = 0.0;        // filled per layer
        a.step_size = 0.0;  // resolves to eps_i / 4
        a.steps = 10;
        a.random_start = false;
        return a;
    }
};

struct AttackResult {
    std::string name;
    double adv_accuracy = 0.0;
};

struct EvalReport {
    double clean_accuracy = 0.0;
    std::vector<AttackResult> attacks;
    std::vector<double> layer_adv_accuracy;  // index 0 = f under the input attack
    LayerEpsilons epsilons;
    LipschitzReport lipschitz;
    std::uint64_t seed = 0;
    std::uint64_t model_hash = 0;
    std::uint64_t config_hash = 0;
};

// Runs the input attack over the whole set and records the mean per-example
// linf displacement at every boundary, times scale.
LayerEpsilons compute_layer_epsilons(const Network& net, const Dataset& data,
                                     const AttackConfig& attack, double scale, Rng& rng);

// max over `samples` draws x_j uniform in the linf eps-ball around x of
// ||fn(x_j) - fn(x)||_2 / ||x_j - x||_2. Draws that coincide with x exactly
// are redrawn.
double estimate_local_lipschitz(const std::function<Tensor(const Tensor&)>& fn, const Tensor& x,
                                double eps, int samples, Rng& rng);

// Adversarial accuracy of g_i on latents perturbed with budget epsilons.eps[i],
// for every boundary; index 0 is the whole network under the input attack.
// The template supplies steps/norm/start; eps and step size are per layer.
std::vector<double> sweep_layer_robustness(const Network& net, const Dataset& data,
                                           const LayerEpsilons& epsilons,
                                           const AttackConfig& latent_attack_template, Rng& rng);

// Mean over the evaluation set of the local Lipschitz estimate of g_i at
// h_i(x) with neighborhood epsilons.eps[i]. Boundaries with eps_i == 0 report
// 0 (the neighborhood is degenerate).
LipschitzReport sweep_lipschitz(const Network& net, const Dataset& data,
                                const LayerEpsilons& epsilons, int samples, Rng& rng);

EvalReport evaluate(const Network& net, const Dataset& data, const EvalConfig& cfg);

// Serialized forms: a JSON document, and a flat per-layer CSV
// (schema comment line, header row, one row per boundary).
std::string report_json(const EvalReport& report);
std::string report_layer_csv(const EvalReport& report);

}  // namespace latnet
