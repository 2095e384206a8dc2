#pragma once

#include <span>

#include "latnet/network.hpp"

namespace latnet {

// Signed-gradient attack settings. surface is the boundary the iterates live
// at: 0 perturbs the input itself, i >= 1 perturbs the latent activation h_i
// and drives the suffix g_i. Non-positive step_size resolves to eps / 4.
struct AttackConfig {
    double eps = 0.3;
    double step_size = 0.0;
    int steps = 40;
    Norm norm = Norm::linf;
    Index surface = 0;
    bool random_start = false;
    bool clamp_input = true;  // keep input-space iterates inside [0,1]^n
};

// Two-level attack of the latent layer `layer`: alternating latent ascent and
// input-space matching. Non-positive step sizes resolve to budget / 4.
struct LatentAttackConfig {
    Index layer = 1;
    double alpha_latent = 0.0;
    double alpha_input = 0.0;
    int inner_steps = 10;   // p
    int outer_steps = 5;    // k
    double input_eps = 0.3;
    double latent_eps = 0.0;
};

// Projects point onto the eps-ball around center (linf: per-coordinate clip;
// l2: radial scaling), then clips to [0,1] when clamp01 is set.
Tensor project(const Tensor& point, const Tensor& center, double eps, Norm norm,
               bool clamp01 = false);

// --- batched engines ------------------------------------------------------------

// PGD at cfg.surface over a batch. Returns the adversarial activation at that
// boundary: the perturbed input when surface == 0, a perturbed latent otherwise.
Tensor pgd_batch(const Network& net, const Tensor& xb, std::span<const int> labels,
                 const AttackConfig& cfg, Rng& rng);

// Same iterations, starting from (and ball-centered at) `center`, an activation
// batch already at cfg.surface.
Tensor pgd_from_activation(const Network& net, const Tensor& center, std::span<const int> labels,
                           const AttackConfig& cfg, Rng& rng);

// Deterministic: Algorithm 2 has no random component.
Tensor latent_attack_batch(const Network& net, const Tensor& xb, std::span<const int> labels,
                           const LatentAttackConfig& cfg);

// --- single-example fronts --------------------------------------------------------

// clip01(x + eps * sign(grad_x J)).
Tensor fgsm(const Network& net, const Tensor& x, int label, double eps);

// Input-space PGD (cfg.surface must be 0).
Tensor pgd(const Network& net, const Tensor& x, int label, const AttackConfig& cfg, Rng& rng);

// PGD on the latent activation h_i(x); returns the perturbed latent. Layer 0
// coincides with input-space pgd.
Tensor pgd_latent(const Network& net, const Tensor& x, int label, const AttackConfig& cfg,
                  Rng& rng);

Tensor latent_attack(const Network& net, const Tensor& x, int label,
                     const LatentAttackConfig& cfg);

// --- evaluation helpers -----------------------------------------------------------

// Accuracy of the attacked suffix: for surface 0 this is the adversarial
// accuracy of f; for surface i it is the accuracy of g_i on perturbed latents.
double adversarial_accuracy(const Network& net, const Dataset& data, const AttackConfig& cfg,
                            Rng& rng);

double latent_attack_accuracy(const Network& net, const Dataset& data,
                              const LatentAttackConfig& cfg);

}  // namespace latnet
