#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "latnet/attacks.hpp"
#include "latnet/data.hpp"

namespace latnet {

enum class Technique { natural, at, fnt, lat, lat_random };

const char* technique_name(Technique t);
Technique technique_from_name(const std::string& name);

struct TrainConfig {
    Technique technique = Technique::natural;
    double omega = 0.2;      // weight on the input-space adversarial loss
    double lr = 0.01;        // eta
    double momentum = 0.0;   // classic heavy-ball on the combined gradient
    Index batch_size = 50;   // B
    int steps = 400;         // k, SGD steps
    Index layer = 2;         // latent boundary m for FNT/LAT
    std::vector<Index> layer_pool;  // LAT-random draws m from here each step
    AttackConfig attack = default_train_attack();         // input-space attack
    AttackConfig latent_attack = default_latent_attack(); // eps filled per batch
    double latent_eps_scale = 1.0;   // c in the latent budget rule
    double fixed_latent_eps = -1.0;  // >= 0 overrides the per-batch budget
    std::uint64_t seed = 0;
    Index eval_subset = 0;  // per-epoch accuracy probe size, 0 disables

    static AttackConfig default_train_attack() {
        AttackConfig a;
        a.eps = 0.3;
        a.step_size = 0.01;
        a.steps = 40;
        a.random_start = true;
        return a;
    }
    static AttackConfig default_latent_attack() {
        AttackConfig a;
        a.eps = 0.0;        // per-batch value
        a.step_size = 0.0;  // resolves to eps / 4
        a.steps = 10;
        a.random_start = true;
        a.clamp_input = false;
        return a;
    }
};

struct StepRecord {
    int step = 0;
    double j_adv = 0.0;
    double j_latent = 0.0;
    double j_combined = 0.0;
    double latent_eps = 0.0;
    Index layer = 0;
};

struct EpochRecord {
    int epoch = 0;
    int step = 0;  // steps completed at measurement time
    double clean_acc = 0.0;
    double adv_acc = 0.0;
};

struct TrainLog {
    std::vector<StepRecord> steps;
    std::vector<EpochRecord> epochs;
};

// theta' = theta - lr * grad, plain SGD. Layers without a recorded gradient
// (empty tensors) are left untouched.
Network sgd_update(const Network& net, const GradientBundle& grads, double lr);
void sgd_update_in_place(Network& net, const GradientBundle& grads, double lr);

// Minibatch SGD on clean cross-entropy.
std::pair<Network, TrainLog> train_natural(Network net, const Dataset& data, TrainConfig cfg);

// Madry-style adversarial training: every step trains on the PGD-perturbed
// batch only. Identical to finetune_lat with omega = 1.
std::pair<Network, TrainLog> train_adversarial(Network net, const Dataset& data, TrainConfig cfg);

// Latent adversarial fine-tuning: per batch, combine the input-space
// adversarial loss with the loss of g_m on adversarially perturbed latents,
// J = omega * J_adv + (1 - omega) * J_latentAdv. The latent budget is
// latent_eps_scale times the batch mean of ||h_m(x) - h_m(x_adv)||_inf.
std::pair<Network, TrainLog> finetune_lat(Network net, const Dataset& data, TrainConfig cfg);

// As finetune_lat, but the latent perturbation is zero-mean Gaussian noise with
// per-coordinate sigma equal to the latent budget instead of an attack.
std::pair<Network, TrainLog> finetune_fnt(Network net, const Dataset& data, TrainConfig cfg);

}  // namespace latnet
