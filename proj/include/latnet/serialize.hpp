#pragma once

#include <json.hpp>

#include "latnet/analysis.hpp"
#include "latnet/train.hpp"

// JSON bindings for config and report types; field names are the CLI names.

namespace latnet {

NLOHMANN_JSON_SERIALIZE_ENUM(Norm, {{Norm::linf, "linf"}, {Norm::l2, "l2"}})

NLOHMANN_JSON_SERIALIZE_ENUM(Technique, {{Technique::natural, "natural"},
                                         {Technique::at, "at"},
                                         {Technique::fnt, "fnt"},
                                         {Technique::lat, "lat"},
                                         {Technique::lat_random, "lat-random"}})

inline void to_json(nlohmann::json& j, const AttackConfig& c) {
    j = {{"eps", c.eps},           {"step_size", c.step_size},
         {"steps", c.steps},       {"norm", c.norm},
         {"surface", c.surface},   {"random_start", c.random_start},
         {"clamp_input", c.clamp_input}};
}

inline void from_json(const nlohmann::json& j, AttackConfig& c) {
    c.eps = j.value("eps", c.eps);
    c.step_size = j.value("step_size", c.step_size);
    c.steps = j.value("steps", c.steps);
    c.norm = j.value("norm", c.norm);
    c.surface = j.value("surface", c.surface);
    c.random_start = j.value("random_start", c.random_start);
    c.clamp_input = j.value("clamp_input", c.clamp_input);
}

inline void to_json(nlohmann::json& j, const LatentAttackConfig& c) {
    j = {{"layer", c.layer},
         {"alpha_latent", c.alpha_latent},
         {"alpha_input", c.alpha_input},
         {"inner_steps", c.inner_steps},
         {"outer_steps", c.outer_steps},
         {"input_eps", c.input_eps},
         {"latent_eps", c.latent_eps}};
}

inline void from_json(const nlohmann::json& j, LatentAttackConfig& c) {
    c.layer = j.value("layer", c.layer);
    c.alpha_latent = j.value("alpha_latent", c.alpha_latent);
    c.alpha_input = j.value("alpha_input", c.alpha_input);
    c.inner_steps = j.value("inner_steps", c.inner_steps);
    c.outer_steps = j.value("outer_steps", c.outer_steps);
    c.input_eps = j.value("input_eps", c.input_eps);
    c.latent_eps = j.value("latent_eps", c.latent_eps);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"technique", c.technique},
         {"omega", c.omega},
         {"lr", c.lr},
         {"momentum", c.momentum},
         {"batch_size", c.batch_size},
         {"steps", c.steps},
         {"layer", c.layer},
         {"layer_pool", c.layer_pool},
         {"attack", c.attack},
         {"latent_attack", c.latent_attack},
         {"latent_eps_scale", c.latent_eps_scale},
         {"fixed_latent_eps", c.fixed_latent_eps},
         {"seed", c.seed},
         {"eval_subset", c.eval_subset}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.technique = j.value("technique", c.technique);
    c.omega = j.value("omega", c.omega);
    c.lr = j.value("lr", c.lr);
    c.momentum = j.value("momentum", c.momentum);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.steps = j.value("steps", c.steps);
    c.layer = j.value("layer", c.layer);
    c.layer_pool = j.value("layer_pool", c.layer_pool);
    c.attack = j.value("attack", c.attack);
    c.latent_attack = j.value("latent_attack", c.latent_attack);
    c.latent_eps_scale = j.value("latent_eps_scale", c.latent_eps_scale);
    c.fixed_latent_eps = j.value("fixed_latent_eps", c.fixed_latent_eps);
    c.seed = j.value("seed", c.seed);
    c.eval_subset = j.value("eval_subset", c.eval_subset);
}

inline void to_json(nlohmann::json& j, const NamedAttack& a) {
    j = {{"name", a.name}, {"config", a.cfg}};
}

inline void from_json(const nlohmann::json& j, NamedAttack& a) {
    a.name = j.at("name").get<std::string>();
    a.cfg = j.value("config", a.cfg);
}

inline void to_json(nlohmann::json& j, const NamedLatentAttack& a) {
    j = {{"name", a.name}, {"config", a.cfg}};
}

inline void from_json(const nlohmann::json& j, NamedLatentAttack& a) {
    a.name = j.at("name").get<std::string>();
    a.cfg = j.value("config", a.cfg);
}

inline void to_json(nlohmann::json& j, const EvalConfig& c) {
    j = {{"attacks", c.attacks},
         {"latent_attacks", c.latent_attacks},
         {"source_attack", c.source_attack},
         {"eps_scale", c.eps_scale},
         {"sweep_template", c.sweep_template},
         {"include_layer_sweep", c.include_layer_sweep},
         {"include_lipschitz", c.include_lipschitz},
         {"lipschitz_samples", c.lipschitz_samples},
         {"lipschitz_points", c.lipschitz_points},
         {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, EvalConfig& c) {
    c.attacks = j.value("attacks", c.attacks);
    c.latent_attacks = j.value("latent_attacks", c.latent_attacks);
    c.source_attack = j.value("source_attack", c.source_attack);
    c.eps_scale = j.value("eps_scale", c.eps_scale);
    c.sweep_template = j.value("sweep_template", c.sweep_template);
    c.include_layer_sweep = j.value("include_layer_sweep", c.include_layer_sweep);
    c.include_lipschitz = j.value("include_lipschitz", c.include_lipschitz);
    c.lipschitz_samples = j.value("lipschitz_samples", c.lipschitz_samples);
    c.lipschitz_points = j.value("lipschitz_points", c.lipschitz_points);
    c.seed = j.value("seed", c.seed);
}

std::uint64_t config_hash(const nlohmann::json& j);

}  // namespace latnet
