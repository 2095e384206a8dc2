#include <CLI11.hpp>

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "latnet/analysis.hpp"
#include "latnet/checkpoint.hpp"
#include "latnet/errors.hpp"
#include "latnet/serialize.hpp"
#include "latnet/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace latnet;

namespace {

constexpr const char* kToolVersion = "1.0.0";

// Stable exit codes per error category, one line on stderr.
int exit_code(const std::string& category) {
    if (category == "argument" || category == "config") return 2;
    if (category == "io") return 3;
    if (category == "format") return 4;
    if (category == "checksum") return 5;
    if (category == "version") return 6;
    if (category == "architecture") return 7;
    if (category == "shape") return 8;
    return 1;
}

std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
    return buf;
}

void write_atomic(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string());
}

json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    try {
        json j;
        in >> j;
        if (!j.is_object()) throw ConfigError(path + ": top level must be a JSON object");
        return j;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

// Flags override config-file values override defaults.
template <typename T>
void set_if(const CLI::Option* opt, T& dst, const T& src) {
    if (opt != nullptr && opt->count() > 0) dst = src;
}

struct DataOpts {
    std::string images, labels;
    Index toy_n = 0;
    Index toy_dim = 2;
    double toy_sep = 10.0;
    CLI::Option *o_images = nullptr, *o_labels = nullptr, *o_n = nullptr, *o_dim = nullptr,
                *o_sep = nullptr;

    void attach(CLI::App* sc) {
        o_images = sc->add_option("--images", images, "IDX image file, optionally gzipped");
        o_labels = sc->add_option("--labels", labels, "IDX label file, optionally gzipped");
        o_n = sc->add_option("--toy-n", toy_n, "two-gaussians toy set: examples per class");
        o_dim = sc->add_option("--toy-dim", toy_dim, "two-gaussians dimensionality");
        o_sep = sc->add_option("--toy-separation", toy_sep, "two-gaussians class separation");
    }

    void merge_file(const json& file) {
        auto it = file.find("dataset");
        if (it == file.end()) return;
        std::string im = it->value("images", images), la = it->value("labels", labels);
        Index n = it->value("toy_n", toy_n), d = it->value("toy_dim", toy_dim);
        double s = it->value("toy_separation", toy_sep);
        if (o_images->count() == 0) images = im;
        if (o_labels->count() == 0) labels = la;
        if (o_n->count() == 0) toy_n = n;
        if (o_dim->count() == 0) toy_dim = d;
        if (o_sep->count() == 0) toy_sep = s;
    }

    json resolved() const {
        if (!images.empty()) return {{"images", images}, {"labels", labels}};
        return {{"toy_n", toy_n}, {"toy_dim", toy_dim}, {"toy_separation", toy_sep}};
    }

    Dataset load(Rng data_rng) const {
        if (!images.empty()) {
            if (labels.empty()) throw ConfigError("--images needs --labels");
            return load_idx(images, labels, "idx");
        }
        if (toy_n > 0) return synthetic_two_gaussians(data_rng, toy_n, toy_dim, toy_sep);
        throw ConfigError("no dataset: pass --images/--labels or --toy-n");
    }
};

fs::path resolve_out_dir(const std::string& flag_value, const char* command) {
    if (!flag_value.empty()) return flag_value;
    const char* env = std::getenv("LATNET_OUT_DIR");
    return fs::path(env != nullptr && *env != '\0' ? env : "runs") / command;
}

Network build_network(const std::string& arch, const std::vector<Index>& hidden,
                      const Dataset& data, Rng& init_rng) {
    int classes = 0;
    for (int y : data.labels) classes = std::max(classes, y + 1);
    classes = std::max(classes, 2);

    if (arch == "mnist-cnn") {
        Network net = make_mnist_cnn(init_rng);
        if (data.example_shape() != net.input_shape)
            throw ShapeError("mnist-cnn expects 1x28x28 input, dataset has " +
                             shape_str(data.example_shape()));
        return net;
    }
    if (arch == "mlp") {
        Network net;
        net.input_shape = data.example_shape();
        net.num_classes = classes;
        Index in = 1;
        for (Index d : net.input_shape) in *= d;
        if (net.input_shape.size() > 1) net.layers.push_back(FlattenLayer{});
        for (Index h : hidden) {
            if (h < 1) throw ConfigError("mlp hidden widths must be >= 1");
            net.layers.push_back(make_dense(h, in, init_rng));
            net.layers.push_back(ReluLayer{});
            in = h;
        }
        net.layers.push_back(make_dense(classes, in, init_rng));
        validate(net);
        return net;
    }
    throw ConfigError("unknown architecture '" + arch + "' (mnist-cnn, mlp)");
}

// Mirrors the trainer's own checks but reports every violation at once.
void check_train_config(const Network& net, const Dataset& data, const TrainConfig& cfg) {
    std::vector<std::string> bad;
    if (!(cfg.omega >= 0.0 && cfg.omega <= 1.0)) bad.push_back("omega must lie in [0, 1]");
    if (!(cfg.lr > 0.0)) bad.push_back("lr must be positive");
    if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) bad.push_back("momentum must lie in [0, 1)");
    if (cfg.batch_size < 1) bad.push_back("batch_size must be >= 1");
    if (cfg.steps < 1) bad.push_back("steps must be >= 1");
    if (cfg.attack.surface != 0) bad.push_back("attack.surface must be 0 for training");
    const Index l = net.num_layers();
    if (cfg.technique == Technique::fnt || cfg.technique == Technique::lat) {
        if (cfg.layer < 1 || cfg.layer > l - 1)
            bad.push_back("layer must lie in [1, " + std::to_string(l - 1) + "]");
    }
    if (cfg.technique == Technique::lat_random) {
        if (cfg.layer_pool.empty()) bad.push_back("layer_pool must not be empty");
        for (Index m : cfg.layer_pool)
            if (m < 1 || m > l - 1) {
                bad.push_back("layer_pool entries must lie in [1, " + std::to_string(l - 1) + "]");
                break;
            }
    }
    if (data.example_shape() != net.input_shape)
        bad.push_back("dataset examples of shape " + shape_str(data.example_shape()) +
                      " do not fit network input " + shape_str(net.input_shape));
    if (!bad.empty()) {
        std::string msg = bad[0];
        for (std::size_t i = 1; i < bad.size(); ++i) msg += "; " + bad[i];
        throw ConfigError(msg);
    }
}

std::string train_log_csv(const TrainLog& log) {
    std::string out = "# latnet-train-log v1\n";
    out += "step,j_adv,j_latent,j_combined,latent_eps,layer\n";
    char buf[128];
    for (const StepRecord& r : log.steps) {
        out += std::to_string(r.step);
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%.17g,", r.j_adv, r.j_latent,
                      r.j_combined, r.latent_eps);
        out += buf;
        out += std::to_string(r.layer);
        out += "\n";
    }
    return out;
}

Index count_correct(const Tensor& logits, const std::vector<int>& labels) {
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

// --- subcommand option blocks ---------------------------------------------------

struct TrainOpts {
    std::string config_path, out, model, technique, arch = "mlp";
    std::vector<Index> hidden = {32};
    std::vector<Index> pool;
    double omega = 0.2, lr = 0.01, momentum = 0.0, eps_scale = 1.0, fixed_eps = -1.0;
    double attack_eps = 0.3, attack_alpha = 0.01;
    bool attack_random_start = true;
    Index batch = 50, layer = 2, eval_subset = 0;
    int steps = 0, epochs = 1, attack_steps = 40, latent_steps = 10;
    std::uint64_t seed = 0;
    DataOpts data;
    CLI::Option *o_technique = nullptr, *o_omega = nullptr, *o_lr = nullptr,
                *o_momentum = nullptr, *o_batch = nullptr,
                *o_steps = nullptr, *o_epochs = nullptr, *o_layer = nullptr, *o_pool = nullptr,
                *o_eps = nullptr, *o_alpha = nullptr, *o_asteps = nullptr, *o_rstart = nullptr,
                *o_lsteps = nullptr, *o_scale = nullptr, *o_fixed = nullptr, *o_seed = nullptr,
                *o_eval = nullptr;

    void attach(CLI::App* sc, bool finetune) {
        sc->add_option("--config", config_path, "JSON config file");
        sc->add_option("--out", out, "run directory (default $LATNET_OUT_DIR or ./runs)");
        data.attach(sc);
        if (finetune) {
            sc->add_option("--model", model, "checkpoint to fine-tune")->required();
            o_technique = sc->add_option("--technique", technique, "at | fnt | lat | lat-random");
        } else {
            sc->add_option("--arch", arch, "mnist-cnn | mlp");
            sc->add_option("--hidden", hidden, "mlp hidden widths")->delimiter(',');
            o_technique = sc->add_option("--technique", technique, "natural | at");
        }
        o_omega = sc->add_option("--omega", omega, "weight on the input-space adversarial loss");
        o_lr = sc->add_option("--lr", lr, "SGD learning rate");
        o_momentum = sc->add_option("--momentum", momentum, "SGD momentum coefficient");
        o_batch = sc->add_option("--batch-size", batch, "minibatch size");
        o_steps = sc->add_option("--steps", steps, "SGD step count (overrides --epochs)");
        o_epochs = sc->add_option("--epochs", epochs, "epochs over the dataset");
        o_layer = sc->add_option("--layer", layer, "latent boundary m for fnt/lat");
        o_pool = sc->add_option("--layer-pool", pool, "lat-random layer pool")->delimiter(',');
        o_eps = sc->add_option("--attack-eps", attack_eps, "training attack linf budget");
        o_alpha = sc->add_option("--attack-alpha", attack_alpha, "training attack step size");
        o_asteps = sc->add_option("--attack-steps", attack_steps, "training attack iterations");
        o_rstart = sc->add_option("--attack-random-start", attack_random_start,
                                  "random start inside the attack ball");
        o_lsteps = sc->add_option("--latent-steps", latent_steps, "latent attack iterations");
        o_scale = sc->add_option("--latent-eps-scale", eps_scale, "latent budget scale c");
        o_fixed = sc->add_option("--fixed-latent-eps", fixed_eps,
                                 "override the per-batch latent budget (>= 0)");
        o_seed = sc->add_option("--seed", seed, "master seed");
        o_eval = sc->add_option("--eval-subset", eval_subset,
                                "per-epoch accuracy probe size (0 disables)");
    }
};

struct AttackOpts {
    std::string config_path, out, model, method = "pgd";
    double eps = 0.3, alpha = 0.0, latent_eps = 0.0, alpha_latent = 0.0;
    int steps = 40, inner = 10, outer = 5;
    Index surface = 0, layer = 1;
    bool random_start = false, save_examples = false;
    std::uint64_t seed = 0;
    DataOpts data;
    CLI::Option *o_method = nullptr, *o_eps = nullptr, *o_alpha = nullptr, *o_steps = nullptr,
                *o_surface = nullptr, *o_rstart = nullptr, *o_layer = nullptr, *o_leps = nullptr,
                *o_lalpha = nullptr, *o_inner = nullptr, *o_outer = nullptr, *o_seed = nullptr;

    void attach(CLI::App* sc) {
        sc->add_option("--config", config_path, "JSON config file");
        sc->add_option("--out", out, "run directory");
        sc->add_option("--model", model, "checkpoint to attack")->required();
        data.attach(sc);
        o_method = sc->add_option("--method", method, "fgsm | pgd | la");
        o_eps = sc->add_option("--eps", eps, "input-space linf budget");
        o_alpha = sc->add_option("--alpha", alpha, "step size (0 resolves to eps/4)");
        o_steps = sc->add_option("--steps", steps, "pgd iterations");
        o_surface = sc->add_option("--surface", surface, "pgd boundary (0 = input)");
        o_rstart = sc->add_option("--random-start", random_start, "pgd random start");
        o_layer = sc->add_option("--layer", layer, "la latent layer m");
        o_leps = sc->add_option("--latent-eps", latent_eps, "la latent linf budget");
        o_lalpha = sc->add_option("--latent-alpha", alpha_latent, "la latent step size");
        o_inner = sc->add_option("--inner-steps", inner, "la steps per phase");
        o_outer = sc->add_option("--outer-steps", outer, "la alternation rounds");
        o_seed = sc->add_option("--seed", seed, "master seed");
        sc->add_flag("--save-examples", save_examples, "dump perturbed tensors next to the report");
    }
};

struct EvalOpts {
    std::string config_path, out, model;
    double source_eps = 0.3, source_alpha = 0.0, eps_scale = 1.0;
    int source_steps = 40, sweep_steps = 10, lipschitz_samples = 128;
    Index lipschitz_points = 1000;
    bool no_layer_sweep = false, no_lipschitz = false;
    double attack_eps = 0.3, la_latent_eps = 0.0;
    int attack_steps = 40;
    Index la_layer = 0;
    std::uint64_t seed = 0;
    DataOpts data;
    CLI::Option *o_seps = nullptr, *o_salpha = nullptr, *o_ssteps = nullptr, *o_scale = nullptr,
                *o_wsteps = nullptr, *o_lsamples = nullptr, *o_lpoints = nullptr, *o_seed = nullptr;

    void attach(CLI::App* sc, bool with_suite) {
        sc->add_option("--config", config_path, "JSON config file");
        sc->add_option("--out", out, "run directory");
        sc->add_option("--model", model, "checkpoint to evaluate")->required();
        data.attach(sc);
        o_seps = sc->add_option("--source-eps", source_eps, "budget of the displacement probe");
        o_salpha = sc->add_option("--source-alpha", source_alpha, "probe step size");
        o_ssteps = sc->add_option("--source-steps", source_steps, "probe iterations");
        o_scale = sc->add_option("--eps-scale", eps_scale, "scale on the per-layer budgets");
        o_wsteps = sc->add_option("--sweep-steps", sweep_steps, "pgd iterations per layer");
        o_lsamples = sc->add_option("--lipschitz-samples", lipschitz_samples,
                                    "neighbors per lipschitz estimate");
        o_lpoints = sc->add_option("--lipschitz-points", lipschitz_points,
                                   "evaluation points for the lipschitz sweep");
        sc->add_flag("--no-layer-sweep", no_layer_sweep, "skip the per-layer robustness curve");
        sc->add_flag("--no-lipschitz", no_lipschitz, "skip the lipschitz curve");
        o_seed = sc->add_option("--seed", seed, "master seed");
        if (with_suite) {
            sc->add_option("--attack-eps", attack_eps, "budget of the named attack suite");
            sc->add_option("--attack-steps", attack_steps, "pgd iterations in the suite");
            sc->add_option("--la-layer", la_layer, "add a two-level latent attack at this layer");
            sc->add_option("--la-latent-eps", la_latent_eps, "latent budget of that attack");
        }
    }
};

// --- commands --------------------------------------------------------------------

int run_train(const TrainOpts& o, bool finetune) {
    json file = o.config_path.empty() ? json::object() : load_config_file(o.config_path);
    DataOpts data_opts = o.data;
    data_opts.merge_file(file);

    TrainConfig cfg;
    file.get_to(cfg);
    if (o.o_technique->count() > 0) cfg.technique = technique_from_name(o.technique);
    set_if(o.o_omega, cfg.omega, o.omega);
    set_if(o.o_lr, cfg.lr, o.lr);
    set_if(o.o_momentum, cfg.momentum, o.momentum);
    set_if(o.o_batch, cfg.batch_size, o.batch);
    set_if(o.o_layer, cfg.layer, o.layer);
    set_if(o.o_pool, cfg.layer_pool, o.pool);
    set_if(o.o_eps, cfg.attack.eps, o.attack_eps);
    set_if(o.o_alpha, cfg.attack.step_size, o.attack_alpha);
    set_if(o.o_asteps, cfg.attack.steps, o.attack_steps);
    set_if(o.o_rstart, cfg.attack.random_start, o.attack_random_start);
    set_if(o.o_lsteps, cfg.latent_attack.steps, o.latent_steps);
    set_if(o.o_scale, cfg.latent_eps_scale, o.eps_scale);
    set_if(o.o_fixed, cfg.fixed_latent_eps, o.fixed_eps);
    set_if(o.o_seed, cfg.seed, o.seed);
    set_if(o.o_eval, cfg.eval_subset, o.eval_subset);

    const char* command = finetune ? "finetune" : "train";
    if (finetune) {
        if (cfg.technique == Technique::natural)
            throw ConfigError("finetune techniques: at, fnt, lat, lat-random");
    } else if (cfg.technique != Technique::natural && cfg.technique != Technique::at) {
        throw ConfigError("train techniques: natural, at (use finetune for fnt/lat)");
    }

    Rng master(cfg.seed);
    Rng data_rng = master.split(50);
    Dataset data = data_opts.load(data_rng);

    // step budget: an explicit count wins, otherwise epochs over the dataset
    const Index spe = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
    if (o.o_steps->count() > 0) {
        cfg.steps = o.steps;
    } else if (o.o_epochs->count() > 0) {
        cfg.steps = o.epochs * static_cast<int>(spe);
    } else if (!file.contains("steps")) {
        cfg.steps = file.value("epochs", 1) * static_cast<int>(spe);
    }

    Network net;
    if (finetune) {
        net = load_checkpoint(o.model).net;
    } else {
        Rng init_rng = master.split(60);
        net = build_network(o.arch, o.hidden, data, init_rng);
    }
    check_train_config(net, data, cfg);

    auto trained = [&] {
        switch (cfg.technique) {
            case Technique::natural: return train_natural(std::move(net), data, cfg);
            case Technique::at: return train_adversarial(std::move(net), data, cfg);
            case Technique::fnt: return finetune_fnt(std::move(net), data, cfg);
            default: return finetune_lat(std::move(net), data, cfg);
        }
    }();
    Network& model = trained.first;
    TrainLog& log = trained.second;

    const std::uint64_t chash = config_hash(json(cfg));
    const fs::path dir = resolve_out_dir(o.out, command);
    fs::create_directories(dir);

    json prov = {{"technique", technique_name(cfg.technique)},
                 {"seed", cfg.seed},
                 {"config_hash", hex64(chash)},
                 {"tool_version", kToolVersion}};
    save_checkpoint(model, prov, (dir / "model.ckpt").string());

    json config_echo = json(cfg);
    config_echo["command"] = command;
    config_echo["tool_version"] = kToolVersion;
    config_echo["dataset"] = data_opts.resolved();
    if (finetune) config_echo["model"] = o.model;
    else config_echo["arch"] = o.arch;
    write_atomic(dir / "config.json", config_echo.dump(2) + "\n");
    write_atomic(dir / "train_log.csv", train_log_csv(log));

    json report = {{"schema", "latnet-train-report/1"},
                   {"tool_version", kToolVersion},
                   {"command", command},
                   {"technique", technique_name(cfg.technique)},
                   {"seed", cfg.seed},
                   {"config_hash", hex64(chash)},
                   {"model_hash", hex64(model_hash(model))},
                   {"steps", static_cast<int>(log.steps.size())},
                   {"final_loss", log.steps.back().j_combined},
                   {"checkpoint", "model.ckpt"},
                   {"train_log", "train_log.csv"}};
    if (!log.epochs.empty()) {
        json epochs = json::array();
        for (const EpochRecord& e : log.epochs)
            epochs.push_back({{"epoch", e.epoch},
                              {"step", e.step},
                              {"clean_accuracy", e.clean_acc},
                              {"adv_accuracy", e.adv_acc}});
        report["epochs"] = std::move(epochs);
    }
    write_atomic(dir / "report.json", report.dump(2) + "\n");
    std::cout << dir.string() << "\n";
    return 0;
}

int run_attack(const AttackOpts& o) {
    json file = o.config_path.empty() ? json::object() : load_config_file(o.config_path);
    DataOpts data_opts = o.data;
    data_opts.merge_file(file);

    std::string method = file.value("method", o.method);
    set_if(o.o_method, method, o.method);
    if (method != "fgsm" && method != "pgd" && method != "la")
        throw ConfigError("unknown attack method '" + method + "' (fgsm, pgd, la)");

    AttackConfig pgd_cfg;
    if (file.contains("attack")) file.at("attack").get_to(pgd_cfg);
    set_if(o.o_eps, pgd_cfg.eps, o.eps);
    set_if(o.o_alpha, pgd_cfg.step_size, o.alpha);
    set_if(o.o_steps, pgd_cfg.steps, o.steps);
    set_if(o.o_surface, pgd_cfg.surface, o.surface);
    set_if(o.o_rstart, pgd_cfg.random_start, o.random_start);
    if (method == "fgsm") {
        pgd_cfg.steps = 1;
        pgd_cfg.step_size = pgd_cfg.eps > 0.0 ? pgd_cfg.eps : 1.0;
        pgd_cfg.surface = 0;
        pgd_cfg.random_start = false;
    }

    LatentAttackConfig la_cfg;
    if (file.contains("latent_attack")) file.at("latent_attack").get_to(la_cfg);
    set_if(o.o_layer, la_cfg.layer, o.layer);
    set_if(o.o_eps, la_cfg.input_eps, o.eps);
    set_if(o.o_leps, la_cfg.latent_eps, o.latent_eps);
    set_if(o.o_lalpha, la_cfg.alpha_latent, o.alpha_latent);
    set_if(o.o_alpha, la_cfg.alpha_input, o.alpha);
    set_if(o.o_inner, la_cfg.inner_steps, o.inner);
    set_if(o.o_outer, la_cfg.outer_steps, o.outer);

    std::uint64_t seed = file.value("seed", o.seed);
    set_if(o.o_seed, seed, o.seed);

    Rng master(seed);
    Dataset data = data_opts.load(master.split(50));
    Network net = load_checkpoint(o.model).net;
    validate(net);

    json attack_echo = method == "la" ? json(la_cfg) : json(pgd_cfg);
    attack_echo["method"] = method;
    const std::uint64_t chash = config_hash(attack_echo);

    Rng attack_rng = master.split(2);
    const Index l = net.num_layers();
    const Index surface = method == "la" ? 0 : pgd_cfg.surface;
    Workspace ws;
    ForwardTrace trace;
    Tensor examples;
    Index correct = 0;
    constexpr Index kChunk = 128;
    for (Index at = 0; at < data.size(); at += kChunk) {
        const Index b = std::min(kChunk, data.size() - at);
        std::vector<Index> idx(static_cast<std::size_t>(b));
        for (Index i = 0; i < b; ++i) idx[static_cast<std::size_t>(i)] = at + i;
        Batch batch = take_batch(data, idx);
        Tensor adv = method == "la"
                         ? latent_attack_batch(net, batch.images, batch.labels, la_cfg)
                         : pgd_batch(net, batch.images, batch.labels, pgd_cfg, attack_rng);
        if (o.save_examples) {
            if (examples.size() == 0) {
                Shape s = adv.shape();
                s[0] = data.size();
                examples = Tensor(s);
            }
            const Index stride = adv.size() / b;
            std::copy_n(adv.data(), b * stride, examples.data() + at * stride);
        }
        forward_span_into(net, surface, l, adv, trace, ws);
        correct += count_correct(trace.logits(), batch.labels);
    }
    const double adv_acc = static_cast<double>(correct) / static_cast<double>(data.size());
    const double clean = accuracy(net, data);

    const fs::path dir = resolve_out_dir(o.out, "attack");
    fs::create_directories(dir);

    json report = {{"schema", "latnet-attack-report/1"},
                   {"tool_version", kToolVersion},
                   {"command", "attack"},
                   {"method", method},
                   {"seed", seed},
                   {"config_hash", hex64(chash)},
                   {"model_hash", hex64(model_hash(net))},
                   {"clean_accuracy", clean},
                   {"adv_accuracy", adv_acc},
                   {"attack", attack_echo}};
    if (o.save_examples) {
        write_atomic(dir / "adv_examples.bin",
                     std::string(reinterpret_cast<const char*>(examples.data()),
                                 sizeof(double) * static_cast<std::size_t>(examples.size())));
        report["adv_examples"] = "adv_examples.bin";
        report["adv_examples_shape"] = examples.shape();
        report["adv_examples_dtype"] = "float64-le";
    }

    json config_echo = attack_echo;
    config_echo["command"] = "attack";
    config_echo["tool_version"] = kToolVersion;
    config_echo["seed"] = seed;
    config_echo["dataset"] = data_opts.resolved();
    config_echo["model"] = o.model;
    write_atomic(dir / "config.json", config_echo.dump(2) + "\n");
    write_atomic(dir / "report.json", report.dump(2) + "\n");
    std::cout << dir.string() << "\n";
    return 0;
}

int run_eval(const EvalOpts& o, bool with_suite) {
    json file = o.config_path.empty() ? json::object() : load_config_file(o.config_path);
    DataOpts data_opts = o.data;
    data_opts.merge_file(file);

    EvalConfig cfg;
    file.get_to(cfg);
    set_if(o.o_seps, cfg.source_attack.eps, o.source_eps);
    set_if(o.o_salpha, cfg.source_attack.step_size, o.source_alpha);
    set_if(o.o_ssteps, cfg.source_attack.steps, o.source_steps);
    set_if(o.o_scale, cfg.eps_scale, o.eps_scale);
    set_if(o.o_wsteps, cfg.sweep_template.steps, o.sweep_steps);
    set_if(o.o_lsamples, cfg.lipschitz_samples, o.lipschitz_samples);
    set_if(o.o_lpoints, cfg.lipschitz_points, o.lipschitz_points);
    set_if(o.o_seed, cfg.seed, o.seed);
    if (o.no_layer_sweep) cfg.include_layer_sweep = false;
    if (o.no_lipschitz) cfg.include_lipschitz = false;

    if (with_suite && cfg.attacks.empty() && cfg.latent_attacks.empty()) {
        NamedAttack fgsm_probe;
        fgsm_probe.name = "fgsm";
        fgsm_probe.cfg.eps = o.attack_eps;
        fgsm_probe.cfg.steps = 1;
        fgsm_probe.cfg.step_size = o.attack_eps > 0.0 ? o.attack_eps : 1.0;
        cfg.attacks.push_back(fgsm_probe);
        NamedAttack pgd_probe;
        pgd_probe.name = "pgd-" + std::to_string(o.attack_steps);
        pgd_probe.cfg.eps = o.attack_eps;
        pgd_probe.cfg.steps = o.attack_steps;
        cfg.attacks.push_back(pgd_probe);
        if (o.la_layer > 0) {
            NamedLatentAttack la;
            la.name = "la-g" + std::to_string(o.la_layer);
            la.cfg.layer = o.la_layer;
            la.cfg.input_eps = o.attack_eps;
            la.cfg.latent_eps = o.la_latent_eps;
            cfg.latent_attacks.push_back(la);
        }
    }

    Rng master(cfg.seed);
    Dataset data = data_opts.load(master.split(50));
    Network net = load_checkpoint(o.model).net;

    EvalReport report = evaluate(net, data, cfg);

    const char* command = with_suite ? "eval" : "sweep";
    const fs::path dir = resolve_out_dir(o.out, command);
    fs::create_directories(dir);

    json config_echo = json(cfg);
    config_echo["command"] = command;
    config_echo["tool_version"] = kToolVersion;
    config_echo["dataset"] = data_opts.resolved();
    config_echo["model"] = o.model;
    write_atomic(dir / "config.json", config_echo.dump(2) + "\n");

    json jr = json::parse(report_json(report));
    jr["tool_version"] = kToolVersion;
    jr["command"] = command;
    write_atomic(dir / "report.json", jr.dump(2) + "\n");
    write_atomic(dir / "curves.csv", report_layer_csv(report));
    std::cout << dir.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"latent-layer robustness toolkit: train, fine-tune, attack, and profile "
                 "small classifiers"};
    app.set_version_flag("--version", std::string("latnet ") + kToolVersion);
    app.require_subcommand(1);

    TrainOpts train_opts, finetune_opts;
    AttackOpts attack_opts;
    EvalOpts sweep_opts, eval_opts;

    CLI::App* sc_train = app.add_subcommand("train", "train a model from scratch");
    train_opts.attach(sc_train, false);
    CLI::App* sc_finetune = app.add_subcommand("finetune", "fine-tune a checkpoint");
    finetune_opts.attach(sc_finetune, true);
    CLI::App* sc_attack = app.add_subcommand("attack", "attack a checkpoint and report accuracy");
    attack_opts.attach(sc_attack);
    CLI::App* sc_sweep = app.add_subcommand("sweep", "per-layer robustness and lipschitz curves");
    sweep_opts.attach(sc_sweep, false);
    CLI::App* sc_eval = app.add_subcommand("eval", "full evaluation report with an attack suite");
    eval_opts.attach(sc_eval, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << "\n";
        return 2;
    }

    try {
        if (sc_train->parsed()) return run_train(train_opts, false);
        if (sc_finetune->parsed()) return run_train(finetune_opts, true);
        if (sc_attack->parsed()) return run_attack(attack_opts);
        if (sc_sweep->parsed()) return run_eval(sweep_opts, false);
        if (sc_eval->parsed()) return run_eval(eval_opts, true);
    } catch (const Error& e) {
        std::cerr << "error: " << e.category() << ": " << e.what() << "\n";
        return exit_code(e.category());
    } catch (const json::exception& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
