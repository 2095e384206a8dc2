#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

// End-to-end checks of the command line tool, driven through a shell.

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "latnet_cli_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

RunResult run_cli(const fs::path& scratch, const std::string& args) {
    const fs::path out_file = scratch / "stdout.txt";
    const fs::path err_file = scratch / "stderr.txt";
    const std::string cmd = std::string(LATNET_CLI_PATH) + " " + args + " 1>" +
                            out_file.string() + " 2>" + err_file.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    return r;
}

json report_of(const fs::path& dir) { return json::parse(slurp(dir / "report.json")); }

const std::string kToy = "--toy-n 200 --toy-dim 4 --toy-separation 6.0";
const std::string kTrainArgs = "--technique natural --epochs 1 --lr 0.3 --batch-size 20 --seed 7";

}  // namespace

TEST_CASE("train rerun is byte-identical and loss falls") {
    fs::path s = scratch_dir("train_repro");
    for (const char* d : {"a", "b"}) {
        RunResult r = run_cli(s, "train " + kTrainArgs + " " + kToy + " --out " +
                                     (s / d).string());
        REQUIRE(r.exit_code == 0);
    }
    for (const char* f : {"report.json", "train_log.csv", "model.ckpt", "config.json"})
        CHECK(slurp(s / "a" / f) == slurp(s / "b" / f));

    json rep = report_of(s / "a");
    CHECK(rep["schema"] == "latnet-train-report/1");
    CHECK(rep["seed"] == 7);
    CHECK(rep["steps"] == 20);  // 400 examples / batch 20
    CHECK(rep["tool_version"].is_string());
    CHECK(rep["config_hash"].get<std::string>().size() == 16);
    CHECK(rep["model_hash"].get<std::string>().size() == 16);

    std::istringstream log(slurp(s / "a" / "train_log.csv"));
    std::string line;
    std::getline(log, line);
    CHECK(line == "# latnet-train-log v1");
    std::getline(log, line);
    CHECK(line == "step,j_adv,j_latent,j_combined,latent_eps,layer");
    double first = -1.0, last = -1.0;
    while (std::getline(log, line)) {
        double v = std::stod(line.substr(line.find(',') + 1));
        if (first < 0.0) first = v;
        last = v;
    }
    CHECK(last < first);
}

TEST_CASE("config file matches flags and flags override the file") {
    fs::path s = scratch_dir("config_precedence");
    RunResult flags = run_cli(s, "train " + kTrainArgs + " " + kToy + " --out " +
                                     (s / "flags").string());
    REQUIRE(flags.exit_code == 0);

    std::ofstream(s / "cfg.json") << json{{"technique", "natural"},
                                          {"lr", 0.3},
                                          {"batch_size", 20},
                                          {"epochs", 1},
                                          {"seed", 7},
                                          {"dataset",
                                           {{"toy_n", 200},
                                            {"toy_dim", 4},
                                            {"toy_separation", 6.0}}}};
    RunResult from_file = run_cli(s, "train --config " + (s / "cfg.json").string() + " --out " +
                                         (s / "file").string());
    REQUIRE(from_file.exit_code == 0);
    CHECK(slurp(s / "flags" / "model.ckpt") == slurp(s / "file" / "model.ckpt"));

    RunResult reseeded = run_cli(s, "train --config " + (s / "cfg.json").string() +
                                        " --seed 8 --out " + (s / "reseeded").string());
    REQUIRE(reseeded.exit_code == 0);
    CHECK(report_of(s / "reseeded")["model_hash"] != report_of(s / "file")["model_hash"]);
    CHECK(report_of(s / "reseeded")["seed"] == 8);
}

TEST_CASE("finetune lat at omega 1 equals at on the same checkpoint") {
    fs::path s = scratch_dir("finetune_equiv");
    REQUIRE(run_cli(s, "train " + kTrainArgs + " " + kToy + " --out " + (s / "base").string())
                .exit_code == 0);
    const std::string common = "finetune --model " + (s / "base" / "model.ckpt").string() +
                               " --layer 2 --epochs 1 --lr 0.1 --batch-size 20 --attack-eps 0.1"
                               " --attack-steps 5 --seed 21 " +
                               kToy;
    REQUIRE(run_cli(s, common + " --technique lat --omega 1.0 --out " + (s / "lat1").string())
                .exit_code == 0);
    REQUIRE(run_cli(s, common + " --technique at --out " + (s / "at").string()).exit_code == 0);
    CHECK(report_of(s / "lat1")["model_hash"] == report_of(s / "at")["model_hash"]);
    CHECK(report_of(s / "lat1")["final_loss"] == report_of(s / "at")["final_loss"]);
}

TEST_CASE("finetune rejects a bad layer before training") {
    fs::path s = scratch_dir("finetune_bad_layer");
    REQUIRE(run_cli(s, "train " + kTrainArgs + " " + kToy + " --out " + (s / "base").string())
                .exit_code == 0);
    RunResult r = run_cli(s, "finetune --model " + (s / "base" / "model.ckpt").string() +
                                 " --technique lat --layer 99 " + kToy + " --out " +
                                 (s / "bad").string());
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("error: config:") == 0);
    CHECK(r.err.find("layer") != std::string::npos);
    CHECK(r.err.find('\n') == r.err.size() - 1);  // a single line
    CHECK(!fs::exists(s / "bad"));
}

TEST_CASE("attack with zero budget reports clean accuracy") {
    fs::path s = scratch_dir("attack_zero");
    REQUIRE(run_cli(s, "train " + kTrainArgs + " " + kToy + " --out " + (s / "base").string())
                .exit_code == 0);
    for (const std::string method : {"fgsm", "pgd"}) {
        RunResult r = run_cli(s, "attack --model " + (s / "base" / "model.ckpt").string() +
                                     " --method " + method + " --eps 0 " + kToy + " --seed 3" +
                                     " --out " + (s / ("zero_" + method)).string());
        REQUIRE(r.exit_code == 0);
        json rep = report_of(s / ("zero_" + method));
        CHECK(rep["adv_accuracy"] == rep["clean_accuracy"]);
        CHECK(rep["method"] == method);
    }
}

TEST_CASE("attack errors carry a category and an exit code") {
    fs::path s = scratch_dir("attack_errors");
    REQUIRE(run_cli(s, "train " + kTrainArgs + " " + kToy + " --out " + (s / "base").string())
                .exit_code == 0);
    const std::string model = (s / "base" / "model.ckpt").string();

    RunResult unknown = run_cli(s, "attack --model " + model + " --method warp " + kToy);
    CHECK(unknown.exit_code == 2);
    CHECK(unknown.err.find("warp") != std::string::npos);
    for (const char* name : {"fgsm", "pgd", "la"})
        CHECK(unknown.err.find(name) != std::string::npos);

    RunResult missing = run_cli(s, "attack --model " + model +
                                       " --images /no/such.idx --labels /no/such-labels.idx");
    CHECK(missing.exit_code == 3);
    CHECK(missing.err.find("error: io:") == 0);
    CHECK(missing.err.find("/no/such.idx") != std::string::npos);

    std::string broken = slurp(s / "base" / "model.ckpt").substr(0, 150);
    std::ofstream(s / "broken.ckpt", std::ios::binary) << broken;
    RunResult corrupt = run_cli(s, "attack --model " + (s / "broken.ckpt").string() + " " + kToy);
    CHECK(corrupt.exit_code == 5);
    CHECK(corrupt.err.find("error: checksum:") == 0);

    RunResult no_data = run_cli(s, "attack --model " + model);
    CHECK(no_data.exit_code == 2);
    CHECK(no_data.err.find("error: config:") == 0);
}

TEST_CASE("latent attack through the cli lowers accuracy within the input ball") {
    fs::path s = scratch_dir("attack_la");
    REQUIRE(run_cli(s, "train " + kTrainArgs + " " + kToy + " --out " + (s / "base").string())
                .exit_code == 0);
    RunResult r = run_cli(s, "attack --model " + (s / "base" / "model.ckpt").string() +
                                 " --method la --layer 1 --eps 0.3 --latent-eps 1.0 " + kToy +
                                 " --save-examples --out " + (s / "la").string());
    REQUIRE(r.exit_code == 0);
    json rep = report_of(s / "la");
    CHECK(rep["adv_accuracy"].get<double>() < rep["clean_accuracy"].get<double>());
    CHECK(rep["attack"]["layer"] == 1);

    std::string blob = slurp(s / "la" / "adv_examples.bin");
    auto shape = rep["adv_examples_shape"].get<std::vector<long>>();
    REQUIRE(shape.size() == 2);
    CHECK(shape[0] == 400);
    CHECK(blob.size() == sizeof(double) * 400 * shape[1]);
}

TEST_CASE("sweep writes a schema-led csv and reruns byte-identical") {
    fs::path s = scratch_dir("sweep_repro");
    REQUIRE(run_cli(s, "train " + kTrainArgs + " " + kToy + " --out " + (s / "base").string())
                .exit_code == 0);
    const std::string args = "sweep --model " + (s / "base" / "model.ckpt").string() + " " + kToy +
                             " --seed 5 --sweep-steps 5 --lipschitz-samples 16" +
                             " --lipschitz-points 40";
    REQUIRE(run_cli(s, args + " --out " + (s / "a").string()).exit_code == 0);
    REQUIRE(run_cli(s, args + " --out " + (s / "b").string()).exit_code == 0);
    CHECK(slurp(s / "a" / "curves.csv") == slurp(s / "b" / "curves.csv"));
    CHECK(slurp(s / "a" / "report.json") == slurp(s / "b" / "report.json"));

    std::istringstream csv(slurp(s / "a" / "curves.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "# latnet-layer-curves v1");
    std::getline(csv, line);
    CHECK(line == "layer_index,epsilon,adv_accuracy,mean_local_lipschitz");
    int rows = 0;
    while (std::getline(csv, line)) ++rows;
    CHECK(rows == 3);  // dense, relu, dense: boundaries 0..2
}

TEST_CASE("eval embeds the provenance quadruple and the attack suite") {
    fs::path s = scratch_dir("eval_suite");
    REQUIRE(run_cli(s, "train " + kTrainArgs + " " + kToy + " --out " + (s / "base").string())
                .exit_code == 0);
    RunResult r = run_cli(s, "eval --model " + (s / "base" / "model.ckpt").string() + " " + kToy +
                                 " --seed 5 --attack-eps 0.1 --attack-steps 10 --la-layer 1" +
                                 " --la-latent-eps 0.5 --sweep-steps 5 --lipschitz-samples 16" +
                                 " --lipschitz-points 40 --out " + (s / "run").string());
    REQUIRE(r.exit_code == 0);

    json rep = report_of(s / "run");
    CHECK(rep["tool_version"].is_string());
    CHECK(rep["seed"] == 5);
    CHECK(rep["config_hash"].get<std::string>().size() == 16);
    CHECK(rep["model_hash"].get<std::string>().size() == 16);
    REQUIRE(rep["attacks"].size() == 3);
    CHECK(rep["attacks"][0]["name"] == "fgsm");
    CHECK(rep["attacks"][1]["name"] == "pgd-10");
    CHECK(rep["attacks"][2]["name"] == "la-g1");
    for (const json& a : rep["attacks"])
        CHECK(a["adv_accuracy"].get<double>() <= rep["clean_accuracy"].get<double>());

    json echoed = json::parse(slurp(s / "run" / "config.json"));
    CHECK(echoed["seed"] == 5);
    CHECK(echoed["command"] == "eval");
    CHECK(echoed["attacks"].size() == 2);
}

TEST_CASE("usage errors exit nonzero") {
    fs::path s = scratch_dir("usage");
    RunResult none = run_cli(s, "");
    CHECK(none.exit_code == 2);
    CHECK(none.err.find("error: usage:") == 0);

    RunResult version = run_cli(s, "--version");
    CHECK(version.exit_code == 0);
    CHECK(version.out.find("latnet") == 0);

    RunResult help = run_cli(s, "train --help");
    CHECK(help.exit_code == 0);
    CHECK(help.out.find("--technique") != std::string::npos);
}
