#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "cebm/config.hpp"
#include "cebm/io.hpp"
#include "cebm/pipeline.hpp"

using namespace cebm;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("cebm_test_" + std::to_string(std::rand()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& s) const { return (path / s).string(); }
};

int run_cli(const std::string& args) {
    std::string cmd = "./cebm " + args + " > /dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string quick_config_json(const std::string& task, const std::string& method) {
    json j;
    j["task"] = task;
    j["method"] = method;
    j["seed"] = 5;
    j["dataset_size"] = 1000;
    j["train"] = {{"t_outer", 4},
                  {"t_samp", 1},
                  {"t_rnce", 1},
                  {"k", 5},
                  {"batch_size", 16},
                  {"flow_fine_steps", 8},
                  {"flow_lp_steps", 4}};
    return j.dump(2);
}

}  // namespace

TEST_CASE("config round trip is stable and rejects unknown keys") {
    ExperimentConfig c;
    c.task = "spiral";
    c.method = "edm_phi";
    c.train.k = 17;
    c.resolve_defaults();
    std::string j1 = c.to_json();
    ExperimentConfig c2 = ExperimentConfig::from_json(j1);
    CHECK(c2.to_json() == j1);
    CHECK(c2.train.k == 17);

    CHECK_THROWS_AS(ExperimentConfig::from_json("{\"frobnicate\": 1}"), std::invalid_argument);
    CHECK_THROWS_AS(ExperimentConfig::from_json("{\"train\": {\"bogus\": 2}}"),
                    std::invalid_argument);
    CHECK_THROWS_AS(ExperimentConfig::from_json("{\"task\": \"pushT\"}"),
                    std::invalid_argument);
}

TEST_CASE("config overrides") {
    ExperimentConfig c;
    c.apply_override("train.k=21");
    CHECK(c.train.k == 21);
    c.apply_override("sampler.kind=flow");
    CHECK(c.sampler.kind == "flow");
    c.apply_override("train.lr_theta.base_lr=0.01");
    CHECK(c.train.lr_theta.base_lr == 0.01);
    CHECK_THROWS_AS(c.apply_override("nope.k=1"), std::invalid_argument);
    CHECK_THROWS_AS(c.apply_override("train.k"), std::invalid_argument);
}

TEST_CASE("checkpoint round trip is bit-exact") {
    TempDir tmp;
    Checkpoint ckpt;
    ParameterVector pv;
    pv.add("w", Tensor({2, 3}, {1.5, -2.25, 3.0e-17, 4, 5, 6.999999999999}));
    pv.add("b", Tensor::vec({0.1, 0.2}));
    ckpt.groups["theta"] = pv;
    ckpt.metadata_json = "{\"note\":42}";
    std::string path = tmp / "test.ckpt";
    save_checkpoint(path, ckpt);
    Checkpoint back = load_checkpoint(path);
    CHECK(back.groups.at("theta").flatten() == pv.flatten());
    CHECK(back.groups.at("theta").at("w").shape == std::vector<std::size_t>{2, 3});
    CHECK(json::parse(back.metadata_json)["note"] == 42);
}

TEST_CASE("csv round trip") {
    TempDir tmp;
    std::string path = tmp / "t.csv";
    write_csv(path, {"a", "b"}, {{1.0, -0.5}, {2.5e-10, 3.0}});
    CsvTable t = read_csv(path);
    CHECK(t.header == std::vector<std::string>{"a", "b"});
    CHECK(t.rows[0][0] == 1.0);
    CHECK(t.rows[1][0] == 2.5e-10);

    std::ofstream bad(tmp / "bad.csv");
    bad << "x,y\n1,notanumber\n";
    bad.close();
    CHECK_THROWS_AS(read_csv(tmp / "bad.csv"), std::runtime_error);
}

TEST_CASE("cli: missing config exits 2 naming the path") {
    CHECK(run_cli("train --config /nonexistent/nope.json") == 2);
}

TEST_CASE("cli: train determinism produces byte-identical checkpoints") {
    TempDir tmp;
    write_text_file(tmp / "cfg.json", quick_config_json("gaussian1d", "rnce"));
    CHECK(run_cli("train --config " + (tmp / "cfg.json") + " --out " + (tmp / "r1")) == 0);
    CHECK(run_cli("train --config " + (tmp / "cfg.json") + " --out " + (tmp / "r2")) == 0);
    std::string a = read_text_file(tmp / "r1/checkpoint.ckpt");
    std::string b = read_text_file(tmp / "r2/checkpoint.ckpt");
    CHECK(a == b);
    CHECK(!a.empty());
    // resolved snapshot reproduces outputs bitwise
    CHECK(run_cli("train --config " + (tmp / "r1/resolved_config.json") + " --out " +
                  (tmp / "r3")) == 0);
    CHECK(read_text_file(tmp / "r3/checkpoint.ckpt") == a);
}

TEST_CASE("cli: sample n=0 emits an empty csv with header; seeds reproduce bytes") {
    TempDir tmp;
    write_text_file(tmp / "cfg.json", quick_config_json("gaussian1d", "rnce"));
    REQUIRE(run_cli("train --config " + (tmp / "cfg.json") + " --out " + (tmp / "run")) == 0);
    std::string ckpt = tmp / "run/checkpoint.ckpt";

    CHECK(run_cli("sample --ckpt " + ckpt + " --n 0 --sampler flow --out " + (tmp / "s0.csv")) ==
          0);
    CsvTable empty = read_csv(tmp / "s0.csv");
    CHECK(empty.rows.empty());
    CHECK(!empty.header.empty());

    CHECK(run_cli("sample --ckpt " + ckpt + " --n 8 --sampler two_stage --seed 9 --out " +
                  (tmp / "s1.csv")) == 0);
    CHECK(run_cli("sample --ckpt " + ckpt + " --n 8 --sampler two_stage --seed 9 --out " +
                  (tmp / "s2.csv")) == 0);
    CHECK(read_text_file(tmp / "s1.csv") == read_text_file(tmp / "s2.csv"));

    // best-of keeps n rows and scores
    CHECK(run_cli("sample --ckpt " + ckpt + " --n 6 --sampler two_stage --best-of 4 --out " +
                  (tmp / "s3.csv")) == 0);
    CsvTable best = read_csv(tmp / "s3.csv");
    CHECK(best.rows.size() == 6);
    CHECK(best.col("score") < best.header.size());
}

TEST_CASE("cli: sampler/method mismatch exits 2") {
    TempDir tmp;
    write_text_file(tmp / "cfg.json", quick_config_json("gaussian1d", "rnce"));
    REQUIRE(run_cli("train --config " + (tmp / "cfg.json") + " --out " + (tmp / "run")) == 0);
    std::string ckpt = tmp / "run/checkpoint.ckpt";
    CHECK(run_cli("sample --ckpt " + ckpt + " --n 4 --sampler pflow --out " + (tmp / "x.csv")) ==
          2);
    CHECK(run_cli("sample --ckpt " + ckpt + " --n 4 --sampler three_stage --out " +
                  (tmp / "y.csv")) == 2);
}

TEST_CASE("cli: eval-bc of identical files is ~1, malformed csv exits 2") {
    TempDir tmp;
    // synthetic 2-column samples
    std::vector<std::vector<double>> rows;
    Rng rng(3);
    for (int i = 0; i < 2000; ++i) rows.push_back({rng.normal(), rng.normal()});
    write_csv(tmp / "p.csv", {"y1", "y2"}, rows);
    CHECK(run_cli("eval-bc --p-samples " + (tmp / "p.csv") + " --q-samples " + (tmp / "p.csv") +
                  " --grid-n 128 --out " + (tmp / "bc.json")) == 0);
    json rep = json::parse(read_text_file(tmp / "bc.json"));
    CHECK(rep["value"].get<double>() >= 0.999);
    // grid override honored in metadata
    CHECK(rep["grid"]["n"] == 128);

    write_text_file(tmp / "bad.csv", "y1,y2\noops,1\n");
    CHECK(run_cli("eval-bc --p-samples " + (tmp / "bad.csv") + " --q-samples " +
                  (tmp / "p.csv") + " --out " + (tmp / "bc2.json")) == 3);
}

TEST_CASE("cli: landscape emits per-K csvs plus a combined one") {
    TempDir tmp;
    CHECK(run_cli("landscape --k 5 --k 20 --mu-step 0.25 --gh-order 32 --pool 20000 --out " +
                  (tmp / "land")) == 0);
    CHECK(fs::exists(tmp / "land/landscape_k5.csv"));
    CHECK(fs::exists(tmp / "land/landscape_k20.csv"));
    CsvTable combined = read_csv(tmp / "land/landscape_combined.csv");
    CHECK(combined.header.size() == 2 + 4);  // mu, mle, then (rnce, ibc) per K
    // all objectives shifted so the maximum is zero
    for (std::size_t c = 1; c < combined.header.size(); ++c) {
        double mx = -1e30;
        for (const auto& row : combined.rows) mx = std::max(mx, row[c]);
        CHECK(mx == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("cli: asymptotics report shape") {
    TempDir tmp;
    CHECK(run_cli("asymptotics --K 9 --n 300 --reps 40 --seed 1 --out " + (tmp / "as.json")) ==
          0);
    json rep = json::parse(read_text_file(tmp / "as.json"));
    CHECK(rep["config"]["K"] == 9);
    CHECK(rep["config"]["replications"] == 40);
    CHECK(rep.contains("value"));
    CHECK(rep.contains("mean_n_kl"));
}

TEST_CASE("cli: logprob-check passes") {
    TempDir tmp;
    CHECK(run_cli("logprob-check --out " + (tmp / "lp.json")) == 0);
    json rep = json::parse(read_text_file(tmp / "lp.json"));
    CHECK(rep["pass"].get<bool>());
    CHECK(rep["value"].get<double>() < 1e-6);
}

TEST_CASE("experiment reconstruction from checkpoint matches in-memory models") {
    TempDir tmp;
    ExperimentConfig cfg = ExperimentConfig::from_json(quick_config_json("gaussian1d", "rnce"));
    cfg.out_dir = tmp / "run";
    Experiment trained = run_training(cfg);
    Experiment loaded = load_experiment(tmp / "run/checkpoint.ckpt");
    CHECK(loaded.theta.flatten() == trained.theta.flatten());
    CHECK(loaded.xi.flatten() == trained.xi.flatten());
    CHECK(loaded.cfg.method == "rnce");

    SampleRequest req;
    req.sampler = "two_stage";
    req.n = 4;
    req.seed = 3;
    SampleResult a = draw_samples(trained, req);
    SampleResult b = draw_samples(loaded, req);
    CHECK(a.samples.data == b.samples.data);
}
