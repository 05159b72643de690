#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "rfm/toydata.hpp"

// Drives the rfmlab binary (path injected as RFMLAB_PATH by the build) the
// way a user would: through a shell, checking exit codes, artifacts, and
// the provenance sidecars.
using namespace rfm;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr interleaved
};

CmdResult run_cli(const std::string& args, const std::string& env = "") {
    const std::string cmd = (env.empty() ? "" : env + " ") + std::string(RFMLAB_PATH) + " " +
                            args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CmdResult res;
    char buf[4096];
    while (fgets(buf, sizeof buf, pipe) != nullptr) res.output += buf;
    const int status = pclose(pipe);
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return res;
}

const fs::path& work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "rfmlab_cli_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string wpath(const std::string& name) { return (work_dir() / name).string(); }

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    REQUIRE(out.good());
    out << text;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool same_bytes(const std::string& a, const std::string& b) { return slurp(a) == slurp(b); }

nlohmann::json sidecar(const std::string& artifact) {
    return nlohmann::json::parse(slurp(artifact + ".run.json"));
}

// the id convention the sidecars promise: fnv1a-64 of the artifact bytes
std::string fnv_id(const std::string& path) {
    const std::string bytes = slurp(path);
    uint64_t h = 1469598103934665603ull;
    for (const char ch : bytes) {
        h ^= static_cast<unsigned char>(ch);
        h *= 1099511628211ull;
    }
    char out[17];
    std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
    return out;
}

std::string gauss_task_json() {
    return R"({"kind": "gauss", "num_classes": 3, "dim": 2, "sigma": 0.05,)"
           R"( "samples_per_class": 20, "seed": 5})";
}

// a config tiny enough that every pipeline stage finishes in seconds
std::string tiny_config(const std::string& out_dir, int train_steps = 40,
                        const std::string& extra = "") {
    return std::string("{\n") +
           "  \"task\": " + gauss_task_json() + ",\n" +
           R"(  "estimator": {"hidden_dim": 16, "layers": 1, "heads": 2, "ffn_dim": 16},)" + "\n" +
           R"(  "train": {"batch_size": 8, "steps": )" + std::to_string(train_steps) +
           R"(, "lr": 0.002},)" + "\n" +
           R"(  "reflow": {"steps": 5, "train_steps": 20, "distill_steps": 20},)" + "\n" +
           R"(  "eval": {"samples_per_class": 8, "euler_steps": [1, 5],)" +
           R"( "include_dopri5": false, "gamma_grid": [1.0, 2.0]},)" + "\n" + extra +
           R"(  "seed": 11,)" + "\n" +
           "  \"out_dir\": \"" + out_dir + "\"\n}\n";
}

std::vector<std::string> csv_lines(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) lines.push_back(line);
    return lines;
}

// the pipeline run shared by the happy-path cases; built once
struct Pipeline {
    std::string config;
    std::string dir;
};

const Pipeline& pipeline() {
    static const Pipeline p = [] {
        Pipeline pl;
        pl.dir = wpath("run");
        pl.config = wpath("run.json");
        write_file(pl.config, tiny_config(pl.dir));
        REQUIRE(run_cli("train --config " + pl.config).exit_code == 0);
        REQUIRE(run_cli("reflow-gen --config " + pl.config).exit_code == 0);
        REQUIRE(run_cli("reflow-train --config " + pl.config).exit_code == 0);
        REQUIRE(run_cli("distill --config " + pl.config).exit_code == 0);
        return pl;
    }();
    return p;
}

}  // namespace

TEST_CASE("help exits 0 and lists every subcommand") {
    const CmdResult r = run_cli("--help");
    CHECK(r.exit_code == 0);
    for (const char* name :
         {"gen-data", "train", "reflow-gen", "reflow-train", "distill", "sample", "eval", "bench"})
        CHECK(r.output.find(name) != std::string::npos);
}

TEST_CASE("gen-data writes the dataset, its sidecar, and reruns byte-identically") {
    write_file(wpath("task.json"), gauss_task_json());
    const CmdResult r =
        run_cli("gen-data --spec " + wpath("task.json") + " --out " + wpath("data/a.rfds"));
    CHECK(r.exit_code == 0);
    REQUIRE(fs::exists(wpath("data/a.rfds")));

    const auto items = load_dataset(wpath("data/a.rfds"));
    CHECK(items.size() == 60);

    const nlohmann::json side = sidecar(wpath("data/a.rfds"));
    CHECK(side.at("stage") == "dataset");
    CHECK(side.at("extras").at("count") == 60);
    CHECK(side.at("id") == fnv_id(wpath("data/a.rfds")));
    CHECK(side.at("config").at("kind") == "gauss");
    CHECK(!side.at("version").get<std::string>().empty());

    REQUIRE(run_cli("gen-data --spec " + wpath("task.json") + " --out " + wpath("data/b.rfds"))
                .exit_code == 0);
    CHECK(same_bytes(wpath("data/a.rfds"), wpath("data/b.rfds")));
}

TEST_CASE("malformed spec JSON exits 2 and points at the parse position") {
    write_file(wpath("bad.json"), "{\"kind\": \"gauss\", bad\n");
    const CmdResult r =
        run_cli("gen-data --spec " + wpath("bad.json") + " --out " + wpath("bad.rfds"));
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("line") != std::string::npos);
    CHECK(r.output.find("column") != std::string::npos);
}

TEST_CASE("unwritable output path exits 3") {
    write_file(wpath("task2.json"), gauss_task_json());
    write_file(wpath("blocker"), "");
    const CmdResult r = run_cli("gen-data --spec " + wpath("task2.json") + " --out " +
                                wpath("blocker/sub/x.rfds"));
    CHECK(r.exit_code == 3);
}

TEST_CASE("train writes checkpoint, loss curve, and a sidecar that improves on the start") {
    const Pipeline& p = pipeline();
    REQUIRE(fs::exists(p.dir + "/stage1.rfck"));
    REQUIRE(fs::exists(p.dir + "/stage1_loss.csv"));

    const nlohmann::json side = sidecar(p.dir + "/stage1.rfck");
    CHECK(side.at("stage") == "stage1");
    CHECK(side.at("parent") == "");
    CHECK(side.at("id") == fnv_id(p.dir + "/stage1.rfck"));
    CHECK(side.at("extras").at("final_loss").get<double>() <
          side.at("extras").at("initial_loss").get<double>());
    // the stored config is fully resolved: estimator dims come from the task
    CHECK(side.at("config").at("estimator").at("latent_dim") == 2);
    CHECK(side.at("config").at("estimator").at("cond_dim") == 3);
    CHECK(side.at("config").at("train").at("steps") == 40);

    const auto lines = csv_lines(p.dir + "/stage1_loss.csv");
    CHECK(lines.at(0) == "step,loss,wall_ms");
    CHECK(lines.size() == 41);  // header + one row per step
}

TEST_CASE("provenance ids chain stage-1 -> reflow -> distill") {
    const Pipeline& p = pipeline();
    const nlohmann::json s1 = sidecar(p.dir + "/stage1.rfck");
    const nlohmann::json store = sidecar(p.dir + "/reflow_data.rftr");
    const nlohmann::json rf = sidecar(p.dir + "/reflow.rfck");
    const nlohmann::json di = sidecar(p.dir + "/distill.rfck");
    CHECK(store.at("parent") == s1.at("id"));
    CHECK(rf.at("parent") == s1.at("id"));
    CHECK(di.at("parent") == rf.at("id"));
    CHECK(rf.at("extras").at("null_drift").is_number());
    CHECK(std::isfinite(rf.at("extras").at("null_drift").get<double>()));
    CHECK(fs::exists(p.dir + "/reflow_loss.csv"));
    CHECK(fs::exists(p.dir + "/distill_loss.csv"));
}

TEST_CASE("reflow-gen meta defaults to 25 Euler steps at gamma 4.5") {
    const std::string dir = wpath("run_defaults");
    const std::string cfg = wpath("run_defaults.json");
    // reflow section omitted entirely; only train is shrunk for speed
    write_file(cfg, std::string("{\n") + "  \"task\": " + gauss_task_json() + ",\n" +
                        R"(  "estimator": {"hidden_dim": 16, "layers": 1, "heads": 2, "ffn_dim": 16},)" +
                        "\n" + R"(  "train": {"batch_size": 8, "steps": 10, "lr": 0.002},)" + "\n" +
                        R"(  "seed": 11,)" + "\n" + "  \"out_dir\": \"" + dir + "\"\n}\n");
    REQUIRE(run_cli("train --config " + cfg).exit_code == 0);
    REQUIRE(run_cli("reflow-gen --config " + cfg).exit_code == 0);
    const nlohmann::json meta = nlohmann::json::parse(slurp(dir + "/reflow_data.rftr.json"));
    CHECK(meta.at("solver") == "euler");
    CHECK(meta.at("steps") == 25);
    CHECK(meta.at("gamma") == doctest::Approx(4.5));
    CHECK(meta.at("source") == fnv_id(dir + "/stage1.rfck"));
}

TEST_CASE("missing prerequisites exit 4 and name the expected artifact") {
    const std::string cfg = wpath("empty_run.json");
    write_file(cfg, tiny_config(wpath("empty_run")));
    const CmdResult rg = run_cli("reflow-gen --config " + cfg);
    CHECK(rg.exit_code == 4);
    CHECK(rg.output.find("stage1.rfck") != std::string::npos);
    CHECK(rg.output.find("rfmlab train") != std::string::npos);

    const CmdResult di = run_cli("distill --config " + cfg);
    CHECK(di.exit_code == 4);
    CHECK(di.output.find("reflow.rfck") != std::string::npos);
}

TEST_CASE("a reflow store from a stale checkpoint is rejected with exit 4") {
    const Pipeline& p = pipeline();
    const std::string dir = wpath("run_stale");
    fs::create_directories(dir);
    for (const char* name : {"stage1.rfck", "reflow_data.rftr", "reflow_data.rftr.json"})
        fs::copy_file(p.dir + "/" + std::string(name), dir + "/" + name,
                      fs::copy_options::overwrite_existing);
    // retrain stage 1 in place with one extra step: new bytes, new id
    const std::string cfg = wpath("run_stale.json");
    write_file(cfg, tiny_config(dir, 41));
    REQUIRE(run_cli("train --config " + cfg).exit_code == 0);
    const CmdResult r = run_cli("reflow-train --config " + cfg);
    CHECK(r.exit_code == 4);
    CHECK(r.output.find("generated from checkpoint id") != std::string::npos);
}

TEST_CASE("unknown config keys exit 2") {
    const std::string cfg = wpath("unknown.json");
    write_file(cfg, R"({"task": {"kind": "gauss"}, "turbo": true})");
    const CmdResult r = run_cli("train --config " + cfg);
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("turbo") != std::string::npos);
}

TEST_CASE("estimator dims that contradict the task exit 5") {
    const std::string cfg = wpath("conflict.json");
    write_file(cfg, R"({"task": {"kind": "gauss"}, "estimator": {"latent_dim": 7},)"
                    R"( "out_dir": ")" + wpath("conflict") + R"("})");
    const CmdResult r = run_cli("train --config " + cfg);
    CHECK(r.exit_code == 5);
    CHECK(r.output.find("latent_dim") != std::string::npos);
}

TEST_CASE("sample counts field evaluations: one per step unguided, two with guidance") {
    const Pipeline& p = pipeline();
    // stage-1 checkpoints default to the configured guidance (gamma 4.5)
    REQUIRE(run_cli("sample --ckpt " + p.dir + "/stage1.rfck --steps 1 --n 4 --out " +
                    wpath("ev_guided")).exit_code == 0);
    CHECK(sidecar(wpath("ev_guided/samples.rfds")).at("extras").at("field_evals_per_sample") ==
          doctest::Approx(2.0));
    // distilled checkpoints default to the gamma their store was generated
    // with (4.5 here): still two evaluations per step
    REQUIRE(run_cli("sample --ckpt " + p.dir + "/distill.rfck --steps 1 --n 4 --out " +
                    wpath("ev_store")).exit_code == 0);
    const nlohmann::json guided = sidecar(wpath("ev_store/samples.rfds"));
    CHECK(guided.at("extras").at("field_evals_per_sample") == doctest::Approx(2.0));
    CHECK(guided.at("extras").at("gamma") == doctest::Approx(4.5));
    CHECK(guided.at("parent") == fnv_id(p.dir + "/distill.rfck"));
    // an explicit --gamma 1 collapses to a single evaluation per step
    REQUIRE(run_cli("sample --ckpt " + p.dir + "/distill.rfck --steps 1 --n 4 --gamma 1 --out " +
                    wpath("ev_plain")).exit_code == 0);
    const nlohmann::json side = sidecar(wpath("ev_plain/samples.rfds"));
    CHECK(side.at("extras").at("field_evals_per_sample") == doctest::Approx(1.0));
    CHECK(side.at("extras").at("gamma") == doctest::Approx(1.0));
}

TEST_CASE("sampling with gamma 1 is byte-identical to a guidance-disabled config") {
    const Pipeline& p = pipeline();
    const std::string dir0 = wpath("run_unguided");
    const std::string cfg0 = wpath("run_unguided.json");
    write_file(cfg0, tiny_config(dir0, 40, R"(  "guidance": {"enabled": false},)" + std::string("\n")));
    REQUIRE(run_cli("train --config " + cfg0).exit_code == 0);
    // training never consults guidance, so the twin checkpoint matches
    REQUIRE(same_bytes(dir0 + "/stage1.rfck", p.dir + "/stage1.rfck"));

    REQUIRE(run_cli("sample --ckpt " + dir0 + "/stage1.rfck --steps 3 --n 8 --out " +
                    wpath("s_unguided")).exit_code == 0);
    REQUIRE(run_cli("sample --ckpt " + p.dir + "/stage1.rfck --steps 3 --n 8 --gamma 1 --out " +
                    wpath("s_gamma1")).exit_code == 0);
    CHECK(same_bytes(wpath("s_unguided/samples.rfds"), wpath("s_gamma1/samples.rfds")));
}

TEST_CASE("sample rejects --steps together with --dopri5") {
    const Pipeline& p = pipeline();
    const CmdResult r =
        run_cli("sample --ckpt " + p.dir + "/stage1.rfck --steps 3 --dopri5 --n 2");
    CHECK(r.exit_code == 2);
}

TEST_CASE("sample records trajectories and a 2D scatter on the mixture task") {
    const Pipeline& p = pipeline();
    REQUIRE(run_cli("sample --ckpt " + p.dir + "/stage1.rfck --steps 4 --n 10 --trajectory --out " +
                    wpath("s_traj")).exit_code == 0);
    CHECK(fs::exists(wpath("s_traj/scatter.svg")));
    CHECK(fs::exists(wpath("s_traj/trajectories.svg")));
    CHECK(fs::exists(wpath("s_traj/traj0.csv")));
    CHECK(fs::exists(wpath("s_traj/traj7.csv")));
    CHECK(!fs::exists(wpath("s_traj/traj8.csv")));  // capped at 8
    const auto lines = csv_lines(wpath("s_traj/traj0.csv"));
    CHECK(lines.size() == 6);  // header + 4 interval starts + final state
}

TEST_CASE("sample on a missing checkpoint or missing sidecar exits 4") {
    CHECK(run_cli("sample --ckpt " + wpath("nope.rfck") + " --n 1").exit_code == 4);
    const Pipeline& p = pipeline();
    fs::create_directories(wpath("bare"));
    fs::copy_file(p.dir + "/stage1.rfck", wpath("bare/stage1.rfck"),
                  fs::copy_options::overwrite_existing);
    const CmdResult r = run_cli("sample --ckpt " + wpath("bare/stage1.rfck") + " --n 1");
    CHECK(r.exit_code == 4);
    CHECK(r.output.find("sidecar") != std::string::npos);
}

TEST_CASE("eval writes one row per grid point and reruns bit-identically off the clock") {
    const Pipeline& p = pipeline();
    REQUIRE(run_cli("eval --ckpt " + p.dir + "/stage1.rfck --report " + wpath("eval1.csv"))
                .exit_code == 0);
    const auto lines = csv_lines(wpath("eval1.csv"));
    REQUIRE(lines.size() == 5);
    CHECK(lines[0] == "point,w2,alignment,chance,field_evals,wall_ms");
    CHECK(lines[1].rfind("euler-1,", 0) == 0);
    CHECK(lines[2].rfind("euler-5,", 0) == 0);
    CHECK(lines[3].rfind("gamma-1,", 0) == 0);
    CHECK(lines[4].rfind("gamma-2,", 0) == 0);

    REQUIRE(run_cli("eval --ckpt " + p.dir + "/stage1.rfck --report " + wpath("eval2.csv"))
                .exit_code == 0);
    const auto rerun = csv_lines(wpath("eval2.csv"));
    REQUIRE(rerun.size() == lines.size());
    for (size_t i = 0; i < lines.size(); ++i) {
        // every column except the trailing wall_ms must match exactly
        const auto cut = [](const std::string& s) { return s.substr(0, s.rfind(',')); };
        CHECK(cut(rerun[i]) == cut(lines[i]));
    }
}

TEST_CASE("bench reports the solver grid and the 25-to-1 step cost ratio") {
    const Pipeline& p = pipeline();
    REQUIRE(run_cli("bench --ckpt " + p.dir + "/distill.rfck --report " + wpath("bench.csv"))
                .exit_code == 0);
    const auto lines = csv_lines(wpath("bench.csv"));
    REQUIRE(lines.size() == 6);
    CHECK(lines[0] == "point,wall_ms,field_evals");
    CHECK(lines[1].rfind("euler-1,", 0) == 0);
    CHECK(lines[2].rfind("euler-5,", 0) == 0);
    CHECK(lines[3].rfind("euler-25,", 0) == 0);
    CHECK(lines[4].rfind("dopri5,", 0) == 0);
    REQUIRE(lines[5].rfind("ratio-25-over-1,", 0) == 0);
    const double ratio = std::stod(lines[5].substr(lines[5].find(',') + 1));
    CHECK(ratio > 1.0);
}

TEST_CASE("RF_THREADS changes the worker pool but never the bytes") {
    const Pipeline& p = pipeline();
    REQUIRE(run_cli("sample --ckpt " + p.dir + "/stage1.rfck --steps 3 --n 6 --out " +
                    wpath("thr1"), "RF_THREADS=1").exit_code == 0);
    REQUIRE(run_cli("sample --ckpt " + p.dir + "/stage1.rfck --steps 3 --n 6 --out " +
                    wpath("thr2"), "RF_THREADS=2").exit_code == 0);
    CHECK(same_bytes(wpath("thr1/samples.rfds"), wpath("thr2/samples.rfds")));

    const CmdResult bad = run_cli("gen-data --spec x --out y", "RF_THREADS=bogus");
    CHECK(bad.exit_code == 2);
    CHECK(bad.output.find("RF_THREADS") != std::string::npos);
}
