#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rfm/checkpoint.hpp"
#include "rfm/errors.hpp"
#include "rfm/kernels.hpp"
#include "rfm/metrics.hpp"
#include "rfm/rectify.hpp"
#include "rfm/rng.hpp"
#include "rfm/runconfig.hpp"
#include "rfm/sampler.hpp"
#include "rfm/svg.hpp"
#include "rfm/toydata.hpp"
#include "rfm/training.hpp"
#include "rfm/version.hpp"

namespace fs = std::filesystem;
using namespace rfm;

namespace {

// ------------------------------------------------------------ provenance --

uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for hashing: " + path);
    uint64_t h = 1469598103934665603ull;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf), in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    }
    return h;
}

// content hash of an artifact file, used as its provenance id
std::string artifact_id(const std::string& path) {
    std::ostringstream out;
    out << std::hex << std::setfill('0') << std::setw(16) << fnv1a64_file(path);
    return out.str();
}

// Every artifact X gets X.run.json next to it: the artifact's content-hash
// id, the pipeline stage, the parent artifact's id (provenance chain), the
// binary version, and the resolved config that produced it.
std::string write_sidecar(const std::string& artifact, const std::string& stage,
                          const std::string& parent, const nlohmann::json& config,
                          const nlohmann::json& extras) {
    const std::string id = artifact_id(artifact);
    nlohmann::json j;
    j["id"] = id;
    j["stage"] = stage;
    j["parent"] = parent;
    j["version"] = kVersion;
    j["config"] = config;
    j["extras"] = extras;
    const std::string path = artifact + ".run.json";
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write sidecar: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw IoError("short write: " + path);
    return id;
}

nlohmann::json read_sidecar(const std::string& artifact, const std::string& producer) {
    const std::string path = artifact + ".run.json";
    std::ifstream in(path);
    if (!in)
        throw MissingPrerequisite("missing sidecar " + path + "; produce the checkpoint with `rfmlab " +
                                  producer + "` first");
    std::stringstream ss;
    ss << in.rdbuf();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("sidecar " + path + ": " + e.what());
    }
    if (!j.is_object()) throw FormatError("sidecar " + path + ": expected a JSON object");
    return j;
}

// --------------------------------------------------------------- plumbing --

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void ensure_dir(const fs::path& dir) {
    if (dir.empty()) return;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
    if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
}

void require_file(const std::string& path, const std::string& what, const std::string& producer) {
    if (!fs::exists(path))
        throw MissingPrerequisite(what + " not found at " + path + "; run `rfmlab " + producer +
                                  "` first");
}

RunConfig load_run_config(const std::string& path) {
    return run_config_from_json(slurp(path));
}

nlohmann::json config_json(const RunConfig& cfg) {
    return nlohmann::json::parse(run_config_to_json(cfg));
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
    return (fs::path(cfg.out_dir) / name).string();
}

Checkpoint load_matching_checkpoint(const std::string& path, const EstimatorConfig& want) {
    Checkpoint ck = load_checkpoint(path);
    if (!(ck.config == want))
        throw ShapeError("checkpoint " + path +
                         " carries an estimator config that does not match this run config");
    return ck;
}

// sample i cycles classes fastest on the mixture task so small draws cover
// every class; the event task cycles items in dataset order
ConditionSeq condition_for(const std::vector<TrainItem>& data, const TaskSpec& task, long i) {
    if (task.kind == TaskSpec::Kind::Gauss) {
        const long k = i % task.gauss.num_classes;
        const long r = (i / task.gauss.num_classes) % task.gauss.samples_per_class;
        return data.at(static_cast<size_t>(k * task.gauss.samples_per_class + r)).c;
    }
    return data.at(static_cast<size_t>(i) % data.size()).c;
}

Tensor noise_for(const TaskSpec& task, uint64_t seed, long i) {
    Rng rng = Rng(seed).fork(Stream::Eval, static_cast<uint64_t>(i));
    Tensor x0({task.latent_len(), task.latent_dim()});
    rng.fill_normal(x0.data(), x0.size());
    return x0;
}

std::string point_label(const SolverConfig& sc) {
    return sc.kind == SolverKind::Euler ? "euler-" + std::to_string(sc.steps) : "dopri5";
}

// ------------------------------------------------------------- subcommands --

void cmd_gen_data(const std::string& spec_path, const std::string& out) {
    const TaskSpec task = task_spec_from_json(slurp(spec_path));
    const std::vector<TrainItem> items = generate(task);
    ensure_dir(fs::path(out).parent_path());
    save_dataset(out, items);
    const std::string id =
        write_sidecar(out, "dataset", "", nlohmann::json::parse(task_spec_to_json(task)),
                      {{"count", items.size()}});
    std::cout << "wrote " << items.size() << " items to " << out << " (id " << id << ")\n";
}

void cmd_train(const std::string& config_path) {
    RunConfig cfg = load_run_config(config_path);
    ensure_dir(cfg.out_dir);
    const auto data = generate(cfg.task);
    LayerParams params = init_estimator(cfg.estimator, cfg.seed);
    const std::string ckpt = out_path(cfg, "stage1.rfck");
    const TrainResult r = train(params, cfg.estimator, data, cfg.train, out_path(cfg, "stage1_loss.csv"));
    save_checkpoint(ckpt, cfg.estimator, params);
    const std::string id = write_sidecar(ckpt, "stage1", "", config_json(cfg),
                                         {{"initial_loss", r.initial_loss},
                                          {"final_loss", r.final_loss},
                                          {"steps", cfg.train.steps},
                                          {"items", data.size()},
                                          {"loss_csv", "stage1_loss.csv"}});
    std::cout << "stage-1: " << cfg.train.steps << " steps on " << data.size() << " items, loss "
              << r.initial_loss << " -> " << r.final_loss << "\n";
    std::cout << "wrote " << ckpt << " (id " << id << ")\n";
}

void cmd_reflow_gen(const std::string& config_path) {
    RunConfig cfg = load_run_config(config_path);
    const std::string stage1 = out_path(cfg, "stage1.rfck");
    require_file(stage1, "stage-1 checkpoint", "train");
    const Checkpoint ck = load_matching_checkpoint(stage1, cfg.estimator);
    const std::string source = artifact_id(stage1);

    const auto data = generate(cfg.task);
    std::vector<ConditionSeq> conditions;
    conditions.reserve(data.size());
    for (const auto& item : data) conditions.push_back(item.c);

    SolverConfig sc = cfg.solver;
    sc.kind = cfg.reflow.solver;
    sc.steps = cfg.reflow.steps;
    GuidanceConfig gc{cfg.reflow.gamma, true};

    const ReflowGenResult res =
        generate_reflow_data(ck.params, ck.config, conditions, sc, gc, cfg.seed, source);
    const std::string store = out_path(cfg, "reflow_data.rftr");
    save_triplets(store, res.triplets, res.meta);
    const std::string id = write_sidecar(store, "reflow-data", source, config_json(cfg),
                                         {{"count", res.meta.count},
                                          {"skipped", res.meta.skipped},
                                          {"solver", solver_name(sc.kind)},
                                          {"gamma", gc.gamma}});
    std::cout << "reflow data: " << res.meta.count << " triplets via " << point_label(sc)
              << ", gamma " << gc.gamma << " (" << res.meta.skipped << " skipped)\n";
    std::cout << "wrote " << store << " (id " << id << ")\n";
}

// loads the triplet store and checks it was generated by the checkpoint at
// source_path (provenance ids must chain)
std::pair<std::vector<ReflowTriplet>, ReflowMeta> load_store_for(const std::string& store,
                                                                 const std::string& source_path) {
    auto loaded = load_triplets(store);
    const std::string want = artifact_id(source_path);
    if (loaded.second.source != want)
        throw MissingPrerequisite("reflow store " + store + " was generated from checkpoint id " +
                                  loaded.second.source + " but " + source_path + " has id " + want +
                                  "; rerun `rfmlab reflow-gen`");
    if (loaded.first.empty())
        throw MissingPrerequisite("reflow store " + store +
                                  " holds no triplets (all solves skipped); regenerate it");
    return loaded;
}

void cmd_reflow_train(const std::string& config_path) {
    RunConfig cfg = load_run_config(config_path);
    const std::string stage1 = out_path(cfg, "stage1.rfck");
    const std::string store = out_path(cfg, "reflow_data.rftr");
    require_file(stage1, "stage-1 checkpoint", "train");
    require_file(store, "reflow triplet store", "reflow-gen");
    const Checkpoint ck = load_matching_checkpoint(stage1, cfg.estimator);
    auto [triplets, meta] = load_store_for(store, stage1);

    TrainConfig tc = cfg.train;
    tc.steps = cfg.reflow.train_steps;
    tc.lr = cfg.reflow.lr;
    LayerParams params = ck.params;  // continue from stage 1
    const ReflowTrainResult r = reflow_train(params, cfg.estimator, triplets, tc, meta.gamma,
                                             out_path(cfg, "reflow_loss.csv"));

    const std::string ckpt = out_path(cfg, "reflow.rfck");
    save_checkpoint(ckpt, cfg.estimator, params);
    const std::string id = write_sidecar(ckpt, "reflow", artifact_id(stage1), config_json(cfg),
                                         {{"initial_loss", r.train.initial_loss},
                                          {"final_loss", r.train.final_loss},
                                          {"steps", tc.steps},
                                          {"gamma", meta.gamma},
                                          {"null_drift", r.null_drift},
                                          {"data_id", artifact_id(store)},
                                          {"loss_csv", "reflow_loss.csv"}});
    std::cout << "reflow: " << tc.steps << " steps on " << triplets.size() << " triplets, loss "
              << r.train.initial_loss << " -> " << r.train.final_loss << ", null drift "
              << r.null_drift << "\n";
    std::cout << "wrote " << ckpt << " (id " << id << ")\n";
}

void cmd_distill(const std::string& config_path) {
    RunConfig cfg = load_run_config(config_path);
    const std::string reflow_ckpt = out_path(cfg, "reflow.rfck");
    const std::string store = out_path(cfg, "reflow_data.rftr");
    require_file(reflow_ckpt, "reflow checkpoint", "reflow-train");
    require_file(store, "reflow triplet store", "reflow-gen");
    const Checkpoint ck = load_matching_checkpoint(reflow_ckpt, cfg.estimator);
    // the store chains to the stage-1 checkpoint; distillation reuses it
    // unchanged, so only its presence and integrity are checked here
    auto [triplets, meta] = load_triplets(store);
    if (triplets.empty())
        throw MissingPrerequisite("reflow store " + store +
                                  " holds no triplets (all solves skipped); regenerate it");

    TrainConfig tc = cfg.train;
    tc.steps = cfg.reflow.distill_steps;
    tc.lr = cfg.reflow.lr;
    LayerParams params = ck.params;  // continue from the reflowed model
    const ReflowTrainResult r = distill_train(params, cfg.estimator, triplets, tc, meta.gamma,
                                              out_path(cfg, "distill_loss.csv"));

    const std::string ckpt = out_path(cfg, "distill.rfck");
    save_checkpoint(ckpt, cfg.estimator, params);
    const std::string id = write_sidecar(ckpt, "distill", artifact_id(reflow_ckpt), config_json(cfg),
                                         {{"initial_loss", r.train.initial_loss},
                                          {"final_loss", r.train.final_loss},
                                          {"steps", tc.steps},
                                          {"gamma", meta.gamma},
                                          {"null_drift", r.null_drift},
                                          {"data_id", artifact_id(store)},
                                          {"loss_csv", "distill_loss.csv"}});
    std::cout << "distill: " << tc.steps << " steps on " << triplets.size() << " triplets, loss "
              << r.train.initial_loss << " -> " << r.train.final_loss << "\n";
    std::cout << "wrote " << ckpt << " (id " << id << ")\n";
}

// the first stage defaults to its configured guidance; reflowed and
// distilled models regress the guided composition baked into their store
// (only that combination of the branches is pinned by the objective), so
// they default to the gamma recorded when the store was generated
double default_gamma(const std::string& stage, const nlohmann::json& side,
                     const RunConfig& cfg) {
    if (stage == "stage1") return cfg.guidance.effective_gamma();
    return side.value("gamma", cfg.reflow.gamma);
}

struct SampleArgs {
    std::string ckpt;
    int steps = 0;        // 0: take the solver from the config
    bool dopri5 = false;
    long n = 64;
    double gamma = 0.0;
    bool gamma_set = false;
    bool trajectory = false;
    std::string out;
};

void cmd_sample(const SampleArgs& a) {
    require_file(a.ckpt, "checkpoint", "train");
    const nlohmann::json side = read_sidecar(a.ckpt, "train");
    const std::string stage = side.value("stage", "stage1");
    if (!side.contains("config"))
        throw FormatError("sidecar " + a.ckpt + ".run.json carries no config");
    RunConfig cfg = run_config_from_json(side.at("config").dump());
    const Checkpoint ck = load_matching_checkpoint(a.ckpt, cfg.estimator);

    SolverConfig sc = cfg.solver;
    if (a.dopri5) sc.kind = SolverKind::Dopri5;
    else if (a.steps > 0) { sc.kind = SolverKind::Euler; sc.steps = a.steps; }
    sc.validate();
    GuidanceConfig gc;
    gc.gamma = a.gamma_set ? a.gamma : default_gamma(stage, side, cfg);
    gc.validate();

    const std::string dir =
        a.out.empty() ? (fs::path(a.ckpt).parent_path() / "samples").string() : a.out;
    ensure_dir(dir);

    const auto data = generate(cfg.task);
    std::vector<TrainItem> items;
    items.reserve(static_cast<size_t>(a.n));
    std::vector<Trajectory> trajs;
    long total_evals = 0;
    for (long i = 0; i < a.n; ++i) {
        const ConditionSeq c = condition_for(data, cfg.task, i);
        const Tensor x0 = noise_for(cfg.task, cfg.seed, i);
        FieldEval f = estimator_field(ck.params, ck.config, c);
        SolverConfig si = sc;
        si.record_trajectory = a.trajectory && static_cast<size_t>(i) < 8;
        SolveResult r = solve(f, x0, si, gc);
        total_evals += r.field_evals;
        if (si.record_trajectory) trajs.push_back(std::move(r.trajectory));
        items.push_back(TrainItem{LatentSeq{r.x1}, c});
    }

    const std::string out = (fs::path(dir) / "samples.rfds").string();
    save_dataset(out, items);
    const double per_sample = static_cast<double>(total_evals) / static_cast<double>(a.n);
    const std::string id = write_sidecar(out, "samples", artifact_id(a.ckpt), config_json(cfg),
                                         {{"n", a.n},
                                          {"solver", point_label(sc)},
                                          {"gamma", gc.gamma},
                                          {"source_stage", stage},
                                          {"field_evals", total_evals},
                                          {"field_evals_per_sample", per_sample}});

    // 2D mixture runs get a scatter against the training data
    if (cfg.task.kind == TaskSpec::Kind::Gauss && cfg.task.latent_dim() >= 2) {
        svg::PointGroup gen{"generated", "#4477cc", {}};
        svg::PointGroup ref{"data", "#cc7744", {}};
        for (const auto& it : items)
            gen.points.emplace_back(it.x1.values.value()[0], it.x1.values.value()[1]);
        for (long i = 0; i < a.n && i < static_cast<long>(data.size()); ++i) {
            const auto& v = data[static_cast<size_t>(i) % data.size()].x1.values;
            ref.points.emplace_back(v.value()[0], v.value()[1]);
        }
        svg::write_scatter((fs::path(dir) / "scatter.svg").string(), {ref, gen});
    }
    if (a.trajectory) {
        std::vector<std::vector<std::pair<double, double>>> lines;
        for (size_t i = 0; i < trajs.size(); ++i) {
            export_trajectory_csv(trajs[i],
                                  (fs::path(dir) / ("traj" + std::to_string(i) + ".csv")).string());
            if (cfg.task.kind == TaskSpec::Kind::Gauss && cfg.task.latent_dim() >= 2) {
                std::vector<std::pair<double, double>> line;
                for (const Tensor& s : trajs[i].states)
                    line.emplace_back(s.value()[0], s.value()[1]);
                lines.push_back(std::move(line));
            }
        }
        if (!lines.empty())
            svg::write_polylines((fs::path(dir) / "trajectories.svg").string(), lines);
    }

    std::cout << "sampled " << a.n << " items (" << point_label(sc) << ", gamma " << gc.gamma
              << "), " << per_sample << " field evals per sample\n";
    std::cout << "wrote " << out << " (id " << id << ")\n";
}

void cmd_eval(const std::string& ckpt, const std::string& report) {
    require_file(ckpt, "checkpoint", "train");
    const nlohmann::json side = read_sidecar(ckpt, "train");
    if (!side.contains("config"))
        throw FormatError("sidecar " + ckpt + ".run.json carries no config");
    RunConfig cfg = run_config_from_json(side.at("config").dump());
    const Checkpoint ck = load_matching_checkpoint(ckpt, cfg.estimator);

    const std::vector<EvalPoint> rows = eval_suite(ck.params, ck.config, cfg.task, cfg.eval);
    ensure_dir(fs::path(report).parent_path());
    write_eval_csv(rows, report);
    write_sidecar(report, "eval", artifact_id(ckpt), config_json(cfg), {{"rows", rows.size()}});

    std::cout << std::left << std::setw(12) << "point" << std::setw(12) << "w2" << std::setw(12)
              << "alignment" << std::setw(12) << "chance" << std::setw(12) << "field_evals"
              << "wall_ms\n";
    for (const auto& r : rows)
        std::cout << std::left << std::setw(12) << r.label << std::setw(12) << r.w2
                  << std::setw(12) << r.alignment << std::setw(12) << r.chance << std::setw(12)
                  << r.field_evals << r.wall_ms << "\n";
    std::cout << "wrote " << report << "\n";
}

void cmd_bench(const std::string& ckpt, const std::string& report) {
    require_file(ckpt, "checkpoint", "train");
    const nlohmann::json side = read_sidecar(ckpt, "train");
    const std::string stage = side.value("stage", "stage1");
    if (!side.contains("config"))
        throw FormatError("sidecar " + ckpt + ".run.json carries no config");
    RunConfig cfg = run_config_from_json(side.at("config").dump());
    const Checkpoint ck = load_matching_checkpoint(ckpt, cfg.estimator);

    GuidanceConfig gc;
    gc.gamma = default_gamma(stage, side, cfg);

    const auto data = generate(cfg.task);
    const long n = std::min<long>(16, static_cast<long>(data.size()));
    std::vector<ConditionSeq> conds;
    std::vector<Tensor> noise;
    for (long i = 0; i < n; ++i) {
        conds.push_back(condition_for(data, cfg.task, i));
        noise.push_back(noise_for(cfg.task, cfg.seed, i));
    }

    std::vector<SolverConfig> points;
    for (int s : {1, 5, 25}) {
        SolverConfig sc;
        sc.kind = SolverKind::Euler;
        sc.steps = s;
        points.push_back(sc);
    }
    {
        SolverConfig sc = cfg.solver;
        sc.kind = SolverKind::Dopri5;
        points.push_back(sc);
    }

    ensure_dir(fs::path(report).parent_path());
    std::ofstream csv(report, std::ios::trunc);
    if (!csv) throw IoError("cannot write " + report);
    csv << "point,wall_ms,field_evals\n";

    // repeat each point until it has accumulated enough wall time for a
    // stable per-sample figure
    double euler1_ms = 0.0, euler25_ms = 0.0;
    for (const SolverConfig& sc : points) {
        long reps = 0;
        long evals = 0;
        double total_ms = 0.0;
        while ((total_ms < 100.0 && reps < 64) || reps < 1) {
            const auto t0 = std::chrono::steady_clock::now();
            for (long i = 0; i < n; ++i) {
                FieldEval f = estimator_field(ck.params, ck.config, conds[static_cast<size_t>(i)]);
                evals += solve(f, noise[static_cast<size_t>(i)], sc, gc).field_evals;
            }
            total_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                                  t0)
                            .count();
            ++reps;
        }
        const double ms = total_ms / static_cast<double>(n * reps);
        const double per_evals = static_cast<double>(evals) / static_cast<double>(n * reps);
        if (sc.kind == SolverKind::Euler && sc.steps == 1) euler1_ms = ms;
        if (sc.kind == SolverKind::Euler && sc.steps == 25) euler25_ms = ms;
        csv << point_label(sc) << "," << ms << "," << per_evals << "\n";
        std::cout << point_label(sc) << ": " << ms << " ms/sample, " << per_evals
                  << " field evals\n";
    }
    const double ratio = euler1_ms > 0.0 ? euler25_ms / euler1_ms : 0.0;
    csv << "ratio-25-over-1," << ratio << ",\n";
    if (!csv) throw IoError("short write: " + report);
    csv.close();
    write_sidecar(report, "bench", artifact_id(ckpt), config_json(cfg),
                  {{"gamma", gc.gamma}, {"samples", n}, {"ratio_25_over_1", ratio}});
    std::cout << "25-step / 1-step wall clock ratio: " << ratio << "\n";
    std::cout << "wrote " << report << "\n";
}

// the only honored environment variable; it sizes the worker pool and must
// never change numeric output
void apply_thread_env() {
    const char* tv = std::getenv("RF_THREADS");
    if (tv == nullptr) return;
    char* end = nullptr;
    const long n = std::strtol(tv, &end, 10);
    if (end == tv || *end != '\0' || n < 1)
        throw ConfigError(std::string("RF_THREADS must be a positive integer, got \"") + tv + "\"");
    kernels::set_threads(static_cast<int>(n));
}

template <typename F>
int guarded(F&& body) {
    try {
        apply_thread_env();
        body();
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const MissingPrerequisite& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const AlignmentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const CapacityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string("rectified flow matching lab, ") + kVersion};
    app.require_subcommand(1);

    std::string spec_path, data_out;
    auto* gen = app.add_subcommand("gen-data", "generate a toy dataset from a task spec");
    gen->add_option("--spec", spec_path, "task spec JSON file")->required();
    gen->add_option("--out", data_out, "output dataset path")->required();

    std::string train_cfg, rgen_cfg, rtrain_cfg, distill_cfg;
    auto* tr = app.add_subcommand("train", "first-stage flow matching training");
    tr->add_option("--config", train_cfg, "run config JSON file")->required();
    auto* rg = app.add_subcommand("reflow-gen", "generate reflow triplets from the stage-1 model");
    rg->add_option("--config", rgen_cfg, "run config JSON file")->required();
    auto* rt = app.add_subcommand("reflow-train", "retrain on reflow triplets");
    rt->add_option("--config", rtrain_cfg, "run config JSON file")->required();
    auto* di = app.add_subcommand("distill", "one-step distillation on the reflow store");
    di->add_option("--config", distill_cfg, "run config JSON file")->required();

    SampleArgs sa;
    auto* sm = app.add_subcommand("sample", "draw samples from a checkpoint");
    sm->add_option("--ckpt", sa.ckpt, "checkpoint path")->required();
    auto* steps_opt = sm->add_option("--steps", sa.steps, "Euler steps (overrides the config)");
    auto* dopri_opt = sm->add_flag("--dopri5", sa.dopri5, "use the adaptive solver");
    steps_opt->excludes(dopri_opt);
    dopri_opt->excludes(steps_opt);
    sm->add_option("--n", sa.n, "sample count")->default_val(64);
    auto* gamma_opt = sm->add_option("--gamma", sa.gamma,
                                     "guidance scale (default: config gamma for stage-1 "
                                     "checkpoints; reflowed and distilled ones default to "
                                     "the gamma their store was generated with)");
    sm->add_flag("--trajectory", sa.trajectory, "record solver trajectories (first 8 samples)");
    sm->add_option("--out", sa.out, "output directory (default: <ckpt dir>/samples)");

    std::string eval_ckpt, eval_report, bench_ckpt, bench_report;
    auto* ev = app.add_subcommand("eval", "metric grid over solvers and guidance scales");
    ev->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
    ev->add_option("--report", eval_report, "output CSV path")->required();
    auto* be = app.add_subcommand("bench", "wall-clock cost per sample across solver settings");
    be->add_option("--ckpt", bench_ckpt, "checkpoint path")->required();
    be->add_option("--report", bench_report, "output CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    sa.gamma_set = gamma_opt->count() > 0;

    if (gen->parsed()) return guarded([&] { cmd_gen_data(spec_path, data_out); });
    if (tr->parsed()) return guarded([&] { cmd_train(train_cfg); });
    if (rg->parsed()) return guarded([&] { cmd_reflow_gen(rgen_cfg); });
    if (rt->parsed()) return guarded([&] { cmd_reflow_train(rtrain_cfg); });
    if (di->parsed()) return guarded([&] { cmd_distill(distill_cfg); });
    if (sm->parsed()) return guarded([&] { cmd_sample(sa); });
    if (ev->parsed()) return guarded([&] { cmd_eval(eval_ckpt, eval_report); });
    if (be->parsed()) return guarded([&] { cmd_bench(bench_ckpt, bench_report); });
    return 2;
}
