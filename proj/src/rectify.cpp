#include "rfm/rectify.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"
#include "rfm/binio.hpp"

namespace rfm {

namespace {

constexpr char kMagic[5] = "RFTR";
constexpr uint32_t kVersion = 1;

}  // namespace

std::string reflow_meta_to_json(const ReflowMeta& meta) {
    nlohmann::json j;
    j["source"] = meta.source;
    j["solver"] = solver_name(meta.solver);
    j["steps"] = meta.steps;
    j["rtol"] = meta.rtol;
    j["atol"] = meta.atol;
    j["gamma"] = meta.gamma;
    j["seed"] = meta.seed;
    j["count"] = meta.count;
    j["skipped"] = meta.skipped;
    return j.dump(2);
}

ReflowMeta reflow_meta_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("reflow meta: invalid json: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("reflow meta: top level must be an object");
    static const std::set<std::string> known = {"source", "solver", "steps", "rtol", "atol",
                                                "gamma",  "seed",   "count", "skipped"};
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw ConfigError("reflow meta: unknown field \"" + key + "\"");
    ReflowMeta meta;
    try {
        if (j.contains("source")) meta.source = j["source"].get<std::string>();
        if (j.contains("solver")) meta.solver = solver_from_name(j["solver"].get<std::string>());
        if (j.contains("steps")) meta.steps = j["steps"].get<int>();
        if (j.contains("rtol")) meta.rtol = j["rtol"].get<double>();
        if (j.contains("atol")) meta.atol = j["atol"].get<double>();
        if (j.contains("gamma")) meta.gamma = j["gamma"].get<double>();
        if (j.contains("seed")) meta.seed = j["seed"].get<uint64_t>();
        if (j.contains("count")) meta.count = j["count"].get<uint32_t>();
        if (j.contains("skipped")) meta.skipped = j["skipped"].get<uint32_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("reflow meta: bad field type: ") + e.what());
    }
    return meta;
}

// ------------------------------------------------------------- generation --

ReflowGenResult generate_reflow_data(const LayerParams& params, const EstimatorConfig& cfg,
                                     const std::vector<ConditionSeq>& conditions,
                                     const SolverConfig& solver, const GuidanceConfig& guidance,
                                     uint64_t seed, const std::string& source_id) {
    cfg.validate();
    solver.validate();
    guidance.validate();
    if (conditions.empty()) throw UsageError("generate_reflow_data: empty condition set");

    ReflowGenResult out;
    out.meta.source = source_id;
    out.meta.solver = solver.kind;
    out.meta.steps = solver.steps;
    out.meta.rtol = solver.rtol;
    out.meta.atol = solver.atol;
    out.meta.gamma = guidance.effective_gamma();
    out.meta.seed = seed;

    Rng root(seed);
    for (size_t i = 0; i < conditions.size(); ++i) {
        const auto& c = conditions[i];
        const int lx = c.features.dim(0) * cfg.regulate_ratio;
        Tensor x0({lx, cfg.latent_dim});
        Rng rng = root.fork(Stream::ReflowNoise, static_cast<uint64_t>(i));
        rng.fill_normal(x0.data(), x0.size());
        FieldEval field = estimator_field(params, cfg, c);
        try {
            auto res = solve(field, x0, solver, guidance);
            out.triplets.push_back({LatentSeq{x0}, LatentSeq{res.x1}, c});
        } catch (const NumericError&) {
            out.skipped_items.push_back(static_cast<long>(i));
        } catch (const StiffnessError&) {
            out.skipped_items.push_back(static_cast<long>(i));
        }
    }
    out.meta.count = static_cast<uint32_t>(out.triplets.size());
    out.meta.skipped = static_cast<uint32_t>(out.skipped_items.size());
    return out;
}

// --------------------------------------------------------------------- io --

namespace {

void put_record(std::ostream& os, const std::string& name, const Tensor& t) {
    binio::put_u32(os, static_cast<uint32_t>(name.size()));
    binio::put_bytes(os, name.data(), name.size());
    binio::put_u32(os, static_cast<uint32_t>(t.rank()));
    for (int d = 0; d < t.rank(); ++d) binio::put_u32(os, static_cast<uint32_t>(t.dim(d)));
    for (long i = 0; i < t.size(); ++i) binio::put_f32(os, t.data()[i]);
}

Tensor get_record(std::istream& is, const std::string& path, const std::string& expect_name) {
    const uint32_t name_len = binio::get_u32(is, path + ": record name length");
    if (name_len == 0 || name_len > 64)
        throw FormatError(path + ": implausible record name length " + std::to_string(name_len));
    const std::string name = binio::get_string(is, name_len, path + ": record name");
    if (name != expect_name)
        throw FormatError(path + ": expected record \"" + expect_name + "\", found \"" + name +
                          "\"");
    const uint32_t rank = binio::get_u32(is, path + ": rank of " + name);
    if (rank > 8) throw FormatError(path + ": implausible rank for " + name);
    std::vector<int> shape;
    long numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
        const uint32_t dim = binio::get_u32(is, path + ": dims of " + name);
        if (dim == 0) throw FormatError(path + ": zero dimension in " + name);
        shape.push_back(static_cast<int>(dim));
        numel *= dim;
    }
    Tensor t(shape);
    for (long i = 0; i < numel; ++i) t.data()[i] = binio::get_f32(is, path + ": " + name);
    return t;
}

}  // namespace

void save_triplets(const std::string& path, const std::vector<ReflowTriplet>& triplets,
                   const ReflowMeta& meta) {
    auto os = binio::open_write(path);
    binio::put_bytes(os, kMagic, 4);
    binio::put_u32(os, kVersion);
    binio::put_u32(os, static_cast<uint32_t>(triplets.size()));
    for (size_t i = 0; i < triplets.size(); ++i) {
        const auto& tr = triplets[i];
        const std::string prefix = "item" + std::to_string(i);
        put_record(os, prefix + ".x0", tr.x0.values);
        put_record(os, prefix + ".x1hat", tr.x1_hat.values);
        put_record(os, prefix + ".c", tr.c.features);
        Tensor null_rec({1});
        null_rec.data()[0] = tr.c.null_flag ? 1.0f : 0.0f;
        put_record(os, prefix + ".null", null_rec);
    }
    if (!os) throw IoError("write failed: " + path);

    auto meta_os = binio::open_write(path + ".json");
    const std::string json = reflow_meta_to_json(meta);
    binio::put_bytes(meta_os, json.data(), json.size());
    meta_os.put('\n');
    if (!meta_os) throw IoError("write failed: " + path + ".json");
}

std::pair<std::vector<ReflowTriplet>, ReflowMeta> load_triplets(const std::string& path) {
    auto is = binio::open_read(path);
    binio::expect_magic(is, kMagic, path);
    const uint32_t version = binio::get_u32(is, path + ": version");
    if (version != kVersion)
        throw FormatError(path + ": unsupported triplet-store version " + std::to_string(version));
    const uint32_t count = binio::get_u32(is, path + ": triplet count");
    std::vector<ReflowTriplet> triplets;
    triplets.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const std::string prefix = "item" + std::to_string(i);
        ReflowTriplet tr;
        tr.x0.values = get_record(is, path, prefix + ".x0");
        tr.x1_hat.values = get_record(is, path, prefix + ".x1hat");
        tr.c.features = get_record(is, path, prefix + ".c");
        Tensor null_rec = get_record(is, path, prefix + ".null");
        if (null_rec.size() != 1 ||
            (null_rec.data()[0] != 0.0f && null_rec.data()[0] != 1.0f))
            throw FormatError(path + ": malformed null flag for " + prefix);
        tr.c.null_flag = null_rec.data()[0] == 1.0f;
        if (tr.x0.values.shape() != tr.x1_hat.values.shape())
            throw FormatError(path + ": triplet " + prefix + " endpoint shapes differ");
        triplets.push_back(std::move(tr));
    }

    std::ifstream meta_is(path + ".json", std::ios::binary);
    if (!meta_is) throw IoError("cannot open reflow meta: " + path + ".json");
    std::string json((std::istreambuf_iterator<char>(meta_is)), std::istreambuf_iterator<char>());
    ReflowMeta meta = reflow_meta_from_json(json);
    if (meta.count != triplets.size())
        throw FormatError(path + ": meta count " + std::to_string(meta.count) +
                          " does not match stored triplets " + std::to_string(triplets.size()));
    return {std::move(triplets), std::move(meta)};
}

// ------------------------------------------------------------------ draws --

std::vector<ReflowDraw> draw_reflow_batch(size_t count, const TrainConfig& cfg, long step) {
    cfg.validate();
    if (count == 0) throw UsageError("draw_reflow_batch: empty triplet store");
    Rng root(cfg.seed);
    const auto ustep = static_cast<uint64_t>(step);
    Rng pick = root.fork(Stream::BatchSelect, ustep);
    Rng time = root.fork(Stream::Time, ustep);
    std::vector<ReflowDraw> batch(static_cast<size_t>(cfg.batch_size));
    for (auto& d : batch) d.index = static_cast<int>(pick.next_below(count));
    for (auto& d : batch) {
        d.t = time.uniform_open(cfg.t_min, 1.0 - cfg.t_min);
        d.weight = cfg.reweight ? logit_normal_weight(d.t) : 1.0;
    }
    return batch;
}

std::vector<ReflowDraw> draw_distill_batch(size_t count, const TrainConfig& cfg, long step) {
    cfg.validate();
    if (count == 0) throw UsageError("draw_distill_batch: empty triplet store");
    Rng root(cfg.seed);
    Rng pick = root.fork(Stream::BatchSelect, static_cast<uint64_t>(step));
    std::vector<ReflowDraw> batch(static_cast<size_t>(cfg.batch_size));
    for (auto& d : batch) {
        d.index = static_cast<int>(pick.next_below(count));
        d.t = 0.0;
        d.weight = 1.0;
    }
    return batch;
}

Tensor reflow_loss(Graph* g, const LayerParams& params, const EstimatorConfig& est_cfg,
                   const std::vector<ReflowTriplet>& triplets, const TrainConfig& cfg,
                   double gamma, long step) {
    auto batch = draw_reflow_batch(triplets.size(), cfg, step);
    return reflow_batch_loss(g, params, est_cfg, triplets, batch, gamma);
}

Tensor distill_loss(Graph* g, const LayerParams& params, const EstimatorConfig& est_cfg,
                    const std::vector<ReflowTriplet>& triplets, const TrainConfig& cfg,
                    double gamma, long step) {
    auto batch = draw_distill_batch(triplets.size(), cfg, step);
    return distill_batch_loss(g, params, est_cfg, triplets, batch, gamma);
}

// --------------------------------------------------------------- training --

namespace {

// null-branch outputs on a fixed probe batch: the first few stored noise
// points at mid time; drift between two probes is how much the guided-target
// regression moved the unconditional behavior
std::vector<Tensor> null_probe(const LayerParams& params, const EstimatorConfig& est_cfg,
                               const std::vector<ReflowTriplet>& triplets) {
    std::vector<Tensor> outs;
    const size_t n = std::min<size_t>(8, triplets.size());
    for (size_t i = 0; i < n; ++i) {
        ConditionSeq null_c = triplets[i].c;
        null_c.null_flag = true;
        outs.push_back(estimator_forward(nullptr, params, est_cfg, triplets[i].x0, 0.5, null_c));
    }
    return outs;
}

double probe_drift(const std::vector<Tensor>& before, const std::vector<Tensor>& after) {
    double sq = 0.0;
    long n = 0;
    for (size_t i = 0; i < before.size(); ++i) {
        for (long k = 0; k < before[i].size(); ++k) {
            const double d = static_cast<double>(after[i].data()[k]) - before[i].data()[k];
            sq += d * d;
        }
        n += before[i].size();
    }
    return n > 0 ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
}

ReflowTrainResult run_rectified_training(LayerParams& params, const EstimatorConfig& est_cfg,
                                         const std::vector<ReflowTriplet>& triplets,
                                         const TrainConfig& cfg, double gamma,
                                         const std::string& csv_path, bool distill) {
    cfg.validate();
    est_cfg.validate();
    if (triplets.empty())
        throw UsageError(std::string(distill ? "distill_train" : "reflow_train") +
                         ": empty triplet store");
    if (!std::isfinite(gamma))
        throw ConfigError(std::string(distill ? "distill_train" : "reflow_train") +
                          ": gamma must be finite");

    std::ofstream csv;
    if (!csv_path.empty()) {
        csv.open(csv_path, std::ios::trunc);
        if (!csv) throw IoError("cannot open loss curve file: " + csv_path);
        csv << "step,loss,wall_ms\n";
    }

    auto before = null_probe(params, est_cfg, triplets);

    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    AdamState state;
    adam_init(state, params);

    ReflowTrainResult result;
    result.train.losses.reserve(static_cast<size_t>(cfg.steps));
    for (long step = 0; step < cfg.steps; ++step) {
        const auto t_start = std::chrono::steady_clock::now();
        auto batch = distill ? draw_distill_batch(triplets.size(), cfg, step)
                             : draw_reflow_batch(triplets.size(), cfg, step);
        zero_grads(params);
        Graph graph;
        auto loss = distill ? distill_batch_loss(&graph, params, est_cfg, triplets, batch, gamma)
                            : reflow_batch_loss(&graph, params, est_cfg, triplets, batch, gamma);
        const double loss_value = loss.item();
        if (!std::isfinite(loss_value))
            throw NumericError(std::string(distill ? "distillation" : "reflow training") +
                               " diverged at step " + std::to_string(step) +
                               " (loss not finite, lr " + std::to_string(cfg.lr) + ")");
        graph.backward(loss);
        if (cfg.grad_clip > 0.0) clip_global_norm(params, cfg.grad_clip);
        adam_step(params, state, adam_cfg);

        const double wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start)
                .count();
        result.train.losses.push_back(loss_value);
        if (step == 0) result.train.initial_loss = loss_value;
        result.train.final_loss = loss_value;
        if (csv.is_open()) csv << step << "," << loss_value << "," << wall_ms << "\n";
    }

    result.null_drift = probe_drift(before, null_probe(params, est_cfg, triplets));
    return result;
}

}  // namespace

ReflowTrainResult reflow_train(LayerParams& params, const EstimatorConfig& est_cfg,
                               const std::vector<ReflowTriplet>& triplets, const TrainConfig& cfg,
                               double gamma, const std::string& csv_path) {
    return run_rectified_training(params, est_cfg, triplets, cfg, gamma, csv_path, false);
}

ReflowTrainResult distill_train(LayerParams& params, const EstimatorConfig& est_cfg,
                                const std::vector<ReflowTriplet>& triplets,
                                const TrainConfig& cfg, double gamma,
                                const std::string& csv_path) {
    return run_rectified_training(params, est_cfg, triplets, cfg, gamma, csv_path, true);
}

}  // namespace rfm
