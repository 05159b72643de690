#include "rfm/runconfig.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"
#include "rfm/errors.hpp"

namespace rfm {

namespace {

nlohmann::json parse_object(const std::string& text, const std::string& what) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(what + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw ConfigError(what + ": expected a JSON object");
    return j;
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known,
                    const std::string& what) {
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw ConfigError(what + ": unknown key \"" + key + "\"");
}

nlohmann::json section(const nlohmann::json& j, const std::string& name) {
    if (!j.contains(name)) return nlohmann::json::object();
    const nlohmann::json& sec = j.at(name);
    if (!sec.is_object())
        throw ConfigError("run config: \"" + name + "\" must be an object");
    return sec;
}

TrainConfig train_from_json(const nlohmann::json& j) {
    reject_unknown(j, {"batch_size", "steps", "lr", "cond_drop_prob", "reweight", "t_min",
                       "grad_clip"},
                   "train config");
    TrainConfig cfg;
    try {
        if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<int>();
        if (j.contains("steps")) cfg.steps = j.at("steps").get<int>();
        if (j.contains("lr")) cfg.lr = j.at("lr").get<double>();
        if (j.contains("cond_drop_prob")) cfg.cond_drop_prob = j.at("cond_drop_prob").get<double>();
        if (j.contains("reweight")) cfg.reweight = j.at("reweight").get<bool>();
        if (j.contains("t_min")) cfg.t_min = j.at("t_min").get<double>();
        if (j.contains("grad_clip")) cfg.grad_clip = j.at("grad_clip").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("train config: bad field type: ") + e.what());
    }
    return cfg;
}

SolverConfig solver_config_from_json(const nlohmann::json& j) {
    reject_unknown(j, {"kind", "steps", "rtol", "atol"}, "solver config");
    SolverConfig cfg;
    try {
        if (j.contains("kind")) cfg.kind = solver_from_name(j.at("kind").get<std::string>());
        if (j.contains("steps")) cfg.steps = j.at("steps").get<int>();
        if (j.contains("rtol")) cfg.rtol = j.at("rtol").get<double>();
        if (j.contains("atol")) cfg.atol = j.at("atol").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("solver config: bad field type: ") + e.what());
    }
    return cfg;
}

GuidanceConfig guidance_from_json(const nlohmann::json& j) {
    reject_unknown(j, {"gamma", "enabled"}, "guidance config");
    GuidanceConfig cfg;
    try {
        if (j.contains("gamma")) cfg.gamma = j.at("gamma").get<double>();
        if (j.contains("enabled")) cfg.enabled = j.at("enabled").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("guidance config: bad field type: ") + e.what());
    }
    return cfg;
}

ReflowStageConfig reflow_from_json(const nlohmann::json& j) {
    reject_unknown(j, {"solver", "steps", "gamma", "train_steps", "distill_steps", "lr"},
                   "reflow config");
    ReflowStageConfig cfg;
    try {
        if (j.contains("solver")) cfg.solver = solver_from_name(j.at("solver").get<std::string>());
        if (j.contains("steps")) cfg.steps = j.at("steps").get<int>();
        if (j.contains("gamma")) cfg.gamma = j.at("gamma").get<double>();
        if (j.contains("train_steps")) cfg.train_steps = j.at("train_steps").get<int>();
        if (j.contains("distill_steps")) cfg.distill_steps = j.at("distill_steps").get<int>();
        if (j.contains("lr")) cfg.lr = j.at("lr").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("reflow config: bad field type: ") + e.what());
    }
    return cfg;
}

EvalOptions eval_from_json(const nlohmann::json& j) {
    reject_unknown(j,
                   {"samples_per_class", "num_sequences", "euler_steps", "include_dopri5", "rtol",
                    "atol", "gamma", "gamma_grid", "seed"},
                   "eval config");
    EvalOptions opt;
    try {
        if (j.contains("samples_per_class"))
            opt.samples_per_class = j.at("samples_per_class").get<int>();
        if (j.contains("num_sequences")) opt.num_sequences = j.at("num_sequences").get<int>();
        if (j.contains("euler_steps"))
            opt.euler_steps = j.at("euler_steps").get<std::vector<int>>();
        if (j.contains("include_dopri5")) opt.include_dopri5 = j.at("include_dopri5").get<bool>();
        if (j.contains("rtol")) opt.rtol = j.at("rtol").get<double>();
        if (j.contains("atol")) opt.atol = j.at("atol").get<double>();
        if (j.contains("gamma")) opt.gamma = j.at("gamma").get<double>();
        if (j.contains("gamma_grid"))
            opt.gamma_grid = j.at("gamma_grid").get<std::vector<double>>();
        if (j.contains("seed")) opt.seed = j.at("seed").get<uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("eval config: bad field type: ") + e.what());
    }
    return opt;
}

}  // namespace

void RunConfig::resolve() {
    // unset task sentinels take their documented defaults
    if (task.kind == TaskSpec::Kind::Gauss && task.gauss.means.size() == 0)
        task.gauss.means = default_gauss_means(task.gauss.num_classes, task.gauss.dim);
    if (task.kind == TaskSpec::Kind::Events && task.events.templates.empty())
        task.events.templates = default_event_templates(task.events.vocab, task.events.ratio,
                                                        task.events.dim, task.events.seed);
    task.validate();

    // the task owns the data dims; JSON parsing rejects explicit
    // contradictions before this runs
    estimator.latent_dim = task.latent_dim();
    estimator.cond_dim = task.cond_dim();
    estimator.regulate_ratio = task.latent_len() / task.cond_len();
    estimator.max_seq_len = std::max(estimator.max_seq_len, task.latent_len());
    estimator.validate();

    train.seed = seed;
    train.validate();
    solver.validate();
    guidance.validate();

    if (reflow.steps < 1)
        throw ConfigError("reflow config: steps must be >= 1, got " + std::to_string(reflow.steps));
    if (!std::isfinite(reflow.gamma))
        throw ConfigError("reflow config: gamma must be finite");
    if (reflow.train_steps < 0) reflow.train_steps = train.steps;
    if (reflow.distill_steps < 0) reflow.distill_steps = train.steps;
    if (reflow.lr < 0.0) reflow.lr = train.lr;
    if (!(reflow.lr > 0.0)) throw ConfigError("reflow config: lr must be positive");

    if (eval.samples_per_class < 1)
        throw ConfigError("eval config: samples_per_class must be >= 1");
    if (eval.num_sequences < 1) throw ConfigError("eval config: num_sequences must be >= 1");
    for (int s : eval.euler_steps)
        if (s < 1)
            throw ConfigError("eval config: euler_steps entries must be >= 1, got " +
                              std::to_string(s));
    if (!(eval.rtol > 0.0) || !(eval.atol > 0.0))
        throw ConfigError("eval config: rtol and atol must be positive");
    if (!std::isfinite(eval.gamma)) throw ConfigError("eval config: gamma must be finite");
    for (double g : eval.gamma_grid)
        if (!std::isfinite(g)) throw ConfigError("eval config: gamma_grid entries must be finite");

    if (out_dir.empty()) throw ConfigError("run config: out_dir must not be empty");
}

RunConfig run_config_from_json(const std::string& text) {
    nlohmann::json j = parse_object(text, "run config");
    reject_unknown(j,
                   {"task", "estimator", "train", "solver", "guidance", "reflow", "eval", "seed",
                    "out_dir"},
                   "run config");

    RunConfig cfg;
    try {
        if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
        if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("run config: bad field type: ") + e.what());
    }

    if (!j.contains("task")) throw ConfigError("run config: missing \"task\" section");
    cfg.task = task_spec_from_json(j.at("task").dump());

    // explicit estimator dims must agree with the task; absent ones are
    // filled from it so the stored config is complete
    nlohmann::json est = section(j, "estimator");
    const auto check_dim = [&](const char* key, int want) {
        if (!est.contains(key)) {
            est[key] = want;
            return;
        }
        int got = 0;
        try {
            got = est.at(key).get<int>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("estimator config: bad field type: ") + e.what());
        }
        if (got != want)
            throw ShapeError("estimator config: " + std::string(key) + " " + std::to_string(got) +
                             " contradicts the task (needs " + std::to_string(want) + ")");
    };
    check_dim("latent_dim", cfg.task.latent_dim());
    check_dim("cond_dim", cfg.task.cond_dim());
    check_dim("regulate_ratio", cfg.task.latent_len() / cfg.task.cond_len());
    if (est.contains("max_seq_len")) {
        int m = 0;
        try {
            m = est.at("max_seq_len").get<int>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("estimator config: bad field type: ") + e.what());
        }
        if (m < cfg.task.latent_len())
            throw CapacityError("estimator config: max_seq_len " + std::to_string(m) +
                                " cannot seat the task's " + std::to_string(cfg.task.latent_len()) +
                                " latent frames");
    } else {
        est["max_seq_len"] = cfg.task.latent_len();
    }
    cfg.estimator = estimator_config_from_json(est.dump());

    cfg.train = train_from_json(section(j, "train"));
    cfg.solver = solver_config_from_json(section(j, "solver"));
    cfg.guidance = guidance_from_json(section(j, "guidance"));
    cfg.reflow = reflow_from_json(section(j, "reflow"));
    cfg.eval = eval_from_json(section(j, "eval"));

    cfg.resolve();
    return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["task"] = nlohmann::json::parse(task_spec_to_json(cfg.task));
    j["estimator"] = nlohmann::json::parse(estimator_config_to_json(cfg.estimator));
    j["train"] = {{"batch_size", cfg.train.batch_size}, {"steps", cfg.train.steps},
                  {"lr", cfg.train.lr},                 {"cond_drop_prob", cfg.train.cond_drop_prob},
                  {"reweight", cfg.train.reweight},     {"t_min", cfg.train.t_min},
                  {"grad_clip", cfg.train.grad_clip}};
    j["solver"] = {{"kind", solver_name(cfg.solver.kind)},
                   {"steps", cfg.solver.steps},
                   {"rtol", cfg.solver.rtol},
                   {"atol", cfg.solver.atol}};
    j["guidance"] = {{"gamma", cfg.guidance.gamma}, {"enabled", cfg.guidance.enabled}};
    j["reflow"] = {{"solver", solver_name(cfg.reflow.solver)},
                   {"steps", cfg.reflow.steps},
                   {"gamma", cfg.reflow.gamma},
                   {"train_steps", cfg.reflow.train_steps},
                   {"distill_steps", cfg.reflow.distill_steps},
                   {"lr", cfg.reflow.lr}};
    j["eval"] = {{"samples_per_class", cfg.eval.samples_per_class},
                 {"num_sequences", cfg.eval.num_sequences},
                 {"euler_steps", cfg.eval.euler_steps},
                 {"include_dopri5", cfg.eval.include_dopri5},
                 {"rtol", cfg.eval.rtol},
                 {"atol", cfg.eval.atol},
                 {"gamma", cfg.eval.gamma},
                 {"gamma_grid", cfg.eval.gamma_grid},
                 {"seed", cfg.eval.seed}};
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir;
    return j.dump(2);
}

}  // namespace rfm
