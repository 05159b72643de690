#pragma once

#include <string>

#include "rfm/metrics.hpp"
#include "rfm/rectify.hpp"
#include "rfm/toydata.hpp"

// The single configuration document driving a pipeline run. Parsing is
// strict (unknown keys anywhere are rejected) and resolving fills every
// inherited field, so the JSON written next to an artifact replays the run
// without consulting defaults that might drift.
namespace rfm {

// reflow data generation plus the two retraining stages; negative fields
// inherit from the train section when the config resolves
struct ReflowStageConfig {
    SolverKind solver = SolverKind::Euler;  // triplet generation solver
    int steps = 25;                         // triplet generation grid
    double gamma = 4.5;                     // generation and regression guidance
    int train_steps = -1;                   // reflow optimizer steps
    int distill_steps = -1;                 // distillation optimizer steps
    double lr = -1.0;                       // learning rate for both stages
};

struct RunConfig {
    TaskSpec task;
    EstimatorConfig estimator;  // data dims are filled in from the task
    TrainConfig train;
    SolverConfig solver;      // sampling/eval solver
    GuidanceConfig guidance;  // first-stage sampling guidance
    ReflowStageConfig reflow;
    EvalOptions eval;
    uint64_t seed = 1;
    std::string out_dir = "out";

    // fills estimator dims from the task (the task owns them), raises
    // max_seq_len to seat the task's sequences, replaces inherit sentinels
    // (reflow steps/lr, empty task means/templates), syncs train.seed to
    // the run seed, and validates every section
    void resolve();
};

// strict parse of the full document; the result is resolved
RunConfig run_config_from_json(const std::string& text);

// every field explicit, suitable as the replayable sidecar
std::string run_config_to_json(const RunConfig& cfg);

}  // namespace rfm
