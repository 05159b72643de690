#pragma once

#include <string>
#include <vector>

#include "rfm/sampler.hpp"
#include "rfm/toydata.hpp"

// Quantitative evaluation: a Frechet-style Gaussian W2 distance for the
// mixture task, a matched-filter alignment score for the event task, and a
// grid runner that writes CSV reports.
namespace rfm {

struct GaussianFit {
    std::vector<double> mean;  // [D]
    std::vector<double> cov;   // [D, D] row-major, symmetric PSD
    int dim = 0;
};

// sample mean and unbiased covariance; at least two samples required
GaussianFit fit_gaussian(const std::vector<std::vector<double>>& samples);

// |mu_a - mu_b|^2 + tr(Ca + Cb - 2 (Cb^1/2 Ca Cb^1/2)^1/2); symmetric in
// its arguments and zero for identical fits
double frechet_w2(const GaussianFit& a, const GaussianFit& b);

struct AlignmentReport {
    double accuracy = 0.0;  // fraction of planted events recovered at the right block
    double chance = 0.0;    // 1 / number of condition blocks
    long total_events = 0;
    long correct = 0;
};

// For every planted condition event, correlate its template against every
// target block (normalized cross-correlation) and score a hit when the
// argmax lands on the planted block index.
AlignmentReport alignment_accuracy(const std::vector<LatentSeq>& generated,
                                   const std::vector<ConditionSeq>& conditions,
                                   const EventTaskSpec& spec);

struct EvalPoint {
    std::string label;        // "euler-25", "dopri5", "gamma-4.5"
    double w2 = 0.0;          // mixture task; NaN when not applicable
    double alignment = 0.0;   // event task; NaN when not applicable
    double chance = 0.0;
    long field_evals = 0;
    double wall_ms = 0.0;
};

struct EvalOptions {
    int samples_per_class = 200;  // mixture task
    int num_sequences = 64;       // event task
    std::vector<int> euler_steps = {1, 5, 25};
    bool include_dopri5 = true;
    double rtol = 1e-5;
    double atol = 1e-5;
    double gamma = 4.5;               // guidance for the solver grid
    std::vector<double> gamma_grid;   // extra rows at 25-step euler, one per gamma
    uint64_t seed = 7;
};

// one row per solver grid point plus one per gamma grid point; noise draws
// are shared across rows so comparisons are paired
std::vector<EvalPoint> eval_suite(const LayerParams& params, const EstimatorConfig& cfg,
                                  const TaskSpec& task, const EvalOptions& opt);

// header: point,w2,alignment,chance,field_evals,wall_ms
void write_eval_csv(const std::vector<EvalPoint>& rows, const std::string& path);

}  // namespace rfm
