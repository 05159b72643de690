#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rfm/sampler.hpp"
#include "rfm/training.hpp"

// Reflow and one-step distillation against the guided field. First-stage
// training leaves sampling trajectories curved under guidance, so few-step
// sampling is poor. Reflow samples the model once per condition, stores the
// (noise, sample, condition) triplet, and retrains so the guided combination
// of the conditional and null branches points straight at the stored sample.
// Distillation then compresses the whole solve into a single evaluation of
// the guided field at the noise point.
namespace rfm {

struct ReflowTriplet {
    LatentSeq x0;      // the stored input noise
    LatentSeq x1_hat;  // model sample solved from x0 under the recorded config
    ConditionSeq c;
};

// everything needed to regenerate a store bit-identically, given the
// checkpoint named by `source`
struct ReflowMeta {
    std::string source;  // identifier of the generating checkpoint
    SolverKind solver = SolverKind::Euler;
    int steps = 25;      // Euler grid; ignored by Dopri5
    double rtol = 1e-5;  // Dopri5 tolerances
    double atol = 1e-5;
    double gamma = 4.5;  // guidance used to generate x1_hat
    uint64_t seed = 1;
    uint32_t count = 0;    // triplets stored
    uint32_t skipped = 0;  // conditions dropped after solver failures
};

std::string reflow_meta_to_json(const ReflowMeta& meta);
// throws ConfigError on invalid or unknown fields
ReflowMeta reflow_meta_from_json(const std::string& text);

struct ReflowGenResult {
    std::vector<ReflowTriplet> triplets;
    ReflowMeta meta;
    std::vector<long> skipped_items;  // indices into the condition set
};

// One fresh noise draw per condition (forked per item, so a skipped item
// never shifts later draws), guided solve to t = 1, triplet stored. Items
// whose solve fails (non-finite field, step-size collapse) are skipped and
// reported, not fatal.
ReflowGenResult generate_reflow_data(const LayerParams& params, const EstimatorConfig& cfg,
                                     const std::vector<ConditionSeq>& conditions,
                                     const SolverConfig& solver, const GuidanceConfig& guidance,
                                     uint64_t seed, const std::string& source_id = "");

// Binary store: tensor records named item{i}.x0 / .x1hat / .c / .null in
// item order, same record layout as checkpoints, magic "RFTR". The meta
// document is written as JSON to path + ".json".
void save_triplets(const std::string& path, const std::vector<ReflowTriplet>& triplets,
                   const ReflowMeta& meta);
std::pair<std::vector<ReflowTriplet>, ReflowMeta> load_triplets(const std::string& path);

// One training draw against the stored pairs: the noise is never resampled
// and condition dropout stays off, so a draw is only an index plus the
// interpolation time.
struct ReflowDraw {
    int index = 0;
    double t = 0.5;     // identically 0 for distillation
    double weight = 1;  // w(t), or 1 with reweighting off
};

// index and time streams match first-stage training draw-for-draw
std::vector<ReflowDraw> draw_reflow_batch(size_t count, const TrainConfig& cfg, long step);
// indices only; t and weight pinned to 0 and 1
std::vector<ReflowDraw> draw_distill_batch(size_t count, const TrainConfig& cfg, long step);

// gamma * v(x,t|c) + (1-gamma) * v(x,t|null) built on the tape, so gradients
// flow through both branches; a single conditional evaluation when gamma is
// exactly 1, matching the sampler's guidance-off identity
template <typename T>
TensorT<T> guided_forward(GraphT<T>* g, const LayerParamsT<T>& params, const EstimatorConfig& cfg,
                          const TensorT<T>& x, double t, const TensorT<T>& cond, bool null_flag,
                          double gamma) {
    if (gamma == 1.0) return estimator_forward(g, params, cfg, x, t, cond, null_flag);
    auto vc = estimator_forward(g, params, cfg, x, t, cond, null_flag);
    auto vn = estimator_forward(g, params, cfg, x, t, cond, true);
    const T wc = static_cast<T>(gamma);
    const T wn = static_cast<T>(1.0 - gamma);
    return ops::add(g, ops::scale(g, vc, wc), ops::scale(g, vn, wn));
}

// mean over the batch of weight * |v_CFG(x_t, t | c) - (x1_hat - x0)|^2
// where x_t interpolates the stored pair
template <typename T>
TensorT<T> reflow_batch_loss(GraphT<T>* g, const LayerParamsT<T>& params,
                             const EstimatorConfig& cfg,
                             const std::vector<ReflowTriplet>& triplets,
                             const std::vector<ReflowDraw>& batch, double gamma) {
    if (batch.empty()) throw UsageError("reflow_batch_loss: empty batch");
    TensorT<T> acc({1});
    for (const auto& d : batch) {
        const auto& tr = triplets.at(static_cast<size_t>(d.index));
        const auto& x0f = tr.x0.values;
        const auto& x1f = tr.x1_hat.values;
        if (x0f.shape() != x1f.shape())
            throw ShapeError("reflow_batch_loss: triplet endpoints differ, " +
                             shape_str(x0f.shape()) + " vs " + shape_str(x1f.shape()));
        TensorT<T> x_t(x1f.shape());
        TensorT<T> u(x1f.shape());
        for (long i = 0; i < x1f.size(); ++i) {
            const T x0v = static_cast<T>(x0f.data()[i]);
            const T x1v = static_cast<T>(x1f.data()[i]);
            x_t.data()[i] = (T(1) - static_cast<T>(d.t)) * x0v + static_cast<T>(d.t) * x1v;
            u.data()[i] = x1v - x0v;
        }
        TensorT<T> cond(tr.c.features.shape());
        for (long i = 0; i < cond.size(); ++i)
            cond.data()[i] = static_cast<T>(tr.c.features.data()[i]);
        auto v = guided_forward(g, params, cfg, x_t, d.t, cond, tr.c.null_flag, gamma);
        auto diff = ops::sub(g, v, u);
        auto sq = ops::sum_all(g, ops::mul(g, diff, diff));
        acc = ops::add(g, acc, ops::scale(g, sq, static_cast<T>(d.weight)));
    }
    return ops::scale(g, acc, T(1) / static_cast<T>(batch.size()));
}

// mean over the batch of |x0 + v_CFG(x0, 0 | c) - x1_hat|^2: the one-step
// endpoint error. The field is evaluated at the stored noise point with t
// identically 0 and no weighting, whatever the draw says.
template <typename T>
TensorT<T> distill_batch_loss(GraphT<T>* g, const LayerParamsT<T>& params,
                              const EstimatorConfig& cfg,
                              const std::vector<ReflowTriplet>& triplets,
                              const std::vector<ReflowDraw>& batch, double gamma) {
    if (batch.empty()) throw UsageError("distill_batch_loss: empty batch");
    TensorT<T> acc({1});
    for (const auto& d : batch) {
        const auto& tr = triplets.at(static_cast<size_t>(d.index));
        const auto& x0f = tr.x0.values;
        const auto& x1f = tr.x1_hat.values;
        if (x0f.shape() != x1f.shape())
            throw ShapeError("distill_batch_loss: triplet endpoints differ, " +
                             shape_str(x0f.shape()) + " vs " + shape_str(x1f.shape()));
        // |x0 + v - x1_hat|^2 == |v - (x1_hat - x0)|^2
        TensorT<T> x0(x0f.shape());
        TensorT<T> u(x0f.shape());
        for (long i = 0; i < x0f.size(); ++i) {
            const T x0v = static_cast<T>(x0f.data()[i]);
            const T x1v = static_cast<T>(x1f.data()[i]);
            x0.data()[i] = x0v;
            u.data()[i] = x1v - x0v;
        }
        TensorT<T> cond(tr.c.features.shape());
        for (long i = 0; i < cond.size(); ++i)
            cond.data()[i] = static_cast<T>(tr.c.features.data()[i]);
        auto v = guided_forward(g, params, cfg, x0, 0.0, cond, tr.c.null_flag, gamma);
        auto diff = ops::sub(g, v, u);
        acc = ops::add(g, acc, ops::sum_all(g, ops::mul(g, diff, diff)));
    }
    return ops::scale(g, acc, T(1) / static_cast<T>(batch.size()));
}

// draw under (cfg.seed, step) and evaluate, mirroring rfm_loss
Tensor reflow_loss(Graph* g, const LayerParams& params, const EstimatorConfig& est_cfg,
                   const std::vector<ReflowTriplet>& triplets, const TrainConfig& cfg,
                   double gamma, long step);
Tensor distill_loss(Graph* g, const LayerParams& params, const EstimatorConfig& est_cfg,
                    const std::vector<ReflowTriplet>& triplets, const TrainConfig& cfg,
                    double gamma, long step);

struct ReflowTrainResult {
    TrainResult train;
    // rms change of the null-branch field over a fixed probe batch between
    // the start and end of training; reported for monitoring, not asserted
    double null_drift = 0.0;
};

// Same optimizer loop as first-stage train(), but the regression target is
// the guided composition at a fixed gamma and cfg.cond_drop_prob is ignored
// (the null branch is exercised through the composition itself).
ReflowTrainResult reflow_train(LayerParams& params, const EstimatorConfig& est_cfg,
                               const std::vector<ReflowTriplet>& triplets, const TrainConfig& cfg,
                               double gamma, const std::string& csv_path = "");

// One-step endpoint regression on the same store (the reflow store is NOT
// regenerated from the reflowed model); gamma stays at the generation value.
ReflowTrainResult distill_train(LayerParams& params, const EstimatorConfig& est_cfg,
                                const std::vector<ReflowTriplet>& triplets,
                                const TrainConfig& cfg, double gamma,
                                const std::string& csv_path = "");

}  // namespace rfm
