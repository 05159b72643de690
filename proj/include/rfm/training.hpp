#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rfm/checkpoint.hpp"
#include "rfm/estimator.hpp"
#include "rfm/nn.hpp"
#include "rfm/rng.hpp"

// First-stage training: straight-path interpolation, the flow-matching
// regression loss with optional logit-normal re-weighting, and condition
// dropout so one model serves both the conditional and unconditional
// branches of guided sampling.
namespace rfm {

struct TrainItem {
    LatentSeq x1;    // data point
    ConditionSeq c;  // paired condition sequence
};

struct TrainConfig {
    int batch_size = 32;
    int steps = 2000;
    double lr = 1e-3;
    double cond_drop_prob = 0.2;
    bool reweight = true;
    uint64_t seed = 1;
    // t is drawn from U(t_min, 1 - t_min): the weight density is undefined
    // at the endpoints, so training never touches them
    double t_min = 1e-5;
    double grad_clip = 1.0;  // global-norm cap; <= 0 disables

    void validate() const;
};

// w(t) = (1/sqrt(2*pi)) * 1/(t(1-t)) * exp(-(ln t - ln(1-t))^2 / 2);
// the logit-normal(0,1) density. Throws DomainError outside (0,1).
double logit_normal_weight(double t);

// x_t = (1-t) x0 + t x1 and the regression target u = x1 - x0
std::pair<Tensor, Tensor> interpolate(const Tensor& x0, const Tensor& x1, double t);

// One batch item's frozen randomness. Draws live outside the loss builder
// so the same batch can be replayed through the f32 pipeline, the f64
// shadow, and finite-difference evaluations.
struct DrawnItem {
    int index = 0;     // dataset row
    Tensor x0;         // noise, same shape as the item's x1
    double t = 0.5;
    double weight = 1; // w(t), or 1 with reweighting off
    bool null_cond = false;
};

// substreams are derived from (seed, step, purpose); identical inputs give
// an identical batch regardless of what other code drew before
std::vector<DrawnItem> draw_batch(const std::vector<TrainItem>& data, const TrainConfig& cfg,
                                  long step);

// mean over the batch of weight * |v(x_t, t | c) - u|^2, built on the tape;
// gradients flow to params only
template <typename T>
TensorT<T> rfm_batch_loss(GraphT<T>* g, const LayerParamsT<T>& params, const EstimatorConfig& cfg,
                          const std::vector<TrainItem>& data,
                          const std::vector<DrawnItem>& batch) {
    if (batch.empty()) throw UsageError("rfm_batch_loss: empty batch");
    TensorT<T> acc({1});
    for (const auto& item : batch) {
        const auto& src = data.at(static_cast<size_t>(item.index));
        const auto& x1f = src.x1.values;
        if (x1f.shape() != item.x0.shape())
            throw ShapeError("rfm_batch_loss: noise shape " + shape_str(item.x0.shape()) +
                             " does not match data shape " + shape_str(x1f.shape()));
        TensorT<T> x_t(x1f.shape());
        TensorT<T> u(x1f.shape());
        for (long i = 0; i < x1f.size(); ++i) {
            const T x0v = static_cast<T>(item.x0.data()[i]);
            const T x1v = static_cast<T>(x1f.data()[i]);
            x_t.data()[i] = (T(1) - static_cast<T>(item.t)) * x0v + static_cast<T>(item.t) * x1v;
            u.data()[i] = x1v - x0v;
        }
        TensorT<T> cond(src.c.features.shape());
        for (long i = 0; i < cond.size(); ++i)
            cond.data()[i] = static_cast<T>(src.c.features.data()[i]);
        const bool null_cond = item.null_cond || src.c.null_flag;
        auto v = estimator_forward(g, params, cfg, x_t, item.t, cond, null_cond);
        auto d = ops::sub(g, v, u);
        auto sq = ops::sum_all(g, ops::mul(g, d, d));
        acc = ops::add(g, acc, ops::scale(g, sq, static_cast<T>(item.weight)));
    }
    return ops::scale(g, acc, T(1) / static_cast<T>(batch.size()));
}

// draws a fresh batch under (cfg.seed, step) and evaluates the loss
Tensor rfm_loss(Graph* g, const LayerParams& params, const EstimatorConfig& est_cfg,
                const std::vector<TrainItem>& data, const TrainConfig& cfg, long step);

struct TrainResult {
    std::vector<double> losses;   // one entry per completed step
    double final_loss = 0.0;
    double initial_loss = 0.0;
};

// Runs cfg.steps optimizer steps in place. Appends one "step,loss,wall_ms"
// row per step to csv_path when non-empty. Aborts with NumericError (step
// index and learning rate in the message) if the loss leaves the reals.
TrainResult train(LayerParams& params, const EstimatorConfig& est_cfg,
                  const std::vector<TrainItem>& data, const TrainConfig& cfg,
                  const std::string& csv_path = "");

}  // namespace rfm
