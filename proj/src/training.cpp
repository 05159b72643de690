#include "rfm/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

namespace rfm {

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
    if (steps < 0) throw ConfigError("train config: steps must be >= 0");
    if (!(lr > 0.0)) throw ConfigError("train config: lr must be positive");
    if (cond_drop_prob < 0.0 || cond_drop_prob > 1.0)
        throw ConfigError("train config: cond_drop_prob must lie in [0, 1]");
    if (!(t_min > 0.0) || t_min >= 0.5)
        throw ConfigError("train config: t_min must lie in (0, 0.5)");
}

double logit_normal_weight(double t) {
    if (!(t > 0.0) || !(t < 1.0))
        throw DomainError("logit_normal_weight: t must lie strictly inside (0, 1), got " +
                          std::to_string(t));
    static const double inv_sqrt_2pi = 0.3989422804014327;
    const double logit = std::log(t) - std::log1p(-t);
    return inv_sqrt_2pi / (t * (1.0 - t)) * std::exp(-0.5 * logit * logit);
}

std::pair<Tensor, Tensor> interpolate(const Tensor& x0, const Tensor& x1, double t) {
    if (x0.shape() != x1.shape())
        throw ShapeError("interpolate: endpoint shapes differ, " + shape_str(x0.shape()) +
                         " vs " + shape_str(x1.shape()));
    if (t < 0.0 || t > 1.0)
        throw DomainError("interpolate: t must lie in [0, 1], got " + std::to_string(t));
    Tensor x_t(x0.shape());
    Tensor u(x0.shape());
    const float tf = static_cast<float>(t);
    for (long i = 0; i < x0.size(); ++i) {
        x_t.data()[i] = (1.0f - tf) * x0.data()[i] + tf * x1.data()[i];
        u.data()[i] = x1.data()[i] - x0.data()[i];
    }
    return {x_t, u};
}

std::vector<DrawnItem> draw_batch(const std::vector<TrainItem>& data, const TrainConfig& cfg,
                                  long step) {
    cfg.validate();
    if (data.empty()) throw UsageError("draw_batch: empty dataset");
    Rng root(cfg.seed);
    const auto ustep = static_cast<uint64_t>(step);
    Rng pick = root.fork(Stream::BatchSelect, ustep);
    Rng noise = root.fork(Stream::Noise, ustep);
    Rng time = root.fork(Stream::Time, ustep);
    Rng drop = root.fork(Stream::CondDrop, ustep);

    std::vector<DrawnItem> batch(static_cast<size_t>(cfg.batch_size));
    for (auto& item : batch)
        item.index = static_cast<int>(pick.next_below(data.size()));
    for (auto& item : batch) {
        const auto& shape = data.at(static_cast<size_t>(item.index)).x1.values.shape();
        item.x0 = Tensor(shape);
        noise.fill_normal(item.x0.data(), item.x0.size());
    }
    for (auto& item : batch) {
        item.t = time.uniform_open(cfg.t_min, 1.0 - cfg.t_min);
        item.weight = cfg.reweight ? logit_normal_weight(item.t) : 1.0;
    }
    for (auto& item : batch) item.null_cond = drop.bernoulli(cfg.cond_drop_prob);
    return batch;
}

Tensor rfm_loss(Graph* g, const LayerParams& params, const EstimatorConfig& est_cfg,
                const std::vector<TrainItem>& data, const TrainConfig& cfg, long step) {
    auto batch = draw_batch(data, cfg, step);
    return rfm_batch_loss(g, params, est_cfg, data, batch);
}

TrainResult train(LayerParams& params, const EstimatorConfig& est_cfg,
                  const std::vector<TrainItem>& data, const TrainConfig& cfg,
                  const std::string& csv_path) {
    cfg.validate();
    if (data.empty()) throw UsageError("train: empty dataset");

    std::ofstream csv;
    if (!csv_path.empty()) {
        csv.open(csv_path, std::ios::trunc);
        if (!csv) throw IoError("cannot open loss curve file: " + csv_path);
        csv << "step,loss,wall_ms\n";
    }

    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    AdamState state;
    adam_init(state, params);

    TrainResult result;
    result.losses.reserve(static_cast<size_t>(cfg.steps));
    for (long step = 0; step < cfg.steps; ++step) {
        const auto t_start = std::chrono::steady_clock::now();
        auto batch = draw_batch(data, cfg, step);
        zero_grads(params);
        Graph graph;
        auto loss = rfm_batch_loss(&graph, params, est_cfg, data, batch);
        const double loss_value = loss.item();
        if (!std::isfinite(loss_value))
            throw NumericError("training diverged at step " + std::to_string(step) +
                               " (loss not finite, lr " + std::to_string(cfg.lr) + ")");
        graph.backward(loss);
        if (cfg.grad_clip > 0.0) clip_global_norm(params, cfg.grad_clip);
        adam_step(params, state, adam_cfg);

        const double wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start)
                .count();
        result.losses.push_back(loss_value);
        if (step == 0) result.initial_loss = loss_value;
        result.final_loss = loss_value;
        if (csv.is_open()) csv << step << "," << loss_value << "," << wall_ms << "\n";
    }
    return result;
}

}  // namespace rfm
