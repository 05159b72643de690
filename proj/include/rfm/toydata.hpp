#pragma once

#include <string>
#include <vector>

#include "rfm/training.hpp"

// Synthetic conditional datasets with known ground truth: a class-conditional
// Gaussian mixture (single-frame sequences) and a temporal event task where
// one-hot condition frames plant channel templates in the target sequence.
namespace rfm {

struct GaussTaskSpec {
    int num_classes = 8;
    int dim = 2;
    Tensor means;  // [K, dim]; defaults to a unit circle layout when empty
    double sigma = 0.1;
    int samples_per_class = 500;
    uint64_t seed = 1;

    void validate() const;
};

// class k at angle 2*pi*k/K on the unit circle (first two dims; the rest 0);
// 1D folds onto evenly spaced points in [-1, 1]
Tensor default_gauss_means(int num_classes, int dim);

struct EventTaskSpec {
    int cond_len = 16;  // L_c condition frames
    int ratio = 4;      // latent frames per condition frame
    int vocab = 4;      // event kinds; the condition adds one silence channel
    int dim = 4;        // latent channels
    std::vector<Tensor> templates;  // vocab entries of [ratio, dim]; default from seed
    double jitter = 0.05;
    double density = 0.25;  // per-frame event probability; 0 degenerates to pure noise
    int num_items = 512;
    uint64_t seed = 1;

    int cond_channels() const { return vocab + 1; }  // one-hot events + silence
    int latent_len() const { return cond_len * ratio; }
    void validate() const;
};

// unit-norm Gaussian draws, re-drawn until pairwise non-collinear
std::vector<Tensor> default_event_templates(int vocab, int ratio, int dim, uint64_t seed);

// one task spec of either kind, as configured under the "task" JSON section
struct TaskSpec {
    enum class Kind { Gauss, Events } kind = Kind::Gauss;
    GaussTaskSpec gauss;
    EventTaskSpec events;

    void validate() const;
    int latent_dim() const;
    int cond_dim() const;
    int latent_len() const;
    int cond_len() const;
};

TaskSpec task_spec_from_json(const std::string& text);
std::string task_spec_to_json(const TaskSpec& spec);

// items are grouped by class: item i belongs to class i / samples_per_class.
// x1: [1, dim] drawn from N(mean_k, sigma^2 I); c: one-hot [1, K]
std::vector<TrainItem> gen_gauss(const GaussTaskSpec& spec);

// condition frame j carries a one-hot event id or the silence channel;
// target frames [j*ratio, (j+1)*ratio) carry that event's template plus
// N(0, jitter^2) noise; silence frames carry pure noise. Each event id
// appears at most once per sequence (so matched-filter onset detection is
// well posed); frames activated beyond vocab are dropped uniformly.
std::vector<TrainItem> gen_events(const EventTaskSpec& spec);

std::vector<TrainItem> generate(const TaskSpec& spec);

// file format: magic "RFDS", u32 version = 1, u32 item count, then per item
// the tensors "x1" and "c" (u32 name length, name, u32 rank, u32 dims[],
// f32 little-endian data) followed by one u8 null-condition flag
void save_dataset(const std::string& path, const std::vector<TrainItem>& data);
std::vector<TrainItem> load_dataset(const std::string& path);

}  // namespace rfm
