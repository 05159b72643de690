#pragma once

#include <string>

#include "rfm/estimator.hpp"
#include "rfm/nn.hpp"

// Checkpoint container: magic "RFCK", u32 version = 1, u32 tensor count,
// then per tensor { u32 name length, UTF-8 name, u32 rank, u32 dims[],
// f32 little-endian data }. Parameters are stored under their map names;
// the estimator config rides along as a JSON record under the reserved
// name "config" (one byte per f32 element); Adam moments use the parameter
// name with ".m" / ".v" appended. Tensors are written in lexicographic
// name order, so identical state produces byte-identical files.
namespace rfm {

struct Checkpoint {
    EstimatorConfig config;
    LayerParams params;
    AdamState adam;  // empty unless has_adam
    bool has_adam = false;
};

void save_checkpoint(const std::string& path, const EstimatorConfig& config,
                     const LayerParams& params, const AdamState* adam = nullptr);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace rfm
