// SPDX-License-Identifier: Apache-2.0

#ifndef DEVFT_CHECKPOINT_HPP
#define DEVFT_CHECKPOINT_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "devft/lora_model.hpp"

namespace devft {

// Per-layer provenance recorded when a layer came out of fusion.
struct LayerProvenance {
    int group_id = 0;
    double beta = 0.0;
};

/// JSON model checkpoint: shape spec, base tensors, adapter tensors, alpha,
/// rank, and the seed that produced the model. Optional per-layer provenance
/// (group id and beta) rides along for fused layers.
std::string model_to_checkpoint_json(
    const LayeredModel& model, std::uint64_t seed,
    const std::vector<std::optional<LayerProvenance>>& provenance = {});

struct CheckpointContents {
    LayeredModel model;
    std::uint64_t seed = 0;
    std::vector<std::optional<LayerProvenance>> provenance;
};

CheckpointContents model_from_checkpoint_json(const std::string& text);

void save_checkpoint(const std::string& path, const LayeredModel& model, std::uint64_t seed,
                     const std::vector<std::optional<LayerProvenance>>& provenance = {});
CheckpointContents load_checkpoint(const std::string& path);

}  // namespace devft

#endif  // DEVFT_CHECKPOINT_HPP
