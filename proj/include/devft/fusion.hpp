// SPDX-License-Identifier: Apache-2.0

#ifndef DEVFT_FUSION_HPP
#define DEVFT_FUSION_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "devft/grouping.hpp"
#include "devft/lora_model.hpp"
#include "devft/matrix.hpp"

namespace devft {

enum class FusionStrategy { Dblf, Sum, ROne };

std::string fusion_strategy_name(FusionStrategy s);
FusionStrategy fusion_strategy_from_name(const std::string& name);

// A fused layer standing in for a whole group, with its provenance for
// checkpoint metadata.
struct RepresentativeLayer {
    LayerParams layer;
    int group_id = 0;
    double beta = 0.0;
};

/// Elementwise sum of two layer vectors.
DenseVector layer_add(const DenseVector& a, const DenseVector& b);

/// Elementwise difference a - b.
DenseVector layer_sub(const DenseVector& a, const DenseVector& b);

/// anchor + beta * sum_j (v_j - anchor) over the group's layer vectors; the
/// first vector is the anchor and its own differential vanishes.
DenseVector fuse_vectors(const std::vector<DenseVector>& group, double beta);

/// Sum / R-One ablation counterparts of fuse_vectors.
DenseVector sum_vectors(const std::vector<DenseVector>& group);
DenseVector pick_one_vector(const std::vector<DenseVector>& group, std::uint64_t seed);

/// Differential fusion over complete layer vectors (base and adapter alike):
/// the representative must be a full trainable layer.
RepresentativeLayer fuse_group(const std::vector<LayerParams>& group, double beta);

RepresentativeLayer fusion_strategy(const std::vector<LayerParams>& group,
                                    FusionStrategy strategy, double beta,
                                    std::uint64_t seed);

/// Input map and head copied from the global model, one representative layer
/// per group in partition order. The global model is never mutated.
LayeredModel build_submodel(const LayeredModel& global, const GroupPartition& partition,
                            double beta, FusionStrategy strategy, std::uint64_t seed);

/// The representatives behind build_submodel, for checkpoint metadata.
std::vector<RepresentativeLayer> fuse_partition(const LayeredModel& global,
                                                const GroupPartition& partition, double beta,
                                                FusionStrategy strategy, std::uint64_t seed);

}  // namespace devft

#endif  // DEVFT_FUSION_HPP
