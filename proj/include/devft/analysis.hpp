// SPDX-License-Identifier: Apache-2.0

#ifndef DEVFT_ANALYSIS_HPP
#define DEVFT_ANALYSIS_HPP

#include <string>
#include <vector>

#include "devft/federation.hpp"
#include "devft/fusion.hpp"
#include "devft/grouping.hpp"
#include "devft/lora_model.hpp"

namespace devft {

struct GroupShift {
    int group_id = 0;
    std::size_t group_size = 0;
    double shift = 0.0;        // |fuse(beta) - fuse(1)|_2 on flattened vectors
    double bound = 0.0;        // |beta - 1| * |g| * max pairwise distance
    double max_pairwise = 0.0; // delta for this group
    bool violated = false;     // shift > bound, never silently dropped
};

struct ShiftReport {
    double beta = 0.0;
    std::vector<GroupShift> groups;
    double total_shift = 0.0;
    double total_bound = 0.0;
    std::vector<int> violating_groups;

    std::string to_json_string() const;
};

/// Both sides of the fusion-shift inequality for one group of layer vectors:
/// shift = |fuse(beta) - fuse(1)|, bound = |beta-1| * |g| * max_{j,k} |v_j - v_k|.
GroupShift group_fusion_shift(const std::vector<DenseVector>& group, double beta);

GroupShift group_fusion_shift(const std::vector<LayerParams>& group, double beta);

/// Evaluates every group of the partition and aggregates shifts vs bounds.
ShiftReport verify_lemma1(const LayeredModel& model, const GroupPartition& partition,
                          double beta);

/// Fuzzing entry point: random models and random partitions, one report each.
std::vector<ShiftReport> verify_lemma1_trials(const ModelShape& shape, int group_count,
                                              double beta, int trials, std::uint64_t seed);

/// Per-stage prefix means of the squared gradient norms in the records.
/// Returns one series per stage, ordered by stage index.
std::vector<std::vector<double>> gradient_norm_series(const std::vector<RoundRecord>& records);

}  // namespace devft

#endif  // DEVFT_ANALYSIS_HPP
