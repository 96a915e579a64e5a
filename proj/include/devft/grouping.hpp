// SPDX-License-Identifier: Apache-2.0

#ifndef DEVFT_GROUPING_HPP
#define DEVFT_GROUPING_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "devft/lora_model.hpp"
#include "devft/matrix.hpp"

namespace devft {

// Disjoint, covering assignment of layer indices to groups. Canonical form:
// members sorted ascending, groups ordered by their anchor (smallest member).
class GroupPartition {
public:
    GroupPartition() = default;

    /// Validates and canonicalizes. Throws std::invalid_argument unless the
    /// groups are non-empty, pairwise disjoint, and cover {0, ..., count-1}.
    static GroupPartition from_groups(std::vector<std::vector<int>> groups, int layer_count);

    /// One singleton group per layer, in depth order.
    static GroupPartition identity(int layer_count);

    const std::vector<std::vector<int>>& groups() const { return groups_; }
    std::size_t group_count() const { return groups_.size(); }
    int layer_count() const { return layer_count_; }
    int anchor(std::size_t group) const { return groups_[group].front(); }
    int group_of(int layer) const { return layer_to_group_[static_cast<std::size_t>(layer)]; }

    std::string to_json_string() const;
    static GroupPartition from_json_string(const std::string& text);

    bool operator==(const GroupPartition&) const = default;

private:
    std::vector<std::vector<int>> groups_;
    std::vector<int> layer_to_group_;
    int layer_count_ = 0;
};

enum class GroupingStrategy { Spectral, Random, Even };

std::string grouping_strategy_name(GroupingStrategy s);
GroupingStrategy grouping_strategy_from_name(const std::string& name);

/// Pairwise cosine similarity of flattened layers; diagonal fixed to 1.
Matrix similarity_matrix(const LayeredModel& model);

/// Total cross-group mass of Eq-2 style ordered group pairs, computed on the
/// shifted nonnegative weights w' = (1 + w)/2 (diagonal excluded). Each
/// unordered cross pair is counted twice, matching the ordered double sum.
double cut_value(const Matrix& similarity, const GroupPartition& partition);

/// Unnormalized spectral clustering on the shifted-weight Laplacian: the
/// group_count smallest eigenvectors form the embedding rows, then k-means.
GroupPartition spectral_partition(const Matrix& similarity, int group_count, std::uint64_t seed);

GroupPartition grouping_strategy(const LayeredModel& model, int group_count,
                                 GroupingStrategy strategy, std::uint64_t seed);

/// Contiguous blocks of size layer_count / group_count, remainder spread
/// one-per-group from the front.
GroupPartition even_partition(int layer_count, int group_count);

/// Seed-shuffled permutation cut into the same block sizes as even_partition.
GroupPartition random_partition(int layer_count, int group_count, std::uint64_t seed);

/// Shifted off-diagonal weights w' = (1 + w)/2, zero diagonal; the graph the
/// Laplacian is built on.
Matrix shifted_weights(const Matrix& similarity);

/// L = D - W' for the shifted weights.
Matrix graph_laplacian(const Matrix& similarity);

}  // namespace devft

#endif  // DEVFT_GROUPING_HPP
