// SPDX-License-Identifier: Apache-2.0

#include "devft/grouping.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "devft/numerics.hpp"
#include "devft/rng.hpp"

namespace devft {

GroupPartition GroupPartition::from_groups(std::vector<std::vector<int>> groups,
                                           int layer_count) {
    if (layer_count <= 0) throw std::invalid_argument("partition: layer count must be positive");
    std::vector<int> owner(static_cast<std::size_t>(layer_count), -1);
    int covered = 0;
    for (auto& group : groups) {
        if (group.empty()) throw std::invalid_argument("partition: empty group");
        std::sort(group.begin(), group.end());
        for (int layer : group) {
            if (layer < 0 || layer >= layer_count)
                throw std::invalid_argument("partition: layer index out of range");
            if (owner[static_cast<std::size_t>(layer)] != -1)
                throw std::invalid_argument("partition: groups overlap");
            owner[static_cast<std::size_t>(layer)] = 1;
            ++covered;
        }
    }
    if (covered != layer_count)
        throw std::invalid_argument("partition: groups do not cover all layers");

    std::sort(groups.begin(), groups.end(),
              [](const auto& x, const auto& y) { return x.front() < y.front(); });

    GroupPartition p;
    p.groups_ = std::move(groups);
    p.layer_count_ = layer_count;
    p.layer_to_group_.assign(static_cast<std::size_t>(layer_count), -1);
    for (std::size_t g = 0; g < p.groups_.size(); ++g)
        for (int layer : p.groups_[g]) p.layer_to_group_[static_cast<std::size_t>(layer)] = static_cast<int>(g);
    return p;
}

GroupPartition GroupPartition::identity(int layer_count) {
    std::vector<std::vector<int>> groups;
    groups.reserve(static_cast<std::size_t>(layer_count));
    for (int i = 0; i < layer_count; ++i) groups.push_back({i});
    return from_groups(std::move(groups), layer_count);
}

std::string GroupPartition::to_json_string() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& group : groups_) j.push_back(group);
    return j.dump();
}

GroupPartition GroupPartition::from_json_string(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (!j.is_array()) throw std::invalid_argument("partition json: expected a list of lists");
    std::vector<std::vector<int>> groups;
    int layer_count = 0;
    for (const auto& item : j) {
        groups.push_back(item.get<std::vector<int>>());
        layer_count += static_cast<int>(groups.back().size());
    }
    return from_groups(std::move(groups), layer_count);
}

std::string grouping_strategy_name(GroupingStrategy s) {
    switch (s) {
        case GroupingStrategy::Spectral: return "spectral";
        case GroupingStrategy::Random: return "random";
        case GroupingStrategy::Even: return "even";
    }
    throw std::logic_error("grouping_strategy_name: unknown strategy");
}

GroupingStrategy grouping_strategy_from_name(const std::string& name) {
    if (name == "spectral") return GroupingStrategy::Spectral;
    if (name == "random") return GroupingStrategy::Random;
    if (name == "even") return GroupingStrategy::Even;
    throw std::invalid_argument("unknown grouping strategy '" + name +
                                "' (expected spectral|random|even)");
}

Matrix similarity_matrix(const LayeredModel& model) {
    const std::size_t count = model.layer_count();
    if (count == 0) throw std::invalid_argument("similarity_matrix: model has no layers");
    std::vector<DenseVector> flat;
    flat.reserve(count);
    for (const auto& layer : model.layers) flat.push_back(flatten_layer(layer));

    Matrix w(count, count);
    for (std::size_t i = 0; i < count; ++i) {
        w(i, i) = 1.0;
        for (std::size_t j = i + 1; j < count; ++j) {
            const double sim = cosine_similarity(flat[i], flat[j]);
            w(i, j) = sim;
            w(j, i) = sim;
        }
    }
    return w;
}

Matrix shifted_weights(const Matrix& similarity) {
    const std::size_t n = similarity.rows();
    Matrix w(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) w(i, j) = (1.0 + similarity(i, j)) / 2.0;
    return w;
}

Matrix graph_laplacian(const Matrix& similarity) {
    const Matrix w = shifted_weights(similarity);
    const std::size_t n = w.rows();
    Matrix lap(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        double degree = 0.0;
        for (std::size_t j = 0; j < n; ++j) degree += w(i, j);
        lap(i, i) = degree;
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) lap(i, j) = -w(i, j);
    }
    return lap;
}

double cut_value(const Matrix& similarity, const GroupPartition& partition) {
    if (similarity.rows() != similarity.cols() ||
        similarity.rows() != static_cast<std::size_t>(partition.layer_count()))
        throw std::invalid_argument("cut_value: partition does not match matrix order");
    const Matrix w = shifted_weights(similarity);
    double total = 0.0;
    const int n = partition.layer_count();
    for (int p = 0; p < n; ++p)
        for (int q = 0; q < n; ++q)
            if (p != q && partition.group_of(p) != partition.group_of(q)) total += w(p, q);
    return total;
}

GroupPartition spectral_partition(const Matrix& similarity, int group_count,
                                  std::uint64_t seed) {
    const auto order = static_cast<int>(similarity.rows());
    if (group_count < 1 || group_count > order)
        throw std::invalid_argument("spectral_partition: group count must be in [1, L]");
    if (group_count == 1) {
        std::vector<int> all(static_cast<std::size_t>(order));
        std::iota(all.begin(), all.end(), 0);
        return GroupPartition::from_groups({all}, order);
    }

    const EigenResult eig = symmetric_eigh(graph_laplacian(similarity));
    Matrix embedding(static_cast<std::size_t>(order), static_cast<std::size_t>(group_count));
    for (int i = 0; i < order; ++i)
        for (int t = 0; t < group_count; ++t)
            embedding(static_cast<std::size_t>(i), static_cast<std::size_t>(t)) =
                eig.eigenvectors(static_cast<std::size_t>(i), static_cast<std::size_t>(t));

    double max_row_gap = 0.0;
    for (int i = 1; i < order; ++i) {
        double gap = 0.0;
        for (int t = 0; t < group_count; ++t) {
            const double d = embedding(static_cast<std::size_t>(i), static_cast<std::size_t>(t)) -
                             embedding(0, static_cast<std::size_t>(t));
            gap += d * d;
        }
        max_row_gap = std::max(max_row_gap, gap);
    }
    if (max_row_gap <= 1e-24)
        throw std::invalid_argument(
            "spectral_partition: degenerate embedding, all rows identical; layers are "
            "indistinguishable at this group count");

    const KMeansResult km = kmeans(embedding, group_count, seed);
    std::vector<std::vector<int>> groups(static_cast<std::size_t>(group_count));
    for (int i = 0; i < order; ++i)
        groups[static_cast<std::size_t>(km.assignment.labels[static_cast<std::size_t>(i)])]
            .push_back(i);
    return GroupPartition::from_groups(std::move(groups), order);
}

GroupPartition even_partition(int layer_count, int group_count) {
    if (group_count < 1 || group_count > layer_count)
        throw std::invalid_argument("even_partition: group count must be in [1, L]");
    const int base = layer_count / group_count;
    const int remainder = layer_count % group_count;
    std::vector<std::vector<int>> groups;
    groups.reserve(static_cast<std::size_t>(group_count));
    int next = 0;
    for (int g = 0; g < group_count; ++g) {
        const int size = base + (g < remainder ? 1 : 0);
        std::vector<int> group(static_cast<std::size_t>(size));
        std::iota(group.begin(), group.end(), next);
        next += size;
        groups.push_back(std::move(group));
    }
    return GroupPartition::from_groups(std::move(groups), layer_count);
}

GroupPartition random_partition(int layer_count, int group_count, std::uint64_t seed) {
    if (group_count < 1 || group_count > layer_count)
        throw std::invalid_argument("random_partition: group count must be in [1, L]");
    std::vector<int> perm(static_cast<std::size_t>(layer_count));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed);
    rng.shuffle(perm);

    const int base = layer_count / group_count;
    const int remainder = layer_count % group_count;
    std::vector<std::vector<int>> groups;
    groups.reserve(static_cast<std::size_t>(group_count));
    auto it = perm.begin();
    for (int g = 0; g < group_count; ++g) {
        const int size = base + (g < remainder ? 1 : 0);
        groups.emplace_back(it, it + size);
        it += size;
    }
    return GroupPartition::from_groups(std::move(groups), layer_count);
}

GroupPartition grouping_strategy(const LayeredModel& model, int group_count,
                                 GroupingStrategy strategy, std::uint64_t seed) {
    const int layer_count = static_cast<int>(model.layer_count());
    switch (strategy) {
        case GroupingStrategy::Spectral:
            return spectral_partition(similarity_matrix(model), group_count, seed);
        case GroupingStrategy::Even:
            return even_partition(layer_count, group_count);
        case GroupingStrategy::Random:
            return random_partition(layer_count, group_count, seed);
    }
    throw std::logic_error("grouping_strategy: unknown strategy");
}

}  // namespace devft
