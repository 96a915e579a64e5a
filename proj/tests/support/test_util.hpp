// SPDX-License-Identifier: Apache-2.0

#ifndef DEVFT_TESTS_SUPPORT_TEST_UTIL_HPP
#define DEVFT_TESTS_SUPPORT_TEST_UTIL_HPP

#include <algorithm>
#include <set>
#include <vector>

#include "devft/grouping.hpp"
#include "devft/lora_model.hpp"
#include "devft/numerics.hpp"
#include "devft/rng.hpp"

namespace devft::testutil {

// Cut objective exactly as the paper's partition equation sums it: ordered
// cross-group pairs of the raw cosine similarities. Oracle-side counterpart
// of the library's shifted-weight cut_value.
inline double eq2_cut(const Matrix& similarity, const GroupPartition& p) {
    double total = 0.0;
    const int n = p.layer_count();
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            if (a != b && p.group_of(a) != p.group_of(b)) total += similarity(a, b);
    return total;
}

// All partitions of {0..n-1} into exactly k non-empty groups via restricted
// growth strings; each partition appears exactly once.
inline void enumerate_partitions_impl(int n, int k, std::vector<int>& labels, int used,
                                      std::vector<GroupPartition>& out) {
    if (static_cast<int>(labels.size()) == n) {
        if (used != k) return;
        std::vector<std::vector<int>> groups(static_cast<std::size_t>(k));
        for (int i = 0; i < n; ++i)
            groups[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])].push_back(i);
        out.push_back(GroupPartition::from_groups(std::move(groups), n));
        return;
    }
    for (int label = 0; label <= std::min(used, k - 1); ++label) {
        labels.push_back(label);
        enumerate_partitions_impl(n, k, labels, std::max(used, label + 1), out);
        labels.pop_back();
    }
}

inline std::vector<GroupPartition> all_partitions(int n, int k) {
    std::vector<GroupPartition> out;
    std::vector<int> labels;
    enumerate_partitions_impl(n, k, labels, 0, out);
    return out;
}

inline std::set<std::set<int>> as_sets(const GroupPartition& p) {
    std::set<std::set<int>> out;
    for (const auto& g : p.groups()) out.insert(std::set<int>(g.begin(), g.end()));
    return out;
}

// k orthonormal directions; layer i sits near direction (i mod k) with
// N(0, noise) on every coordinate.
inline std::vector<DenseVector> planted_vectors(std::size_t vector_length, int layers,
                                                int clusters, double noise, Rng& rng) {
    std::vector<DenseVector> dirs;
    for (int d = 0; d < clusters; ++d) {
        DenseVector v(vector_length);
        for (auto& x : v) x = rng.normal();
        for (const auto& prev : dirs) {
            const double pr = dot(v, prev);
            for (std::size_t i = 0; i < vector_length; ++i) v[i] -= pr * prev[i];
        }
        const double nv = l2_norm(v);
        for (auto& x : v) x /= nv;
        dirs.push_back(std::move(v));
    }
    std::vector<DenseVector> vectors;
    for (int i = 0; i < layers; ++i) {
        DenseVector v = dirs[static_cast<std::size_t>(i % clusters)];
        for (auto& x : v) x += noise * rng.normal();
        vectors.push_back(std::move(v));
    }
    return vectors;
}

inline LayeredModel model_from_layer_vectors(const std::vector<DenseVector>& vectors,
                                             ModelShape shape) {
    shape.layer_count = vectors.size();
    LayeredModel model;
    model.shape = shape;
    model.input_map = Matrix(shape.width, shape.input_dim);
    model.head = Matrix(shape.output_dim, shape.width);
    for (const auto& v : vectors) model.layers.push_back(unflatten_layer(v, shape));
    return model;
}

inline bool models_bitwise_equal(const LayeredModel& a, const LayeredModel& b) {
    if (!(a.input_map == b.input_map) || !(a.head == b.head) ||
        a.layers.size() != b.layers.size())
        return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        if (!(a.layers[i].w == b.layers[i].w) || a.layers[i].bias != b.layers[i].bias ||
            !(a.layers[i].adapter.a == b.layers[i].adapter.a) ||
            !(a.layers[i].adapter.b == b.layers[i].adapter.b))
            return false;
    }
    return true;
}

}  // namespace devft::testutil

#endif  // DEVFT_TESTS_SUPPORT_TEST_UTIL_HPP
