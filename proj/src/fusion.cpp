// SPDX-License-Identifier: Apache-2.0

#include "devft/fusion.hpp"

#include <stdexcept>

#include "devft/rng.hpp"

namespace devft {

std::string fusion_strategy_name(FusionStrategy s) {
    switch (s) {
        case FusionStrategy::Dblf: return "dblf";
        case FusionStrategy::Sum: return "sum";
        case FusionStrategy::ROne: return "r_one";
    }
    throw std::logic_error("fusion_strategy_name: unknown strategy");
}

FusionStrategy fusion_strategy_from_name(const std::string& name) {
    if (name == "dblf") return FusionStrategy::Dblf;
    if (name == "sum") return FusionStrategy::Sum;
    if (name == "r_one") return FusionStrategy::ROne;
    throw std::invalid_argument("unknown fusion strategy '" + name +
                                "' (expected dblf|sum|r_one)");
}

namespace {

void check_same_length(const DenseVector& a, const DenseVector& b, const char* op) {
    if (a.size() != b.size())
        throw std::invalid_argument(std::string(op) + ": layer vector length mismatch");
}

void check_group(const std::vector<DenseVector>& group) {
    if (group.empty()) throw std::invalid_argument("fusion: empty group");
    for (const auto& v : group) check_same_length(group.front(), v, "fusion");
}

}  // namespace

DenseVector layer_add(const DenseVector& a, const DenseVector& b) {
    check_same_length(a, b, "layer_add");
    DenseVector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

DenseVector layer_sub(const DenseVector& a, const DenseVector& b) {
    check_same_length(a, b, "layer_sub");
    DenseVector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

DenseVector fuse_vectors(const std::vector<DenseVector>& group, double beta) {
    check_group(group);
    const DenseVector& anchor = group.front();
    DenseVector differential(anchor.size(), 0.0);
    for (const auto& member : group) {
        // Includes the anchor itself; its differential is identically zero.
        for (std::size_t i = 0; i < anchor.size(); ++i) differential[i] += member[i] - anchor[i];
    }
    DenseVector out(anchor.size());
    for (std::size_t i = 0; i < anchor.size(); ++i) out[i] = anchor[i] + beta * differential[i];
    return out;
}

DenseVector sum_vectors(const std::vector<DenseVector>& group) {
    check_group(group);
    DenseVector out(group.front().size(), 0.0);
    for (const auto& member : group) out = layer_add(out, member);
    return out;
}

DenseVector pick_one_vector(const std::vector<DenseVector>& group, std::uint64_t seed) {
    check_group(group);
    Rng rng(seed);
    return group[static_cast<std::size_t>(rng.uniform_index(group.size()))];
}

namespace {

ModelShape shape_of(const LayerParams& layer) {
    ModelShape shape;
    shape.width = layer.d_out();
    shape.rank = layer.adapter.rank;
    shape.alpha = layer.adapter.alpha;
    shape.activation = layer.activation;
    // input/output/layer-count fields are irrelevant for a single layer
    shape.input_dim = layer.d_in();
    shape.output_dim = layer.d_out();
    shape.layer_count = 1;
    return shape;
}

std::vector<DenseVector> flatten_group(const std::vector<LayerParams>& group) {
    if (group.empty()) throw std::invalid_argument("fusion: empty group");
    std::vector<DenseVector> flat;
    flat.reserve(group.size());
    for (const auto& layer : group) flat.push_back(flatten_layer(layer));
    return flat;
}

}  // namespace

RepresentativeLayer fuse_group(const std::vector<LayerParams>& group, double beta) {
    const DenseVector fused = fuse_vectors(flatten_group(group), beta);
    RepresentativeLayer rep;
    rep.layer = unflatten_layer(fused, shape_of(group.front()));
    rep.beta = beta;
    return rep;
}

RepresentativeLayer fusion_strategy(const std::vector<LayerParams>& group,
                                    FusionStrategy strategy, double beta,
                                    std::uint64_t seed) {
    switch (strategy) {
        case FusionStrategy::Dblf:
            return fuse_group(group, beta);
        case FusionStrategy::Sum: {
            RepresentativeLayer rep;
            rep.layer = unflatten_layer(sum_vectors(flatten_group(group)), shape_of(group.front()));
            rep.beta = beta;
            return rep;
        }
        case FusionStrategy::ROne: {
            RepresentativeLayer rep;
            rep.layer =
                unflatten_layer(pick_one_vector(flatten_group(group), seed), shape_of(group.front()));
            rep.beta = beta;
            return rep;
        }
    }
    throw std::logic_error("fusion_strategy: unknown strategy");
}

std::vector<RepresentativeLayer> fuse_partition(const LayeredModel& global,
                                                const GroupPartition& partition, double beta,
                                                FusionStrategy strategy, std::uint64_t seed) {
    if (partition.layer_count() != static_cast<int>(global.layer_count()))
        throw std::invalid_argument("fuse_partition: partition does not match model depth");
    std::vector<RepresentativeLayer> reps;
    reps.reserve(partition.group_count());
    for (std::size_t g = 0; g < partition.group_count(); ++g) {
        std::vector<LayerParams> members;
        members.reserve(partition.groups()[g].size());
        for (int layer : partition.groups()[g])
            members.push_back(global.layers[static_cast<std::size_t>(layer)]);
        RepresentativeLayer rep =
            fusion_strategy(members, strategy, beta, derive_seed({seed, 0xf05eULL, g}));
        rep.group_id = static_cast<int>(g);
        reps.push_back(std::move(rep));
    }
    return reps;
}

LayeredModel build_submodel(const LayeredModel& global, const GroupPartition& partition,
                            double beta, FusionStrategy strategy, std::uint64_t seed) {
    std::vector<RepresentativeLayer> reps = fuse_partition(global, partition, beta, strategy, seed);
    LayeredModel sub;
    sub.input_map = global.input_map;
    sub.head = global.head;
    sub.shape = global.shape;
    sub.shape.layer_count = partition.group_count();
    sub.layers.reserve(reps.size());
    for (auto& rep : reps) sub.layers.push_back(std::move(rep.layer));
    return sub;
}

}  // namespace devft
