// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "devft/fusion.hpp"
#include "devft/rng.hpp"
#include "support/test_util.hpp"

using namespace devft;

namespace {

std::vector<DenseVector> random_group(std::size_t members, std::size_t length, Rng& rng) {
    std::vector<DenseVector> group(members, DenseVector(length));
    for (auto& v : group)
        for (auto& x : v) x = rng.normal();
    return group;
}

}  // namespace

TEST_CASE("layer arithmetic") {
    CHECK(layer_add({1, 2}, {3, -1}) == DenseVector{4, 1});
    CHECK(layer_sub({4, 1}, {3, -1}) == DenseVector{1, 2});
    CHECK(layer_add({1.5, -2.0}, {0.0, 0.0}) == DenseVector{1.5, -2.0});
    CHECK(layer_sub({1.5, -2.0}, {1.5, -2.0}) == DenseVector{0.0, 0.0});
    CHECK_THROWS_AS(layer_add({1.0}, {1.0, 2.0}), std::invalid_argument);

    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        DenseVector a(5), b(5);
        for (auto& x : a) x = rng.normal();
        for (auto& x : b) x = rng.normal();
        CHECK(layer_add(a, b) == layer_add(b, a));
        const DenseVector round_trip = layer_add(layer_sub(a, b), b);
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK(round_trip[i] == doctest::Approx(a[i]).epsilon(1e-12));
    }
}

TEST_CASE("differential fusion on vectors") {
    // Anchor [1,0], other member [3,2], beta 0.5:
    // [1,0] + 0.5 * (([1,0]-[1,0]) + ([3,2]-[1,0])) = [2,1].
    CHECK(fuse_vectors({{1, 0}, {3, 2}}, 0.5) == DenseVector{2, 1});

    const DenseVector anchor{0.25, -3.0, 7.5};
    CHECK(fuse_vectors({anchor}, 0.7) == anchor);
    CHECK(fuse_vectors({anchor, {1, 1, 1}, {-2, 0, 4}}, 0.0) == anchor);
    CHECK(fuse_vectors({anchor, anchor, anchor}, 0.3) == anchor);
    CHECK_THROWS_AS(fuse_vectors({}, 0.5), std::invalid_argument);
}

TEST_CASE("fusion linearity against the algebraic re-derivation") {
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t members = 1 + rng.uniform_index(5);
        const auto group = random_group(members, 7, rng);
        const double beta = rng.uniform(-0.5, 1.5);
        const DenseVector fused = fuse_vectors(group, beta);
        // fuse(g, beta) == (1 - beta*(|g|-1)) * anchor + beta * sum_{j != anchor} v_j
        const double anchor_coeff = 1.0 - beta * static_cast<double>(members - 1);
        for (std::size_t i = 0; i < fused.size(); ++i) {
            double expected = anchor_coeff * group[0][i];
            for (std::size_t j = 1; j < members; ++j) expected += beta * group[j][i];
            CHECK(fused[i] == doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("sum and r_one vector strategies") {
    const DenseVector only{2.5, -1.0};
    CHECK(sum_vectors({only}) == only);
    CHECK(sum_vectors({{1, 0}, {3, 2}}) == DenseVector{4, 2});

    // Consensus group: sum returns |g| * member, dblf and r_one return the member.
    const DenseVector theta{1.0, -2.0, 0.5};
    const std::vector<DenseVector> consensus{theta, theta, theta};
    const DenseVector summed = sum_vectors(consensus);
    for (std::size_t i = 0; i < theta.size(); ++i)
        CHECK(summed[i] == doctest::Approx(3.0 * theta[i]));
    CHECK(fuse_vectors(consensus, 0.37) == theta);
    CHECK(pick_one_vector(consensus, 5) == theta);

    // Seeded pick is reproducible and always a member.
    Rng rng(33);
    const auto group = random_group(4, 6, rng);
    const DenseVector picked = pick_one_vector(group, 17);
    CHECK(pick_one_vector(group, 17) == picked);
    bool is_member = false;
    for (const auto& g : group) is_member |= (g == picked);
    CHECK(is_member);
}

TEST_CASE("fuse_group materializes a complete layer") {
    ModelShape shape;
    shape.input_dim = 3;
    shape.width = 3;
    shape.output_dim = 2;
    shape.layer_count = 2;
    shape.rank = 1;
    shape.alpha = 2.0;
    const LayeredModel model = random_model(shape, 21);

    SUBCASE("singleton group is the anchor, bitwise") {
        const RepresentativeLayer rep = fuse_group({model.layers[0]}, 0.42);
        CHECK(rep.layer.w == model.layers[0].w);
        CHECK(rep.layer.bias == model.layers[0].bias);
        CHECK(rep.layer.adapter.a == model.layers[0].adapter.a);
        CHECK(rep.layer.adapter.b == model.layers[0].adapter.b);
        CHECK(rep.beta == 0.42);
    }
    SUBCASE("beta 0 is the anchor for any group") {
        const RepresentativeLayer rep = fuse_group({model.layers[0], model.layers[1]}, 0.0);
        CHECK(testutil::models_bitwise_equal(
            LayeredModel{model.input_map, {rep.layer}, model.head, model.shape},
            LayeredModel{model.input_map, {model.layers[0]}, model.head, model.shape}));
    }
    SUBCASE("representative survives a flatten round trip") {
        const RepresentativeLayer rep = fuse_group({model.layers[0], model.layers[1]}, 0.1);
        const LayerParams back = unflatten_layer(flatten_layer(rep.layer), shape);
        CHECK(back.w == rep.layer.w);
        CHECK(back.adapter.a == rep.layer.adapter.a);
    }
    CHECK_THROWS_AS(fuse_group({}, 0.1), std::invalid_argument);
}

TEST_CASE("build_submodel assembles representatives in partition order") {
    ModelShape shape;
    shape.input_dim = 2;
    shape.width = 2;
    shape.output_dim = 2;
    shape.layer_count = 4;
    shape.rank = 1;
    shape.alpha = 2.0;
    const LayeredModel global = random_model(shape, 99);
    const LayeredModel before = global;

    SUBCASE("identity partition reproduces the stack bitwise") {
        const GroupPartition identity = GroupPartition::identity(4);
        const LayeredModel sub =
            build_submodel(global, identity, 0.37, FusionStrategy::Dblf, 7);
        CHECK(testutil::models_bitwise_equal(sub, global));
    }

    SUBCASE("two identical layers fuse to themselves at any beta") {
        LayeredModel twin = global;
        twin.layers[1] = twin.layers[0];
        twin.layers.resize(2);
        twin.shape.layer_count = 2;
        const GroupPartition whole = GroupPartition::from_groups({{0, 1}}, 2);
        const LayeredModel sub = build_submodel(twin, whole, 0.83, FusionStrategy::Dblf, 7);
        REQUIRE(sub.layer_count() == 1);
        CHECK(sub.layers[0].w == twin.layers[0].w);
        CHECK(sub.layers[0].adapter.a == twin.layers[0].adapter.a);
        CHECK(sub.layers[0].adapter.b == twin.layers[0].adapter.b);
        CHECK(sub.layers[0].bias == twin.layers[0].bias);
    }

    SUBCASE("hand-checked two-group fusion at beta 0.1") {
        const GroupPartition partition = GroupPartition::from_groups({{0, 1}, {2, 3}}, 4);
        const double beta = 0.1;
        const LayeredModel sub =
            build_submodel(global, partition, beta, FusionStrategy::Dblf, 7);
        REQUIRE(sub.layer_count() == 2);
        for (int g = 0; g < 2; ++g) {
            const DenseVector anchor = flatten_layer(global.layers[static_cast<std::size_t>(2 * g)]);
            const DenseVector other = flatten_layer(global.layers[static_cast<std::size_t>(2 * g + 1)]);
            const DenseVector rep = flatten_layer(sub.layers[static_cast<std::size_t>(g)]);
            for (std::size_t i = 0; i < anchor.size(); ++i)
                CHECK(rep[i] == doctest::Approx(anchor[i] + beta * (other[i] - anchor[i]))
                                    .epsilon(1e-12));
        }
        // Input map and head are carried over unchanged.
        CHECK(sub.input_map == global.input_map);
        CHECK(sub.head == global.head);
    }

    SUBCASE("submodel forward pass is well-formed for every strategy") {
        const GroupPartition partition = GroupPartition::from_groups({{0, 3}, {1}, {2}}, 4);
        Matrix x(3, shape.input_dim);
        Rng rng(1);
        for (auto& v : x.values()) v = rng.normal();
        for (const auto strategy :
             {FusionStrategy::Dblf, FusionStrategy::Sum, FusionStrategy::ROne}) {
            const LayeredModel sub = build_submodel(global, partition, 0.1, strategy, 7);
            CHECK(sub.layer_count() == 3);
            const ForwardResult fwd = forward(sub, x);
            CHECK(fwd.predictions.rows() == 3);
            CHECK(fwd.predictions.cols() == shape.output_dim);
        }
    }

    // The source model is never mutated by submodel construction.
    CHECK(testutil::models_bitwise_equal(global, before));
}

TEST_CASE("fusion strategies label provenance") {
    ModelShape shape;
    shape.input_dim = 2;
    shape.width = 2;
    shape.output_dim = 1;
    shape.layer_count = 4;
    shape.rank = 1;
    shape.alpha = 2.0;
    const LayeredModel global = random_model(shape, 3);
    const GroupPartition partition = GroupPartition::from_groups({{0, 1}, {2, 3}}, 4);
    const auto reps = fuse_partition(global, partition, 0.15, FusionStrategy::Dblf, 11);
    REQUIRE(reps.size() == 2);
    CHECK(reps[0].group_id == 0);
    CHECK(reps[1].group_id == 1);
    CHECK(reps[0].beta == 0.15);

    // r_one picks a member of the right group, reproducibly.
    const auto picked = fuse_partition(global, partition, 0.15, FusionStrategy::ROne, 11);
    const auto picked_again = fuse_partition(global, partition, 0.15, FusionStrategy::ROne, 11);
    for (int g = 0; g < 2; ++g) {
        const DenseVector flat = flatten_layer(picked[static_cast<std::size_t>(g)].layer);
        bool member = false;
        for (int layer : partition.groups()[static_cast<std::size_t>(g)])
            member |= (flat == flatten_layer(global.layers[static_cast<std::size_t>(layer)]));
        CHECK(member);
        CHECK(flat == flatten_layer(picked_again[static_cast<std::size_t>(g)].layer));
    }
}
