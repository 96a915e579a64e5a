// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "devft/lora_model.hpp"
#include "devft/rng.hpp"

using namespace devft;

namespace {

ModelShape tiny_shape(std::size_t layers, std::size_t width, int rank) {
    ModelShape s;
    s.input_dim = 3;
    s.width = width;
    s.output_dim = 2;
    s.layer_count = layers;
    s.rank = rank;
    s.alpha = 2.0 * rank;
    s.activation = Activation::Tanh;
    return s;
}

Batch random_batch(const ModelShape& shape, std::size_t n, Rng& rng) {
    Batch batch;
    batch.inputs = Matrix(n, shape.input_dim);
    batch.targets = Matrix(n, shape.output_dim);
    for (auto& v : batch.inputs.values()) v = rng.normal();
    for (auto& v : batch.targets.values()) v = rng.normal();
    return batch;
}

// Plain-loop forward pass, no shared matrix helpers: the oracle for forward().
Matrix loop_forward(const LayeredModel& model, const Matrix& inputs) {
    const std::size_t n = inputs.rows();
    const std::size_t width = model.shape.width;
    std::vector<std::vector<double>> h(n, std::vector<double>(width, 0.0));
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t i = 0; i < width; ++i)
            for (std::size_t j = 0; j < model.shape.input_dim; ++j)
                h[s][i] += model.input_map(i, j) * inputs(s, j);

    for (const auto& layer : model.layers) {
        const double scale = layer.adapter.alpha / layer.adapter.rank;
        for (std::size_t s = 0; s < n; ++s) {
            std::vector<double> z(width, 0.0);
            for (std::size_t i = 0; i < width; ++i) {
                for (std::size_t j = 0; j < width; ++j) {
                    double w = layer.w(i, j);
                    for (int r = 0; r < layer.adapter.rank; ++r)
                        w += scale * layer.adapter.b(i, static_cast<std::size_t>(r)) *
                             layer.adapter.a(static_cast<std::size_t>(r), j);
                    z[i] += w * h[s][j];
                }
                z[i] += layer.bias[i];
            }
            for (std::size_t i = 0; i < width; ++i)
                h[s][i] += layer.activation == Activation::Tanh ? std::tanh(z[i]) : z[i];
        }
    }

    Matrix out(n, model.shape.output_dim);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t o = 0; o < model.shape.output_dim; ++o)
            for (std::size_t i = 0; i < width; ++i) out(s, o) += model.head(o, i) * h[s][i];
    return out;
}

double loss_only(const LayeredModel& model, const Batch& batch) {
    return loss_and_grads(model, batch).loss;
}

}  // namespace

TEST_CASE("effective weight composition") {
    LayerParams layer;
    layer.w = Matrix(2, 2);
    layer.bias = {0.0, 0.0};
    layer.adapter.rank = 1;
    layer.adapter.alpha = 1.0;
    layer.adapter.a = Matrix(1, 2);
    layer.adapter.b = Matrix(2, 1);

    SUBCASE("zero factors leave the base") {
        layer.w(0, 0) = 3.0;
        layer.w(1, 1) = -2.0;
        const Matrix w = effective_weight(layer);
        CHECK(w == layer.w);
    }
    SUBCASE("rank-1 outer product") {
        layer.adapter.a(0, 0) = 1.0;  // A = [[1, 0]]
        layer.adapter.b(0, 0) = 2.0;  // B = [[2], [0]]
        const Matrix w = effective_weight(layer);
        CHECK(w(0, 0) == doctest::Approx(2.0));
        CHECK(w(0, 1) == 0.0);
        CHECK(w(1, 0) == 0.0);
        CHECK(w(1, 1) == 0.0);
    }
}

TEST_CASE("forward matches the loop oracle and basic identities") {
    const ModelShape shape = tiny_shape(2, 4, 2);
    const LayeredModel model = random_model(shape, 0);
    Rng rng(100);
    const Batch batch = random_batch(shape, 5, rng);

    const ForwardResult fwd = forward(model, batch.inputs);
    const Matrix expected = loop_forward(model, batch.inputs);
    REQUIRE(fwd.predictions.rows() == expected.rows());
    for (std::size_t i = 0; i < expected.size(); ++i)
        CHECK(fwd.predictions.values()[i] == doctest::Approx(expected.values()[i]).epsilon(1e-12));

    // Odd activation at zero input and zero bias gives zero output.
    LayeredModel zeroed = model;
    for (auto& layer : zeroed.layers) std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
    Matrix zero_in(3, shape.input_dim);
    const ForwardResult zf = forward(zeroed, zero_in);
    for (double v : zf.predictions.values()) CHECK(v == 0.0);

    // Bitwise repeatability.
    const ForwardResult again = forward(model, batch.inputs);
    CHECK(again.predictions == fwd.predictions);

    Matrix bad(2, shape.input_dim + 1);
    CHECK_THROWS_AS(forward(model, bad), std::invalid_argument);
}

TEST_CASE("identity one-layer model passes the embedded input through") {
    ModelShape shape = tiny_shape(1, 3, 1);
    shape.input_dim = 3;
    shape.output_dim = 3;
    shape.activation = Activation::Identity;
    LayeredModel model = random_model(shape, 1);
    model.input_map = Matrix::identity(3);
    model.head = Matrix::identity(3);
    auto& layer = model.layers[0];
    layer.w = Matrix(3, 3);  // zero block => residual passes h through
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
    layer.adapter.a = Matrix(1, 3);
    layer.adapter.b = Matrix(3, 1);

    Matrix x(2, 3);
    x(0, 0) = 1.5; x(0, 1) = -2.0; x(0, 2) = 0.25;
    x(1, 0) = 0.0; x(1, 1) = 3.0;  x(1, 2) = -1.0;
    const ForwardResult out = forward(model, x);
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(out.predictions.values()[i] == doctest::Approx(x.values()[i]));
}

TEST_CASE("loss is zero at the targets and gradients vanish") {
    const ModelShape shape = tiny_shape(2, 4, 2);
    const LayeredModel model = random_model(shape, 3);
    Rng rng(4);
    Batch batch = random_batch(shape, 4, rng);
    batch.targets = forward(model, batch.inputs).predictions;

    const LossAndGrads lg = loss_and_grads(model, batch);
    CHECK(lg.loss == doctest::Approx(0.0));
    for (const auto& g : lg.grads) {
        for (double v : g.a.values()) CHECK(v == doctest::Approx(0.0));
        for (double v : g.b.values()) CHECK(v == doctest::Approx(0.0));
    }

    Batch empty;
    empty.inputs = Matrix(0, shape.input_dim);
    empty.targets = Matrix(0, shape.output_dim);
    CHECK_THROWS_AS(loss_and_grads(model, empty), std::invalid_argument);
}

TEST_CASE("batch replication leaves loss and gradients unchanged") {
    const ModelShape shape = tiny_shape(2, 4, 2);
    const LayeredModel model = random_model(shape, 5);
    Rng rng(6);
    const Batch batch = random_batch(shape, 3, rng);

    Batch doubled;
    doubled.inputs = Matrix(6, shape.input_dim);
    doubled.targets = Matrix(6, shape.output_dim);
    for (std::size_t rep = 0; rep < 2; ++rep)
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < shape.input_dim; ++j)
                doubled.inputs(rep * 3 + i, j) = batch.inputs(i, j);
            for (std::size_t j = 0; j < shape.output_dim; ++j)
                doubled.targets(rep * 3 + i, j) = batch.targets(i, j);
        }

    const LossAndGrads a = loss_and_grads(model, batch);
    const LossAndGrads b = loss_and_grads(model, doubled);
    CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
    for (std::size_t l = 0; l < a.grads.size(); ++l)
        for (std::size_t i = 0; i < a.grads[l].a.size(); ++i)
            CHECK(a.grads[l].a.values()[i] ==
                  doctest::Approx(b.grads[l].a.values()[i]).epsilon(1e-12));
}

TEST_CASE("adapter gradients match central finite differences") {
    Rng seeds(42);
    for (int trial = 0; trial < 6; ++trial) {
        ModelShape shape = tiny_shape(1 + seeds.uniform_index(8), 2 + seeds.uniform_index(15),
                                      1 + static_cast<int>(seeds.uniform_index(2)));
        shape.rank = std::min<int>(shape.rank, static_cast<int>(shape.width));
        LayeredModel model = random_model(shape, seeds.next_u64());
        // Warm the B factors so their gradient paths are live.
        Rng warm(seeds.next_u64());
        for (auto& layer : model.layers)
            for (auto& v : layer.adapter.b.values()) v = warm.normal(0.0, 0.3);

        Rng rng(seeds.next_u64());
        const Batch batch = random_batch(shape, 4, rng);
        const LossAndGrads lg = loss_and_grads(model, batch);

        const double h = 1e-5;
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            auto check_entries = [&](Matrix& param, const Matrix& grad) {
                for (std::size_t i = 0; i < param.size(); ++i) {
                    const double keep = param.values()[i];
                    param.values()[i] = keep + h;
                    const double up = loss_only(model, batch);
                    param.values()[i] = keep - h;
                    const double down = loss_only(model, batch);
                    param.values()[i] = keep;
                    const double fd = (up - down) / (2.0 * h);
                    const double scale = std::max({1e-6, std::abs(fd), std::abs(grad.values()[i])});
                    CHECK(std::abs(grad.values()[i] - fd) / scale <= 1e-4);
                }
            };
            check_entries(model.layers[l].adapter.a, lg.grads[l].a);
            check_entries(model.layers[l].adapter.b, lg.grads[l].b);
        }
    }
}

TEST_CASE("adamw single step closed form and no-op cases") {
    const ModelShape shape = tiny_shape(1, 3, 1);
    LayeredModel model = random_model(shape, 9);
    AdamWConfig cfg;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.0;
    OptimizerState state = make_optimizer_state(model, cfg);

    std::vector<AdapterGrads> zero(1);
    zero[0].a = Matrix(1, 3);
    zero[0].b = Matrix(3, 1);
    const LayeredModel before = model;
    optimizer_step(state, model, zero);
    CHECK(model.layers[0].adapter.a == before.layers[0].adapter.a);
    CHECK(model.layers[0].adapter.b == before.layers[0].adapter.b);

    // One step from fresh moments: delta = -lr * g / (|g| + eps).
    LayeredModel stepped = before;
    OptimizerState fresh = make_optimizer_state(stepped, cfg);
    std::vector<AdapterGrads> grads(1);
    grads[0].a = Matrix(1, 3);
    grads[0].b = Matrix(3, 1);
    Rng rng(77);
    for (auto& v : grads[0].a.values()) v = rng.normal();
    for (auto& v : grads[0].b.values()) v = rng.normal();
    optimizer_step(fresh, stepped, grads);
    for (std::size_t i = 0; i < grads[0].a.size(); ++i) {
        const double g = grads[0].a.values()[i];
        const double expected =
            before.layers[0].adapter.a.values()[i] - cfg.lr * g / (std::abs(g) + cfg.epsilon);
        CHECK(stepped.layers[0].adapter.a.values()[i] == doctest::Approx(expected).epsilon(1e-12));
    }

    // Determinism: same model, grads, state => bit-identical parameters.
    LayeredModel twin = before;
    OptimizerState twin_state = make_optimizer_state(twin, cfg);
    optimizer_step(twin_state, twin, grads);
    CHECK(twin.layers[0].adapter.a == stepped.layers[0].adapter.a);
    CHECK(twin.layers[0].adapter.b == stepped.layers[0].adapter.b);
}

TEST_CASE("base weights stay bitwise frozen across many optimizer steps") {
    const ModelShape shape = tiny_shape(3, 5, 2);
    LayeredModel model = random_model(shape, 13);
    const LayeredModel original = model;
    AdamWConfig cfg;
    cfg.lr = 0.05;
    cfg.weight_decay = 0.01;
    OptimizerState state = make_optimizer_state(model, cfg);
    Rng rng(14);
    for (int step = 0; step < 25; ++step) {
        const Batch batch = random_batch(shape, 4, rng);
        const LossAndGrads lg = loss_and_grads(model, batch);
        optimizer_step(state, model, lg.grads);
    }
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        CHECK(model.layers[l].w == original.layers[l].w);
        CHECK(model.layers[l].bias == original.layers[l].bias);
    }
    CHECK(model.input_map == original.input_map);
    CHECK(model.head == original.head);
}

TEST_CASE("flatten layout and round trips") {
    ModelShape shape;
    shape.input_dim = 2;
    shape.width = 2;
    shape.output_dim = 2;
    shape.layer_count = 1;
    shape.rank = 1;
    shape.alpha = 2.0;

    LayerParams layer;
    layer.w = Matrix(2, 2);
    layer.w(0, 0) = 1.0; layer.w(0, 1) = 2.0; layer.w(1, 0) = 3.0; layer.w(1, 1) = 4.0;
    layer.bias = {5.0, 6.0};
    layer.adapter.rank = 1;
    layer.adapter.alpha = 2.0;
    layer.adapter.a = Matrix(1, 2);
    layer.adapter.a(0, 0) = 7.0; layer.adapter.a(0, 1) = 8.0;
    layer.adapter.b = Matrix(2, 1);
    layer.adapter.b(0, 0) = 9.0; layer.adapter.b(1, 0) = 10.0;

    const DenseVector flat = flatten_layer(layer);
    CHECK(flat == DenseVector{1, 2, 3, 4, 5, 6, 7, 8, 9, 10});

    const LayerParams back = unflatten_layer(flat, shape);
    CHECK(back.w == layer.w);
    CHECK(back.bias == layer.bias);
    CHECK(back.adapter.a == layer.adapter.a);
    CHECK(back.adapter.b == layer.adapter.b);
    CHECK(flatten_layer(back) == flat);

    DenseVector wrong(flat.size() + 1, 0.0);
    CHECK_THROWS_AS(unflatten_layer(wrong, shape), std::invalid_argument);

    // Two layers equal except the adapter differ exactly in the adapter segment.
    LayerParams other = layer;
    other.adapter.a(0, 1) = -8.0;
    const DenseVector flat_other = flatten_layer(other);
    for (std::size_t i = 0; i < flat.size(); ++i) {
        if (i == 7)
            CHECK(flat[i] != flat_other[i]);
        else
            CHECK(flat[i] == flat_other[i]);
    }
}

TEST_CASE("unflatten of flatten is identity on random layers") {
    Rng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        ModelShape shape = tiny_shape(1, 2 + rng.uniform_index(6),
                                      1 + static_cast<int>(rng.uniform_index(3)));
        shape.rank = std::min<int>(shape.rank, static_cast<int>(shape.width));
        const LayeredModel model = random_model(shape, rng.next_u64());
        const LayerParams& layer = model.layers[0];
        const LayerParams back = unflatten_layer(flatten_layer(layer), shape);
        CHECK(back.w == layer.w);
        CHECK(back.bias == layer.bias);
        CHECK(back.adapter.a == layer.adapter.a);
        CHECK(back.adapter.b == layer.adapter.b);
    }
}
