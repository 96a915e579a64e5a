// SPDX-License-Identifier: Apache-2.0

#include "devft/lora_model.hpp"

#include <cmath>
#include <stdexcept>

#include "devft/rng.hpp"

namespace devft {

std::string activation_name(Activation act) {
    switch (act) {
        case Activation::Tanh: return "tanh";
        case Activation::Identity: return "identity";
    }
    throw std::logic_error("activation_name: unknown tag");
}

Activation activation_from_name(const std::string& name) {
    if (name == "tanh") return Activation::Tanh;
    if (name == "identity") return Activation::Identity;
    throw std::invalid_argument("unknown activation '" + name + "' (expected tanh|identity)");
}

namespace {

double apply_activation(Activation act, double x) {
    return act == Activation::Tanh ? std::tanh(x) : x;
}

// Derivative expressed through the activation output; for tanh that is 1 - y^2.
double activation_derivative(Activation act, double y) {
    return act == Activation::Tanh ? 1.0 - y * y : 1.0;
}

void check_adapter_shapes(const LayerParams& layer) {
    const auto r = static_cast<std::size_t>(layer.adapter.rank);
    if (layer.adapter.a.rows() != r || layer.adapter.a.cols() != layer.d_in() ||
        layer.adapter.b.rows() != layer.d_out() || layer.adapter.b.cols() != r)
        throw std::invalid_argument("adapter shape does not match layer");
}

}  // namespace

LayeredModel random_model(const ModelShape& shape, std::uint64_t seed) {
    if (shape.width == 0 || shape.input_dim == 0 || shape.output_dim == 0 ||
        shape.layer_count == 0)
        throw std::invalid_argument("random_model: zero dimension");
    if (shape.rank < 1 || static_cast<std::size_t>(shape.rank) > shape.width)
        throw std::invalid_argument("random_model: rank must be in [1, width]");
    if (shape.layer_coupling < 0.0 || shape.layer_coupling >= 1.0)
        throw std::invalid_argument("random_model: layer_coupling must be in [0, 1)");

    Rng rng(derive_seed({seed, 0x6d6f64656cULL}));  // per-model stream
    LayeredModel model;
    model.shape = shape;

    const double embed_scale = 1.0 / std::sqrt(static_cast<double>(shape.input_dim));
    model.input_map = Matrix(shape.width, shape.input_dim);
    for (auto& v : model.input_map.values()) v = rng.normal(0.0, embed_scale);

    const double layer_scale = 1.0 / std::sqrt(static_cast<double>(shape.width));
    const double adapter_bound = 1.0 / std::sqrt(static_cast<double>(shape.width));

    // Base layers mix a shared template with per-layer noise, variance
    // preserved: W_i = sqrt(c) * W_shared + sqrt(1-c) * W_own. The expected
    // inter-layer cosine similarity is about c, mimicking a pretrained stack.
    const double shared_mix = std::sqrt(shape.layer_coupling);
    const double own_mix = std::sqrt(1.0 - shape.layer_coupling);
    Matrix w_shared(shape.width, shape.width);
    for (auto& v : w_shared.values()) v = rng.normal(0.0, layer_scale);
    DenseVector bias_shared(shape.width);
    for (auto& v : bias_shared) v = rng.normal(0.0, layer_scale);

    model.layers.reserve(shape.layer_count);
    for (std::size_t i = 0; i < shape.layer_count; ++i) {
        LayerParams layer;
        layer.activation = shape.activation;
        layer.w = Matrix(shape.width, shape.width);
        for (std::size_t j = 0; j < layer.w.size(); ++j)
            layer.w.values()[j] =
                shared_mix * w_shared.values()[j] + own_mix * rng.normal(0.0, layer_scale);
        layer.bias.resize(shape.width);
        for (std::size_t j = 0; j < shape.width; ++j)
            layer.bias[j] = shared_mix * bias_shared[j] + own_mix * rng.normal(0.0, layer_scale);
        layer.adapter.rank = shape.rank;
        layer.adapter.alpha = shape.alpha;
        layer.adapter.a = Matrix(static_cast<std::size_t>(shape.rank), shape.width);
        for (auto& v : layer.adapter.a.values()) v = rng.uniform(-adapter_bound, adapter_bound);
        layer.adapter.b = Matrix(shape.width, static_cast<std::size_t>(shape.rank));
        model.layers.push_back(std::move(layer));
    }

    const double head_scale = 1.0 / std::sqrt(static_cast<double>(shape.width));
    model.head = Matrix(shape.output_dim, shape.width);
    for (auto& v : model.head.values()) v = rng.normal(0.0, head_scale);
    return model;
}

Matrix effective_weight(const LayerParams& layer) {
    check_adapter_shapes(layer);
    Matrix w = layer.w;
    const double scale = layer.adapter.alpha / static_cast<double>(layer.adapter.rank);
    const Matrix delta = matmul(layer.adapter.b, layer.adapter.a);
    for (std::size_t i = 0; i < w.size(); ++i) w.values()[i] += scale * delta.values()[i];
    return w;
}

ForwardResult forward(const LayeredModel& model, const Matrix& inputs) {
    if (inputs.cols() != model.shape.input_dim)
        throw std::invalid_argument("forward: input dimension mismatch");
    const std::size_t n = inputs.rows();
    const std::size_t width = model.shape.width;

    ForwardResult result;
    result.cache.embedded = matmul(inputs, transpose(model.input_map));  // n x width
    result.cache.preactivations.reserve(model.layers.size());
    result.cache.hidden.reserve(model.layers.size());

    Matrix h = result.cache.embedded;
    for (const auto& layer : model.layers) {
        const Matrix w_eff_t = transpose(effective_weight(layer));
        Matrix z = matmul(h, w_eff_t);  // n x width
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < width; ++j) z(i, j) += layer.bias[j];
        Matrix next = h;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < width; ++j)
                next(i, j) += apply_activation(layer.activation, z(i, j));
        result.cache.preactivations.push_back(std::move(z));
        h = next;
        result.cache.hidden.push_back(std::move(next));
    }
    result.predictions = matmul(h, transpose(model.head));  // n x output_dim
    return result;
}

LossAndGrads loss_and_grads(const LayeredModel& model, const Batch& batch) {
    if (batch.inputs.rows() == 0) throw std::invalid_argument("loss_and_grads: empty batch");
    if (batch.targets.rows() != batch.inputs.rows() ||
        batch.targets.cols() != model.shape.output_dim)
        throw std::invalid_argument("loss_and_grads: target shape mismatch");

    const ForwardResult fwd = forward(model, batch.inputs);
    const std::size_t n = batch.inputs.rows();
    const std::size_t width = model.shape.width;
    const double denom = static_cast<double>(n * model.shape.output_dim);

    LossAndGrads out;
    Matrix pred_grad(n, model.shape.output_dim);  // dLoss/dPredictions
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < model.shape.output_dim; ++j) {
            const double diff = fwd.predictions(i, j) - batch.targets(i, j);
            out.loss += diff * diff / denom;
            pred_grad(i, j) = 2.0 * diff / denom;
        }
    }

    Matrix h_grad = matmul(pred_grad, model.head);  // n x width
    out.grads.resize(model.layers.size());
    for (std::size_t li = model.layers.size(); li-- > 0;) {
        const LayerParams& layer = model.layers[li];
        const Matrix& z = fwd.cache.preactivations[li];
        const Matrix& h_in = li == 0 ? fwd.cache.embedded : fwd.cache.hidden[li - 1];

        Matrix z_grad(n, width);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < width; ++j) {
                const double y = apply_activation(layer.activation, z(i, j));
                z_grad(i, j) = h_grad(i, j) * activation_derivative(layer.activation, y);
            }

        const Matrix w_eff_grad = matmul(transpose(z_grad), h_in);  // width x width
        const double scale = layer.adapter.alpha / static_cast<double>(layer.adapter.rank);
        AdapterGrads g;
        g.b = matmul(w_eff_grad, transpose(layer.adapter.a));  // d_out x rank
        g.a = matmul(transpose(layer.adapter.b), w_eff_grad);  // rank x d_in
        for (auto& v : g.a.values()) v *= scale;
        for (auto& v : g.b.values()) v *= scale;
        out.grads[li] = std::move(g);

        // dLoss/dh_in = dLoss/dh_out + W_eff^T dLoss/dz (residual path + block path).
        const Matrix back = matmul(z_grad, effective_weight(layer));
        for (std::size_t i = 0; i < h_grad.size(); ++i) h_grad.values()[i] += back.values()[i];
    }
    return out;
}

OptimizerState make_optimizer_state(const LayeredModel& model, const AdamWConfig& config) {
    OptimizerState state;
    state.config = config;
    state.moments.reserve(model.layers.size());
    for (const auto& layer : model.layers) {
        AdapterMoments m;
        m.m_a = Matrix(layer.adapter.a.rows(), layer.adapter.a.cols());
        m.v_a = m.m_a;
        m.m_b = Matrix(layer.adapter.b.rows(), layer.adapter.b.cols());
        m.v_b = m.m_b;
        state.moments.push_back(std::move(m));
    }
    return state;
}

namespace {

void adamw_update(Matrix& param, Matrix& m, Matrix& v, const Matrix& grad,
                  const AdamWConfig& cfg, double bias1, double bias2) {
    if (!param.same_shape(grad)) throw std::invalid_argument("optimizer_step: gradient shape mismatch");
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad.values()[i];
        m.values()[i] = cfg.beta1 * m.values()[i] + (1.0 - cfg.beta1) * g;
        v.values()[i] = cfg.beta2 * v.values()[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = m.values()[i] / bias1;
        const double v_hat = v.values()[i] / bias2;
        param.values()[i] -=
            cfg.lr * (m_hat / (std::sqrt(v_hat) + cfg.epsilon) + cfg.weight_decay * param.values()[i]);
    }
}

}  // namespace

void optimizer_step(OptimizerState& state, LayeredModel& model,
                    const std::vector<AdapterGrads>& grads) {
    if (grads.size() != model.layers.size() || state.moments.size() != model.layers.size())
        throw std::invalid_argument("optimizer_step: layer count mismatch");
    ++state.step;
    const double bias1 = 1.0 - std::pow(state.config.beta1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(state.config.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        adamw_update(model.layers[i].adapter.a, state.moments[i].m_a, state.moments[i].v_a,
                     grads[i].a, state.config, bias1, bias2);
        adamw_update(model.layers[i].adapter.b, state.moments[i].m_b, state.moments[i].v_b,
                     grads[i].b, state.config, bias1, bias2);
    }
}

DenseVector flatten_layer(const LayerParams& layer) {
    DenseVector v;
    v.reserve(layer.w.size() + layer.bias.size() + layer.adapter.a.size() + layer.adapter.b.size());
    v.insert(v.end(), layer.w.values().begin(), layer.w.values().end());
    v.insert(v.end(), layer.bias.begin(), layer.bias.end());
    v.insert(v.end(), layer.adapter.a.values().begin(), layer.adapter.a.values().end());
    v.insert(v.end(), layer.adapter.b.values().begin(), layer.adapter.b.values().end());
    return v;
}

LayerParams unflatten_layer(const DenseVector& v, const ModelShape& shape) {
    if (v.size() != shape.layer_vector_length())
        throw std::invalid_argument("unflatten_layer: length does not match shape spec");
    LayerParams layer;
    layer.activation = shape.activation;
    layer.w = Matrix(shape.width, shape.width);
    layer.bias.resize(shape.width);
    layer.adapter.rank = shape.rank;
    layer.adapter.alpha = shape.alpha;
    layer.adapter.a = Matrix(static_cast<std::size_t>(shape.rank), shape.width);
    layer.adapter.b = Matrix(shape.width, static_cast<std::size_t>(shape.rank));

    auto it = v.begin();
    std::copy(it, it + static_cast<std::ptrdiff_t>(layer.w.size()), layer.w.values().begin());
    it += static_cast<std::ptrdiff_t>(layer.w.size());
    std::copy(it, it + static_cast<std::ptrdiff_t>(layer.bias.size()), layer.bias.begin());
    it += static_cast<std::ptrdiff_t>(layer.bias.size());
    std::copy(it, it + static_cast<std::ptrdiff_t>(layer.adapter.a.size()),
              layer.adapter.a.values().begin());
    it += static_cast<std::ptrdiff_t>(layer.adapter.a.size());
    std::copy(it, it + static_cast<std::ptrdiff_t>(layer.adapter.b.size()),
              layer.adapter.b.values().begin());
    return layer;
}

}  // namespace devft
