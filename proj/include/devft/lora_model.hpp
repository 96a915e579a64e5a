// SPDX-License-Identifier: Apache-2.0

#ifndef DEVFT_LORA_MODEL_HPP
#define DEVFT_LORA_MODEL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "devft/matrix.hpp"

namespace devft {

enum class Activation { Tanh, Identity };

std::string activation_name(Activation act);
Activation activation_from_name(const std::string& name);

// Trainable low-rank factors on top of a frozen weight matrix; the effective
// update is (alpha/rank) * B * A.
struct LoraAdapter {
    Matrix a;  // rank x d_in
    Matrix b;  // d_out x rank
    int rank = 0;
    double alpha = 0.0;
};

// One residual block: h <- h + act(W_eff h + bias). Base tensors are frozen;
// the adapter is the only gradient-carrying state.
struct LayerParams {
    Matrix w;  // d_out x d_in, frozen
    DenseVector bias;
    LoraAdapter adapter;
    Activation activation = Activation::Tanh;

    std::size_t d_out() const { return w.rows(); }
    std::size_t d_in() const { return w.cols(); }
};

struct ModelShape {
    std::size_t input_dim = 0;
    std::size_t width = 0;  // shared by all hidden layers so any two layers fuse
    std::size_t output_dim = 0;
    std::size_t layer_count = 0;
    int rank = 0;
    double alpha = 0.0;
    Activation activation = Activation::Tanh;
    // Fraction of each base layer drawn from a shared template, in [0, 1).
    // Pretrained stacks have strongly similar layers; 0 gives fully
    // independent layers.
    double layer_coupling = 0.8;

    std::size_t layer_vector_length() const {
        return width * width + width + static_cast<std::size_t>(rank) * width * 2;
    }
    bool operator==(const ModelShape&) const = default;
};

struct LayeredModel {
    Matrix input_map;  // width x input_dim, frozen
    std::vector<LayerParams> layers;
    Matrix head;  // output_dim x width, frozen
    ModelShape shape;

    std::size_t layer_count() const { return layers.size(); }
};

struct Batch {
    Matrix inputs;   // n x input_dim
    Matrix targets;  // n x output_dim
};

struct ForwardCache {
    Matrix embedded;                    // n x width
    std::vector<Matrix> preactivations; // per layer, n x width
    std::vector<Matrix> hidden;         // per layer, n x width (post-residual)
};

struct ForwardResult {
    Matrix predictions;  // n x output_dim
    ForwardCache cache;
};

struct AdapterGrads {
    Matrix a;  // rank x d_in
    Matrix b;  // d_out x rank
};

struct LossAndGrads {
    double loss = 0.0;
    std::vector<AdapterGrads> grads;  // one per layer; base W and bias carry none
};

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
};

struct AdapterMoments {
    Matrix m_a, v_a, m_b, v_b;
};

struct OptimizerState {
    std::vector<AdapterMoments> moments;  // shapes mirror the adapters
    std::int64_t step = 0;
    AdamWConfig config;
};

/// Base model from a seed: input map, W, bias ~ N(0, 1/sqrt(fan_in)); adapter
/// A ~ U(-1/sqrt(d_in), 1/sqrt(d_in)), B = 0 so the initial effective model
/// equals the base model.
LayeredModel random_model(const ModelShape& shape, std::uint64_t seed);

/// W + (alpha/rank) * B * A.
Matrix effective_weight(const LayerParams& layer);

ForwardResult forward(const LayeredModel& model, const Matrix& inputs);

/// Mean squared error over all target entries, with exact hand-derived
/// gradients for every adapter (and only for adapters).
LossAndGrads loss_and_grads(const LayeredModel& model, const Batch& batch);

OptimizerState make_optimizer_state(const LayeredModel& model, const AdamWConfig& config);

/// Decoupled-weight-decay Adam update on adapter parameters only.
void optimizer_step(OptimizerState& state, LayeredModel& model,
                    const std::vector<AdapterGrads>& grads);

/// vec(W) row-major, then bias, then vec(A), then vec(B). alpha and rank are
/// shared metadata and stay out of the vector.
DenseVector flatten_layer(const LayerParams& layer);

/// Exact inverse of flatten_layer for the given shape.
LayerParams unflatten_layer(const DenseVector& v, const ModelShape& shape);

}  // namespace devft

#endif  // DEVFT_LORA_MODEL_HPP
