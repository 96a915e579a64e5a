// SPDX-License-Identifier: Apache-2.0

#include "devft/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace devft {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.values()}};
}

Matrix matrix_from_json(const json& j) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    const auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != m.size()) throw std::runtime_error("checkpoint: tensor size mismatch");
    m.values() = data;
    return m;
}

}  // namespace

std::string model_to_checkpoint_json(
    const LayeredModel& model, std::uint64_t seed,
    const std::vector<std::optional<LayerProvenance>>& provenance) {
    json j;
    j["format"] = "devft-model";
    j["version"] = 1;
    j["seed"] = seed;
    j["shape"] = json{{"layers", model.shape.layer_count},
                      {"width", model.shape.width},
                      {"input_dim", model.shape.input_dim},
                      {"output_dim", model.shape.output_dim},
                      {"rank", model.shape.rank},
                      {"alpha", model.shape.alpha},
                      {"activation", activation_name(model.shape.activation)}};
    j["input_map"] = matrix_to_json(model.input_map);
    j["head"] = matrix_to_json(model.head);
    j["layers"] = json::array();
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const auto& layer = model.layers[i];
        json lj;
        lj["w"] = matrix_to_json(layer.w);
        lj["bias"] = layer.bias;
        lj["lora_a"] = matrix_to_json(layer.adapter.a);
        lj["lora_b"] = matrix_to_json(layer.adapter.b);
        if (i < provenance.size() && provenance[i]) {
            lj["group_id"] = provenance[i]->group_id;
            lj["beta"] = provenance[i]->beta;
        }
        j["layers"].push_back(std::move(lj));
    }
    return j.dump();
}

CheckpointContents model_from_checkpoint_json(const std::string& text) {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != "devft-model")
        throw std::runtime_error("checkpoint: unrecognized format tag");

    CheckpointContents out;
    out.seed = j.at("seed").get<std::uint64_t>();
    const json& shape = j.at("shape");
    out.model.shape.layer_count = shape.at("layers").get<std::size_t>();
    out.model.shape.width = shape.at("width").get<std::size_t>();
    out.model.shape.input_dim = shape.at("input_dim").get<std::size_t>();
    out.model.shape.output_dim = shape.at("output_dim").get<std::size_t>();
    out.model.shape.rank = shape.at("rank").get<int>();
    out.model.shape.alpha = shape.at("alpha").get<double>();
    out.model.shape.activation = activation_from_name(shape.at("activation").get<std::string>());
    out.model.input_map = matrix_from_json(j.at("input_map"));
    out.model.head = matrix_from_json(j.at("head"));

    for (const auto& lj : j.at("layers")) {
        LayerParams layer;
        layer.w = matrix_from_json(lj.at("w"));
        layer.bias = lj.at("bias").get<std::vector<double>>();
        layer.adapter.a = matrix_from_json(lj.at("lora_a"));
        layer.adapter.b = matrix_from_json(lj.at("lora_b"));
        layer.adapter.rank = out.model.shape.rank;
        layer.adapter.alpha = out.model.shape.alpha;
        layer.activation = out.model.shape.activation;
        if (lj.contains("group_id"))
            out.provenance.push_back(
                LayerProvenance{lj.at("group_id").get<int>(), lj.at("beta").get<double>()});
        else
            out.provenance.push_back(std::nullopt);
        out.model.layers.push_back(std::move(layer));
    }
    if (out.model.layers.size() != out.model.shape.layer_count)
        throw std::runtime_error("checkpoint: layer count does not match shape");
    return out;
}

void save_checkpoint(const std::string& path, const LayeredModel& model, std::uint64_t seed,
                     const std::vector<std::optional<LayerProvenance>>& provenance) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
    out << model_to_checkpoint_json(model, seed, provenance);
}

CheckpointContents load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return model_from_checkpoint_json(buffer.str());
}

}  // namespace devft
