// SPDX-License-Identifier: Apache-2.0

#include "devft/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace devft {

using nlohmann::json;

std::string method_name(Method m) {
    return m == Method::Devft ? "devft" : "end2end";
}

Method method_from_name(const std::string& name) {
    if (name == "devft") return Method::Devft;
    if (name == "end2end") return Method::End2End;
    throw ConfigError("unknown method '" + name + "' (expected devft|end2end)");
}

std::vector<int> generate_capacities(int initial, int growth_rate, int total_layers) {
    if (initial < 1 || initial > total_layers)
        throw ConfigError("initial capacity must be in [1, layers]");
    if (growth_rate < 2) throw ConfigError("growth rate must be at least 2");
    std::vector<int> capacities{initial};
    while (capacities.back() < total_layers)
        capacities.push_back(std::min(capacities.back() * growth_rate, total_layers));
    return capacities;
}

std::vector<int> split_rounds(int total, int stages) {
    if (stages < 1) throw ConfigError("round split: need at least one stage");
    if (total < stages)
        throw ConfigError("round split: total rounds must cover every stage");
    const int base = total / stages;
    const int remainder = total % stages;
    std::vector<int> rounds(static_cast<std::size_t>(stages), base);
    for (int s = 0; s < remainder; ++s) ++rounds[static_cast<std::size_t>(s)];
    return rounds;
}

ExperimentConfig ExperimentConfig::defaults() {
    ExperimentConfig cfg;
    cfg.seed = 0;
    cfg.model.layer_count = 16;
    cfg.model.width = 16;
    cfg.model.input_dim = 8;
    cfg.model.output_dim = 4;
    cfg.model.rank = 4;
    cfg.model.alpha = 8.0;  // alpha = 2 * rank
    cfg.model.activation = Activation::Tanh;
    return cfg;
}

namespace {

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& where) {
    for (const auto& item : obj.items())
        if (known.find(item.key()) == known.end())
            throw ConfigError("unknown field '" + item.key() + "' in " + where);
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("field '") + key + "' has the wrong type");
    }
}

json shape_to_json(const ModelShape& m) {
    return json{{"layers", m.layer_count},   {"width", m.width},
                {"input_dim", m.input_dim},  {"output_dim", m.output_dim},
                {"rank", m.rank},            {"alpha", m.alpha},
                {"activation", activation_name(m.activation)},
                {"layer_coupling", m.layer_coupling}};
}

void shape_from_json(const json& j, ModelShape& m) {
    reject_unknown_keys(j,
                        {"layers", "width", "input_dim", "output_dim", "rank", "alpha",
                         "activation", "layer_coupling"},
                        "model");
    read_field(j, "layers", m.layer_count);
    read_field(j, "layer_coupling", m.layer_coupling);
    read_field(j, "width", m.width);
    read_field(j, "input_dim", m.input_dim);
    read_field(j, "output_dim", m.output_dim);
    read_field(j, "rank", m.rank);
    read_field(j, "alpha", m.alpha);
    if (j.contains("activation")) {
        try {
            m.activation = activation_from_name(j.at("activation").get<std::string>());
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    reject_unknown_keys(j, {"seed", "model", "schedule", "data", "algorithm", "threads"},
                        "config root");

    ExperimentConfig cfg = defaults();
    read_field(j, "seed", cfg.seed);
    read_field(j, "threads", cfg.threads);
    if (j.contains("model")) shape_from_json(j.at("model"), cfg.model);

    if (j.contains("schedule")) {
        const json& s = j.at("schedule");
        reject_unknown_keys(s,
                            {"capacities", "initial_capacity", "growth_rate", "stages",
                             "rounds_per_stage", "total_rounds", "base_lr", "lr_cap",
                             "local_steps", "batch_size", "client_fraction", "weight_decay"},
                            "schedule");
        if (s.contains("capacities"))
            cfg.schedule.capacities = s.at("capacities").get<std::vector<int>>();
        if (s.contains("initial_capacity"))
            cfg.schedule.initial_capacity = s.at("initial_capacity").get<int>();
        read_field(s, "growth_rate", cfg.schedule.growth_rate);
        read_field(s, "stages", cfg.schedule.stages);
        if (s.contains("rounds_per_stage"))
            cfg.schedule.rounds_per_stage = s.at("rounds_per_stage").get<std::vector<int>>();
        read_field(s, "total_rounds", cfg.schedule.total_rounds);
        read_field(s, "base_lr", cfg.schedule.base_lr);
        read_field(s, "lr_cap", cfg.schedule.lr_cap);
        read_field(s, "local_steps", cfg.schedule.local_steps);
        read_field(s, "batch_size", cfg.schedule.batch_size);
        read_field(s, "client_fraction", cfg.schedule.client_fraction);
        read_field(s, "weight_decay", cfg.schedule.weight_decay);
    }

    if (j.contains("data")) {
        const json& d = j.at("data");
        reject_unknown_keys(
            d, {"clients", "samples_per_client", "skew", "noise", "mixture_components"},
            "data");
        read_field(d, "clients", cfg.data.clients);
        read_field(d, "samples_per_client", cfg.data.samples_per_client);
        read_field(d, "skew", cfg.data.skew);
        read_field(d, "noise", cfg.data.noise);
        read_field(d, "mixture_components", cfg.data.mixture_components);
    }

    if (j.contains("algorithm")) {
        const json& a = j.at("algorithm");
        reject_unknown_keys(a, {"method", "grouping", "fusion", "beta"}, "algorithm");
        try {
            if (a.contains("method"))
                cfg.algorithm.method = method_from_name(a.at("method").get<std::string>());
            if (a.contains("grouping"))
                cfg.algorithm.grouping =
                    grouping_strategy_from_name(a.at("grouping").get<std::string>());
            if (a.contains("fusion"))
                cfg.algorithm.fusion = fusion_strategy_from_name(a.at("fusion").get<std::string>());
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        read_field(a, "beta", cfg.algorithm.beta);
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return from_json_string(buffer.str());
}

std::string ExperimentConfig::to_json_string(int indent) const {
    json j;
    j["seed"] = seed;
    j["threads"] = threads;
    j["model"] = shape_to_json(model);
    json s;
    if (schedule.capacities) s["capacities"] = *schedule.capacities;
    if (schedule.initial_capacity) s["initial_capacity"] = *schedule.initial_capacity;
    s["growth_rate"] = schedule.growth_rate;
    s["stages"] = schedule.stages;
    if (schedule.rounds_per_stage) s["rounds_per_stage"] = *schedule.rounds_per_stage;
    s["total_rounds"] = schedule.total_rounds;
    s["base_lr"] = schedule.base_lr;
    s["lr_cap"] = schedule.lr_cap;
    s["local_steps"] = schedule.local_steps;
    s["batch_size"] = schedule.batch_size;
    s["client_fraction"] = schedule.client_fraction;
    s["weight_decay"] = schedule.weight_decay;
    j["schedule"] = s;
    j["data"] = json{{"clients", data.clients},
                     {"samples_per_client", data.samples_per_client},
                     {"skew", data.skew},
                     {"noise", data.noise},
                     {"mixture_components", data.mixture_components}};
    j["algorithm"] = json{{"method", method_name(algorithm.method)},
                          {"grouping", grouping_strategy_name(algorithm.grouping)},
                          {"fusion", fusion_strategy_name(algorithm.fusion)},
                          {"beta", algorithm.beta}};
    return j.dump(indent);
}

StageSchedule ExperimentConfig::resolve_schedule() const {
    const ExperimentConfig& cfg = *this;
    const int layers = static_cast<int>(cfg.model.layer_count);
    std::vector<int> capacities;
    if (cfg.algorithm.method == Method::End2End) {
        capacities = {layers};
    } else if (cfg.schedule.capacities) {
        capacities = *cfg.schedule.capacities;
    } else if (cfg.schedule.initial_capacity) {
        capacities =
            generate_capacities(*cfg.schedule.initial_capacity, cfg.schedule.growth_rate, layers);
    } else {
        // Halving ladder from the top: {L/2^(S-1), ..., L/2, L}.
        if (cfg.schedule.stages < 1) throw ConfigError("schedule: stages must be positive");
        capacities.resize(static_cast<std::size_t>(cfg.schedule.stages));
        int cap = layers;
        for (int s = cfg.schedule.stages - 1; s >= 0; --s) {
            capacities[static_cast<std::size_t>(s)] = cap;
            if (s > 0 && cap % 2 != 0)
                throw ConfigError(
                    "schedule: default capacity ladder needs the depth divisible by 2^(stages-1); "
                    "give explicit capacities instead");
            cap /= 2;
        }
    }

    std::vector<int> rounds;
    if (cfg.schedule.rounds_per_stage && cfg.algorithm.method != Method::End2End) {
        rounds = *cfg.schedule.rounds_per_stage;
        if (rounds.size() != capacities.size())
            throw ConfigError("schedule: rounds_per_stage length must match the stage count");
    } else {
        int total = cfg.schedule.total_rounds;
        if (cfg.schedule.rounds_per_stage) {
            total = 0;
            for (int r : *cfg.schedule.rounds_per_stage) total += r;
        }
        rounds = split_rounds(total, static_cast<int>(capacities.size()));
    }

    StageSchedule schedule;
    schedule.capacities = std::move(capacities);
    schedule.rounds = std::move(rounds);
    schedule.beta = cfg.algorithm.beta;
    schedule.base_lr = cfg.schedule.base_lr;
    schedule.lr_cap = cfg.schedule.lr_cap;
    schedule.local_steps = cfg.schedule.local_steps;
    schedule.client_fraction = cfg.schedule.client_fraction;
    schedule.batch_size = cfg.schedule.batch_size;
    schedule.weight_decay = cfg.schedule.weight_decay;
    try {
        schedule.validate(layers);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return schedule;
}

void ExperimentConfig::validate() const {
    if (model.layer_count < 1) throw ConfigError("model: layers must be positive");
    if (model.width < 1) throw ConfigError("model: width must be positive");
    if (model.input_dim < 1 || model.output_dim < 1)
        throw ConfigError("model: input_dim and output_dim must be positive");
    if (model.rank < 1 || static_cast<std::size_t>(model.rank) > model.width)
        throw ConfigError("model: rank must be in [1, width]");
    if (model.alpha <= 0.0) throw ConfigError("model: alpha must be positive");
    if (model.layer_coupling < 0.0 || model.layer_coupling >= 1.0)
        throw ConfigError("model: layer_coupling must be in [0, 1)");
    if (data.clients < 1) throw ConfigError("data: clients must be positive");
    if (data.samples_per_client < 1)
        throw ConfigError("data: samples_per_client must be positive");
    if (data.skew <= 0.0) throw ConfigError("data: skew must be positive");
    if (data.noise < 0.0) throw ConfigError("data: noise must be nonnegative");
    if (data.mixture_components < 1)
        throw ConfigError("data: mixture_components must be positive");
    if (algorithm.beta < 0.0) throw ConfigError("algorithm: beta must be nonnegative");
    if (threads < 0) throw ConfigError("threads must be nonnegative");
    resolve_schedule();  // capacity/round checks
}

}  // namespace devft
