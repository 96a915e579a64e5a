// SPDX-License-Identifier: Apache-2.0

#include "devft/harness.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "devft/checkpoint.hpp"
#include "devft/rng.hpp"

namespace devft {

using nlohmann::json;

namespace {

constexpr std::uint64_t kTeacherStream = 0x7465616348ULL;
constexpr std::uint64_t kDataStream = 0x64617461ULL;
constexpr std::uint64_t kModelStream = 0x696e6974ULL;

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << text;
}

}  // namespace

TeacherTask make_teacher_task(const ExperimentConfig& config) {
    TeacherTask task;
    task.seed = derive_seed({config.seed, kTeacherStream});
    // Fine-tuning stand-in: the teacher shares the run's base model and
    // differs by a planted low-rank delta on every layer, so the student can
    // express the optimum exactly through its adapters.
    task.teacher = random_model(config.model, derive_seed({config.seed, kModelStream}));
    Rng rng(task.seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(config.model.width));
    for (auto& layer : task.teacher.layers) {
        for (auto& v : layer.adapter.a.values()) v = rng.uniform(-bound, bound);
        for (auto& v : layer.adapter.b.values()) v = rng.normal(0.0, task.delta_scale);
    }
    task.noise = config.data.noise;
    task.mixture_components = config.data.mixture_components;
    return task;
}

std::vector<Client> generate_clients(const TeacherTask& task, int client_count,
                                     int samples_per_client, double skew, std::uint64_t seed) {
    if (client_count < 1) throw std::invalid_argument("generate_clients: need at least one client");
    if (samples_per_client < 1)
        throw std::invalid_argument("generate_clients: need at least one sample per client");
    if (skew <= 0.0) throw std::invalid_argument("generate_clients: skew must be positive");

    const std::size_t input_dim = task.teacher.shape.input_dim;
    const auto components = static_cast<std::size_t>(task.mixture_components);

    // Mixture component means are shared across clients; only the weights
    // differ, which is where the non-IID skew lives.
    Rng mixture_rng(derive_seed({seed, kDataStream, 0x6d6978ULL}));
    Matrix means(components, input_dim);
    for (auto& v : means.values()) v = mixture_rng.normal(0.0, task.component_spread);

    std::vector<Client> clients;
    clients.reserve(static_cast<std::size_t>(client_count));
    for (int c = 0; c < client_count; ++c) {
        Rng rng(derive_seed({seed, kDataStream, 0xc11e47ULL, static_cast<std::uint64_t>(c)}));
        const std::vector<double> weights = rng.dirichlet(skew, components);
        std::vector<double> cumulative(components);
        double acc = 0.0;
        for (std::size_t m = 0; m < components; ++m) {
            acc += weights[m];
            cumulative[m] = acc;
        }
        cumulative.back() = 1.0;

        Client client;
        client.id = c;
        client.inputs = Matrix(static_cast<std::size_t>(samples_per_client), input_dim);
        for (int s = 0; s < samples_per_client; ++s) {
            const double u = rng.uniform();
            std::size_t comp = 0;
            while (comp + 1 < components && u > cumulative[comp]) ++comp;
            for (std::size_t d = 0; d < input_dim; ++d)
                client.inputs(static_cast<std::size_t>(s), d) =
                    means(comp, d) + rng.normal(0.0, task.within_component);
        }
        const ForwardResult teacher_out = forward(task.teacher, client.inputs);
        client.targets = teacher_out.predictions;
        for (auto& v : client.targets.values()) v += rng.normal(0.0, task.noise);
        clients.push_back(std::move(client));
    }
    return clients;
}

double evaluate_model(const LayeredModel& model, const std::vector<Client>& clients) {
    double sq_sum = 0.0;
    std::size_t entries = 0;
    for (const auto& client : clients) {
        const ForwardResult out = forward(model, client.inputs);
        for (std::size_t i = 0; i < out.predictions.size(); ++i) {
            const double d = out.predictions.values()[i] - client.targets.values()[i];
            sq_sum += d * d;
        }
        entries += out.predictions.size();
    }
    if (entries == 0) throw std::invalid_argument("evaluate_model: no data");
    return sq_sum / static_cast<double>(entries);
}

std::string emit_plot_data(const std::vector<RoundRecord>& records) {
    std::string out = "round,cum_bytes,cum_compute_units,loss\n";
    char line[192];
    std::int64_t bytes = 0;
    std::int64_t compute = 0;
    int round = 0;
    for (const auto& r : records) {
        bytes += r.uplink_bytes + r.downlink_bytes;
        compute += r.compute_units;
        std::snprintf(line, sizeof(line), "%d,%lld,%lld,%.17g\n", round,
                      static_cast<long long>(bytes), static_cast<long long>(compute),
                      r.mean_client_loss);
        out += line;
        ++round;
    }
    return out;
}

RunOutputs run_experiment(const ExperimentConfig& config) {
    config.validate();

    const TeacherTask task = make_teacher_task(config);
    const std::vector<Client> clients = generate_clients(
        task, config.data.clients, config.data.samples_per_client, config.data.skew, config.seed);

    const LayeredModel global =
        random_model(config.model, derive_seed({config.seed, kModelStream}));

    EngineOptions options;
    options.schedule = config.resolve_schedule();
    options.grouping = config.algorithm.grouping;
    options.fusion = config.algorithm.fusion;
    options.seed = config.seed;
    options.threads = config.threads;

    RunOutputs out;
    out.result = run_schedule(global, options, clients);
    out.final_loss = evaluate_model(out.result.model, clients);
    for (const auto& r : out.result.records) {
        out.total_uplink += r.uplink_bytes;
        out.total_downlink += r.downlink_bytes;
        out.total_compute += r.compute_units;
    }
    for (const auto& s : out.result.stages) out.total_broadcast += s.broadcast_bytes;

    out.rounds_csv = round_records_to_csv(out.result.records);
    out.plot_csv = emit_plot_data(out.result.records);

    json summary;
    summary["format"] = "devft-run-summary";
    summary["version"] = 1;
    summary["seed"] = config.seed;
    summary["method"] = method_name(config.algorithm.method);
    summary["config"] = json::parse(config.to_json_string());
    summary["final_loss"] = out.final_loss;
    summary["totals"] = json{{"uplink_bytes", out.total_uplink},
                             {"downlink_bytes", out.total_downlink},
                             {"compute_units", out.total_compute},
                             {"stage_broadcast_bytes", out.total_broadcast},
                             {"rounds", out.result.records.size()}};
    summary["stages"] = json::array();
    for (const auto& s : out.result.stages) {
        summary["stages"].push_back(json{{"stage", s.stage},
                                         {"capacity", s.capacity},
                                         {"rounds", s.rounds},
                                         {"lr", s.lr},
                                         {"broadcast_bytes", s.broadcast_bytes},
                                         {"partition", json::parse(s.partition.to_json_string())}});
    }
    out.summary_json = summary.dump(2);
    return out;
}

void write_run_outputs(const std::string& out_dir, const ExperimentConfig& config,
                       const RunOutputs& outputs) {
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    write_text_file((dir / "rounds.csv").string(), outputs.rounds_csv);
    write_text_file((dir / "summary.json").string(), outputs.summary_json);
    write_text_file((dir / "plot.csv").string(), outputs.plot_csv);
    save_checkpoint((dir / "model.json").string(), outputs.result.model, config.seed);
}

namespace {

ExperimentConfig apply_axis(const ExperimentConfig& base, const std::string& axis,
                            const std::string& value) {
    ExperimentConfig cfg = base;
    try {
        if (axis == "initial_capacity") {
            cfg.schedule.capacities.reset();
            cfg.schedule.initial_capacity = std::stoi(value);
        } else if (axis == "growth_rate") {
            cfg.schedule.capacities.reset();
            if (!cfg.schedule.initial_capacity) cfg.schedule.initial_capacity = 4;
            cfg.schedule.growth_rate = std::stoi(value);
        } else if (axis == "grouping") {
            cfg.algorithm.grouping = grouping_strategy_from_name(value);
        } else if (axis == "fusion") {
            cfg.algorithm.fusion = fusion_strategy_from_name(value);
        } else if (axis == "beta") {
            cfg.algorithm.beta = std::stod(value);
        } else {
            throw ConfigError("unknown sweep axis '" + axis +
                              "' (expected initial_capacity|growth_rate|grouping|fusion|beta)");
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("invalid sweep value '") + value + "' for axis '" + axis +
                          "': " + e.what());
    } catch (const std::out_of_range&) {
        throw ConfigError("sweep value '" + value + "' out of range for axis '" + axis + "'");
    }
    cfg.schedule.rounds_per_stage.reset();  // stage count may change; re-split the budget
    cfg.validate();
    return cfg;
}

}  // namespace

SweepResult sweep(const ExperimentConfig& base, const std::string& axis,
                  const std::vector<std::string>& values) {
    if (values.empty()) throw ConfigError("sweep: no values given");
    SweepResult result;
    result.axis = axis;
    result.table_csv = "axis,value,final_loss,total_bytes,total_compute_units\n";
    char line[256];
    for (const auto& value : values) {
        const ExperimentConfig cfg = apply_axis(base, axis, value);
        RunOutputs run = run_experiment(cfg);
        SweepPoint point;
        point.value = value;
        point.final_loss = run.final_loss;
        point.total_bytes = run.total_uplink + run.total_downlink;
        point.total_compute = run.total_compute;
        std::snprintf(line, sizeof(line), "%s,%s,%.17g,%lld,%lld\n", axis.c_str(), value.c_str(),
                      point.final_loss, static_cast<long long>(point.total_bytes),
                      static_cast<long long>(point.total_compute));
        result.table_csv += line;
        result.points.push_back(point);
        result.runs.push_back(std::move(run));
    }
    return result;
}

}  // namespace devft
