// SPDX-License-Identifier: Apache-2.0

#ifndef DEVFT_HARNESS_HPP
#define DEVFT_HARNESS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "devft/config.hpp"
#include "devft/federation.hpp"
#include "devft/lora_model.hpp"

namespace devft {

// Synthetic fine-tuning task: the teacher shares the run's base model and
// carries a planted low-rank adapter delta per layer, queried on
// Gaussian-mixture inputs with additive target noise. Stands in for a labeled
// corpus; everything regenerates bit-identically from the seed.
struct TeacherTask {
    LayeredModel teacher;
    double noise = 0.0;
    int mixture_components = 8;
    double component_spread = 2.0;   // stddev of mixture means
    double within_component = 0.5;   // stddev around a mean
    double delta_scale = 0.3;        // stddev of the planted adapter B factors
    std::uint64_t seed = 0;
};

TeacherTask make_teacher_task(const ExperimentConfig& config);

/// Per-client datasets: mixture weights ~ Dirichlet(skew) (small skew means
/// strongly non-IID inputs), targets = teacher(x) + noise.
std::vector<Client> generate_clients(const TeacherTask& task, int client_count,
                                     int samples_per_client, double skew, std::uint64_t seed);

/// MSE of the model over all clients' full datasets (sample-weighted).
double evaluate_model(const LayeredModel& model, const std::vector<Client>& clients);

struct RunOutputs {
    RunResult result;
    double final_loss = 0.0;
    std::int64_t total_uplink = 0;
    std::int64_t total_downlink = 0;
    std::int64_t total_compute = 0;
    std::int64_t total_broadcast = 0;
    std::string rounds_csv;
    std::string summary_json;
    std::string plot_csv;
};

/// Wires the modules end to end for one (config, seed) run. Does not touch
/// the filesystem; write_run_outputs persists the artifacts.
RunOutputs run_experiment(const ExperimentConfig& config);

/// rounds.csv, summary.json, plot.csv and model.json under out_dir.
void write_run_outputs(const std::string& out_dir, const ExperimentConfig& config,
                       const RunOutputs& outputs);

/// CSV of (round, cumulative bytes, cumulative compute, loss); cumulative
/// columns are monotone and end at the run totals.
std::string emit_plot_data(const std::vector<RoundRecord>& records);

struct SweepPoint {
    std::string value;
    double final_loss = 0.0;
    std::int64_t total_bytes = 0;
    std::int64_t total_compute = 0;
};

struct SweepResult {
    std::string axis;
    std::vector<SweepPoint> points;
    std::vector<RunOutputs> runs;
    std::string table_csv;  // axis,value,final_loss,total_bytes,total_compute_units
};

/// One run per value on a shared seed. Axis is one of initial_capacity,
/// growth_rate, grouping, fusion, beta.
SweepResult sweep(const ExperimentConfig& base, const std::string& axis,
                  const std::vector<std::string>& values);

}  // namespace devft

#endif  // DEVFT_HARNESS_HPP
