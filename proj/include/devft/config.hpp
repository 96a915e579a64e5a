// SPDX-License-Identifier: Apache-2.0

#ifndef DEVFT_CONFIG_HPP
#define DEVFT_CONFIG_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "devft/federation.hpp"
#include "devft/lora_model.hpp"

namespace devft {

/// Configuration problems map to CLI exit code 1; everything else is a
/// runtime error (exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Method { Devft, End2End };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct DataSpec {
    int clients = 20;
    int samples_per_client = 256;
    double skew = 0.5;             // Dirichlet concentration; small = strongly non-IID
    double noise = 0.02;           // target noise stddev
    int mixture_components = 8;    // input Gaussian mixture size
};

struct ScheduleSpec {
    // Either explicit capacities, or initial_capacity+growth_rate generation,
    // or the default halving-from-the-top ladder for `stages` stages.
    std::optional<std::vector<int>> capacities;
    std::optional<int> initial_capacity;
    int growth_rate = 2;
    int stages = 4;
    std::optional<std::vector<int>> rounds_per_stage;
    int total_rounds = 40;
    double base_lr = 0.01;
    double lr_cap = 0.01;
    int local_steps = 10;
    int batch_size = 16;
    double client_fraction = 0.1;
    double weight_decay = 0.0;
};

struct AlgorithmSpec {
    Method method = Method::Devft;
    GroupingStrategy grouping = GroupingStrategy::Spectral;
    FusionStrategy fusion = FusionStrategy::Dblf;
    double beta = 0.1;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    ModelShape model;
    ScheduleSpec schedule;
    DataSpec data;
    AlgorithmSpec algorithm;
    int threads = 0;  // 0 = hardware concurrency

    /// Desk-scale defaults: L=16, width=16, 20 clients, 256 samples each.
    static ExperimentConfig defaults();

    static ExperimentConfig from_json_string(const std::string& text);
    static ExperimentConfig from_json_file(const std::string& path);
    std::string to_json_string(int indent = 2) const;

    /// Capacity ladder and per-stage round split for the configured method;
    /// end2end collapses to a single full-depth stage with the same total
    /// round budget. Throws ConfigError on any invalid field.
    StageSchedule resolve_schedule() const;

    /// Full validation (field ranges plus schedule resolution).
    void validate() const;
};

/// c, c*m, c*m^2, ... with the final jump clamped to exactly L.
std::vector<int> generate_capacities(int initial, int growth_rate, int total_layers);

/// total split as evenly as possible, remainder one-per-stage from the front.
std::vector<int> split_rounds(int total, int stages);

}  // namespace devft

#endif  // DEVFT_CONFIG_HPP
