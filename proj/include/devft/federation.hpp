// SPDX-License-Identifier: Apache-2.0

#ifndef DEVFT_FEDERATION_HPP
#define DEVFT_FEDERATION_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "devft/fusion.hpp"
#include "devft/grouping.hpp"
#include "devft/lora_model.hpp"
#include "devft/rng.hpp"

namespace devft {

// Seed-stream tags. Every random decision in a run draws from
// derive_seed({run_seed, tag, ...}); the tags are part of the engine's
// reproducibility contract so replayers can derive identical streams.
namespace seed_stream {
inline constexpr std::uint64_t kRound = 0x726f756e64ULL;    // participant sampling
inline constexpr std::uint64_t kClient = 0x636c69656eULL;   // minibatch draws
inline constexpr std::uint64_t kGroup = 0x67726f7570ULL;    // grouping + fusion
}  // namespace seed_stream

struct Client {
    int id = 0;
    Matrix inputs;   // samples x input_dim
    Matrix targets;  // samples x output_dim

    std::int64_t sample_count() const { return static_cast<std::int64_t>(inputs.rows()); }
};

// Per-stage capacities, round counts and the training hyperparameters shared
// by every stage. The staged learning-rate rule multiplies the base rate by
// 10 per stage until the cap.
struct StageSchedule {
    std::vector<int> capacities;  // strictly increasing, last == model depth
    std::vector<int> rounds;      // one entry per stage
    double beta = 0.1;
    double base_lr = 1e-2;
    double lr_cap = 1e-2;
    int local_steps = 10;  // K
    double client_fraction = 0.1;
    int batch_size = 16;
    double weight_decay = 0.0;

    std::size_t stage_count() const { return capacities.size(); }

    /// Throws std::invalid_argument unless capacities are strictly increasing,
    /// end exactly at model_layers, and every count is positive.
    void validate(int model_layers) const;

    /// base_lr * 10^stage, capped at lr_cap. Stage is zero-based.
    double stage_lr(int stage) const;

    /// Cosine decay within the stage, restarting at each stage boundary.
    double round_lr(int stage, int round) const;
};

struct RoundRecord {
    int stage = 0;  // zero-based
    int round = 0;  // zero-based within the stage
    double mean_client_loss = 0.0;
    double mean_sq_grad_norm = 0.0;
    std::int64_t uplink_bytes = 0;
    std::int64_t downlink_bytes = 0;
    std::int64_t compute_units = 0;
};

struct StageInfo {
    int stage = 0;
    int capacity = 0;
    int rounds = 0;
    double lr = 0.0;
    GroupPartition partition;
    std::int64_t broadcast_bytes = 0;  // one-time full-submodel push, logged apart
};

struct EngineOptions {
    StageSchedule schedule;
    GroupingStrategy grouping = GroupingStrategy::Spectral;
    FusionStrategy fusion = FusionStrategy::Dblf;
    std::uint64_t seed = 0;
    int threads = 0;  // 0 = hardware concurrency, 1 = serial
};

struct ClientUpdate {
    std::vector<LoraAdapter> adapters;
    std::int64_t sample_count = 0;
    double mean_loss = 0.0;
    double mean_sq_grad_norm = 0.0;
};

struct RunResult {
    LayeredModel model;
    std::vector<RoundRecord> records;
    std::vector<StageInfo> stages;
};

/// ceil(fraction * N) distinct clients, drawn from the given round rng.
/// Returned indices are sorted ascending.
std::vector<int> sample_clients(Rng& rng, const std::vector<Client>& clients, double fraction);

/// K optimizer steps on seeded minibatches from the client's data. Trains a
/// copy; the caller's submodel is untouched. lr applies to all K steps.
ClientUpdate local_train(const Client& client, const LayeredModel& submodel, int local_steps,
                         double lr, int batch_size, double weight_decay, Rng& rng);

/// Sample-count-weighted elementwise mean, independently per A and per B.
std::vector<LoraAdapter> aggregate(const std::vector<ClientUpdate>& updates);

/// Copies each submodel layer's adapter into every global layer of its group.
/// Base weights stay untouched.
void knowledge_transfer(LayeredModel& global, const LayeredModel& submodel,
                        const GroupPartition& partition);

/// Stage rounds of {sample, broadcast, local_train, aggregate}, then knowledge
/// transfer back into the global model. Appends one RoundRecord per round.
StageInfo run_stage(LayeredModel& global, const EngineOptions& options, int stage,
                    const std::vector<Client>& clients, std::vector<RoundRecord>& records);

/// All stages in order; the full DevFT loop (end-to-end training is the
/// single-stage special case).
RunResult run_schedule(const LayeredModel& global, const EngineOptions& options,
                       const std::vector<Client>& clients);

/// Steady-state adapter traffic for one round: uplink = participants x L_s x
/// adapter bytes, downlink identical. Adapters travel as 32-bit words.
std::pair<std::int64_t, std::int64_t> comm_bytes(const LayeredModel& submodel, int participants);

/// Depth-proportional work proxy: participants x K x batch x L_s.
std::int64_t compute_units(const LayeredModel& submodel, int local_steps, int batch_size,
                           int participants);

/// Bytes of a one-time full-submodel broadcast to every client (base tensors
/// plus adapters, 32-bit words on the wire).
std::int64_t broadcast_bytes(const LayeredModel& submodel, int client_count);

/// CSV with header: stage,round,loss,grad_norm_sq,uplink_bytes,downlink_bytes,compute_units.
std::string round_records_to_csv(const std::vector<RoundRecord>& records);

}  // namespace devft

#endif  // DEVFT_FEDERATION_HPP
