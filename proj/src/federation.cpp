// SPDX-License-Identifier: Apache-2.0

#include "devft/federation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace devft {

namespace {

constexpr std::int64_t kWireBytesPerParam = 4;  // 32-bit wire words, fixed convention

}  // namespace

void StageSchedule::validate(int model_layers) const {
    if (capacities.empty()) throw std::invalid_argument("schedule: no stages");
    if (capacities.size() != rounds.size())
        throw std::invalid_argument("schedule: capacities and rounds must align");
    for (std::size_t s = 0; s < capacities.size(); ++s) {
        if (capacities[s] < 1) throw std::invalid_argument("schedule: capacity must be positive");
        if (s > 0 && capacities[s] <= capacities[s - 1])
            throw std::invalid_argument("schedule: capacities must be strictly increasing");
        if (rounds[s] < 1) throw std::invalid_argument("schedule: rounds must be positive");
    }
    if (capacities.back() != model_layers)
        throw std::invalid_argument("schedule: final capacity must equal the model depth");
    if (beta < 0.0) throw std::invalid_argument("schedule: beta must be nonnegative");
    if (base_lr <= 0.0 || lr_cap <= 0.0)
        throw std::invalid_argument("schedule: learning rates must be positive");
    if (local_steps < 1) throw std::invalid_argument("schedule: local steps must be positive");
    if (client_fraction <= 0.0 || client_fraction > 1.0)
        throw std::invalid_argument("schedule: client fraction must be in (0, 1]");
    if (batch_size < 1) throw std::invalid_argument("schedule: batch size must be positive");
    if (weight_decay < 0.0) throw std::invalid_argument("schedule: weight decay must be nonnegative");
}

double StageSchedule::stage_lr(int stage) const {
    return std::min(base_lr * std::pow(10.0, static_cast<double>(stage)), lr_cap);
}

double StageSchedule::round_lr(int stage, int round) const {
    const int total = rounds[static_cast<std::size_t>(stage)];
    const double phase = total > 0 ? static_cast<double>(round) / static_cast<double>(total) : 0.0;
    return stage_lr(stage) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * phase));
}

std::vector<int> sample_clients(Rng& rng, const std::vector<Client>& clients, double fraction) {
    if (clients.empty()) throw std::invalid_argument("sample_clients: no clients");
    if (fraction <= 0.0 || fraction > 1.0)
        throw std::invalid_argument("sample_clients: fraction must be in (0, 1]");
    const auto n = clients.size();
    // ceil(fraction * N) with a guard against representation overshoot
    // (0.3 * 10 multiplies out above 3.0 in binary).
    auto take = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(n) - 1e-9));
    take = std::clamp<std::size_t>(take, 1, n);
    std::vector<int> indices(n);
    std::iota(indices.begin(), indices.end(), 0);
    rng.shuffle(indices);
    indices.resize(take);
    std::sort(indices.begin(), indices.end());
    return indices;
}

ClientUpdate local_train(const Client& client, const LayeredModel& submodel, int local_steps,
                         double lr, int batch_size, double weight_decay, Rng& rng) {
    if (local_steps < 1) throw std::invalid_argument("local_train: need at least one step");
    LayeredModel model = submodel;
    AdamWConfig adam;
    adam.lr = lr;
    adam.weight_decay = weight_decay;
    OptimizerState state = make_optimizer_state(model, adam);

    const std::size_t samples = client.inputs.rows();
    if (samples == 0) throw std::invalid_argument("local_train: client has no data");
    const bool full_batch = static_cast<std::size_t>(batch_size) >= samples;
    ClientUpdate update;
    for (int step = 0; step < local_steps; ++step) {
        Batch batch;
        if (full_batch) {
            // Batch covers the dataset: train full-batch in storage order, no
            // resampling noise.
            batch.inputs = client.inputs;
            batch.targets = client.targets;
        } else {
            batch.inputs = Matrix(static_cast<std::size_t>(batch_size), client.inputs.cols());
            batch.targets = Matrix(static_cast<std::size_t>(batch_size), client.targets.cols());
            for (int row = 0; row < batch_size; ++row) {
                const auto src = static_cast<std::size_t>(rng.uniform_index(samples));
                for (std::size_t c = 0; c < client.inputs.cols(); ++c)
                    batch.inputs(static_cast<std::size_t>(row), c) = client.inputs(src, c);
                for (std::size_t c = 0; c < client.targets.cols(); ++c)
                    batch.targets(static_cast<std::size_t>(row), c) = client.targets(src, c);
            }
        }
        LossAndGrads lg = loss_and_grads(model, batch);
        update.mean_loss += lg.loss;
        double sq_norm = 0.0;
        for (const auto& g : lg.grads) {
            for (double v : g.a.values()) sq_norm += v * v;
            for (double v : g.b.values()) sq_norm += v * v;
        }
        update.mean_sq_grad_norm += sq_norm;
        optimizer_step(state, model, lg.grads);
    }
    update.mean_loss /= static_cast<double>(local_steps);
    update.mean_sq_grad_norm /= static_cast<double>(local_steps);
    update.sample_count = client.sample_count();
    update.adapters.reserve(model.layers.size());
    for (auto& layer : model.layers) update.adapters.push_back(std::move(layer.adapter));
    return update;
}

std::vector<LoraAdapter> aggregate(const std::vector<ClientUpdate>& updates) {
    if (updates.empty()) throw std::invalid_argument("aggregate: no updates");
    const std::size_t layer_count = updates.front().adapters.size();
    std::int64_t total_samples = 0;
    for (const auto& u : updates) {
        if (u.adapters.size() != layer_count)
            throw std::invalid_argument("aggregate: update layer counts differ");
        total_samples += u.sample_count;
    }
    if (total_samples <= 0) throw std::invalid_argument("aggregate: zero total sample count");

    std::vector<LoraAdapter> out = updates.front().adapters;
    for (auto& adapter : out) {
        std::fill(adapter.a.values().begin(), adapter.a.values().end(), 0.0);
        std::fill(adapter.b.values().begin(), adapter.b.values().end(), 0.0);
    }
    for (const auto& u : updates) {
        const double weight =
            static_cast<double>(u.sample_count) / static_cast<double>(total_samples);
        for (std::size_t l = 0; l < layer_count; ++l) {
            if (!u.adapters[l].a.same_shape(out[l].a) || !u.adapters[l].b.same_shape(out[l].b))
                throw std::invalid_argument("aggregate: adapter shape mismatch");
            for (std::size_t i = 0; i < out[l].a.size(); ++i)
                out[l].a.values()[i] += weight * u.adapters[l].a.values()[i];
            for (std::size_t i = 0; i < out[l].b.size(); ++i)
                out[l].b.values()[i] += weight * u.adapters[l].b.values()[i];
        }
    }
    return out;
}

void knowledge_transfer(LayeredModel& global, const LayeredModel& submodel,
                        const GroupPartition& partition) {
    if (submodel.layer_count() != partition.group_count())
        throw std::invalid_argument("knowledge_transfer: submodel depth != group count");
    if (partition.layer_count() != static_cast<int>(global.layer_count()))
        throw std::invalid_argument("knowledge_transfer: partition does not match global model");
    for (std::size_t g = 0; g < partition.group_count(); ++g)
        for (int layer : partition.groups()[g])
            global.layers[static_cast<std::size_t>(layer)].adapter = submodel.layers[g].adapter;
}

std::pair<std::int64_t, std::int64_t> comm_bytes(const LayeredModel& submodel, int participants) {
    std::int64_t adapter_params = 0;
    for (const auto& layer : submodel.layers)
        adapter_params += static_cast<std::int64_t>(layer.adapter.a.size() + layer.adapter.b.size());
    const std::int64_t up = participants * adapter_params * kWireBytesPerParam;
    return {up, up};
}

std::int64_t compute_units(const LayeredModel& submodel, int local_steps, int batch_size,
                           int participants) {
    return static_cast<std::int64_t>(participants) * local_steps * batch_size *
           static_cast<std::int64_t>(submodel.layer_count());
}

std::int64_t broadcast_bytes(const LayeredModel& submodel, int client_count) {
    std::int64_t params =
        static_cast<std::int64_t>(submodel.input_map.size() + submodel.head.size());
    for (const auto& layer : submodel.layers)
        params += static_cast<std::int64_t>(layer.w.size() + layer.bias.size() +
                                            layer.adapter.a.size() + layer.adapter.b.size());
    return params * kWireBytesPerParam * client_count;
}

namespace {

std::vector<ClientUpdate> train_round(const std::vector<Client>& clients,
                                      const std::vector<int>& participants,
                                      const LayeredModel& submodel, const EngineOptions& options,
                                      int stage, int round, double lr) {
    const auto& sched = options.schedule;
    auto train_one = [&](int participant_index) {
        const Client& client = clients[static_cast<std::size_t>(participant_index)];
        Rng rng(derive_seed({options.seed, seed_stream::kClient, static_cast<std::uint64_t>(stage),
                             static_cast<std::uint64_t>(round),
                             static_cast<std::uint64_t>(client.id)}));
        return local_train(client, submodel, sched.local_steps, lr, sched.batch_size,
                           sched.weight_decay, rng);
    };

    std::vector<ClientUpdate> updates(participants.size());
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const int threads = options.threads == 0 ? static_cast<int>(hw) : options.threads;
    if (threads <= 1 || participants.size() <= 1) {
        for (std::size_t i = 0; i < participants.size(); ++i) updates[i] = train_one(participants[i]);
    } else {
        // One task per participant; results land in participant order so the
        // aggregation sum order never depends on the thread schedule.
        std::vector<std::future<ClientUpdate>> futures;
        futures.reserve(participants.size());
        for (int p : participants)
            futures.push_back(std::async(std::launch::async, train_one, p));
        for (std::size_t i = 0; i < futures.size(); ++i) updates[i] = futures[i].get();
    }
    return updates;
}

}  // namespace

StageInfo run_stage(LayeredModel& global, const EngineOptions& options, int stage,
                    const std::vector<Client>& clients, std::vector<RoundRecord>& records) {
    const auto& sched = options.schedule;
    const int capacity = sched.capacities[static_cast<std::size_t>(stage)];
    const int total_rounds = sched.rounds[static_cast<std::size_t>(stage)];

    StageInfo info;
    info.stage = stage;
    info.capacity = capacity;
    info.rounds = total_rounds;
    info.lr = sched.stage_lr(stage);

    LayeredModel submodel;
    if (capacity == static_cast<int>(global.layer_count())) {
        // Full capacity: identity partition, no grouping or fusion involved.
        // This is the path the end-to-end baseline reduces to.
        info.partition = GroupPartition::identity(capacity);
        submodel = global;
    } else {
        const std::uint64_t stage_seed =
            derive_seed({options.seed, seed_stream::kGroup, static_cast<std::uint64_t>(stage)});
        info.partition =
            grouping_strategy(global, capacity, options.grouping, stage_seed);
        submodel = build_submodel(global, info.partition, sched.beta, options.fusion, stage_seed);
    }
    info.broadcast_bytes = broadcast_bytes(submodel, static_cast<int>(clients.size()));

    for (int round = 0; round < total_rounds; ++round) {
        Rng round_rng(derive_seed({options.seed, seed_stream::kRound, static_cast<std::uint64_t>(stage),
                                   static_cast<std::uint64_t>(round)}));
        const std::vector<int> participants =
            sample_clients(round_rng, clients, sched.client_fraction);
        const double lr = sched.round_lr(stage, round);

        const std::vector<ClientUpdate> updates =
            train_round(clients, participants, submodel, options, stage, round, lr);
        const std::vector<LoraAdapter> merged = aggregate(updates);
        for (std::size_t l = 0; l < submodel.layers.size(); ++l)
            submodel.layers[l].adapter = merged[l];

        RoundRecord rec;
        rec.stage = stage;
        rec.round = round;
        for (const auto& u : updates) {
            rec.mean_client_loss += u.mean_loss;
            rec.mean_sq_grad_norm += u.mean_sq_grad_norm;
        }
        rec.mean_client_loss /= static_cast<double>(updates.size());
        rec.mean_sq_grad_norm /= static_cast<double>(updates.size());
        const auto [up, down] = comm_bytes(submodel, static_cast<int>(participants.size()));
        rec.uplink_bytes = up;
        rec.downlink_bytes = down;
        rec.compute_units = compute_units(submodel, sched.local_steps, sched.batch_size,
                                          static_cast<int>(participants.size()));
        records.push_back(rec);
    }

    knowledge_transfer(global, submodel, info.partition);
    return info;
}

RunResult run_schedule(const LayeredModel& global, const EngineOptions& options,
                       const std::vector<Client>& clients) {
    options.schedule.validate(static_cast<int>(global.layer_count()));
    RunResult result;
    result.model = global;
    result.stages.reserve(options.schedule.stage_count());
    for (int stage = 0; stage < static_cast<int>(options.schedule.stage_count()); ++stage)
        result.stages.push_back(
            run_stage(result.model, options, stage, clients, result.records));
    return result;
}

std::string round_records_to_csv(const std::vector<RoundRecord>& records) {
    std::string out = "stage,round,loss,grad_norm_sq,uplink_bytes,downlink_bytes,compute_units\n";
    char line[256];
    for (const auto& r : records) {
        std::snprintf(line, sizeof(line), "%d,%d,%.17g,%.17g,%lld,%lld,%lld\n", r.stage, r.round,
                      r.mean_client_loss, r.mean_sq_grad_norm,
                      static_cast<long long>(r.uplink_bytes),
                      static_cast<long long>(r.downlink_bytes),
                      static_cast<long long>(r.compute_units));
        out += line;
    }
    return out;
}

}  // namespace devft
