// SPDX-License-Identifier: Apache-2.0

#include "devft/analysis.hpp"

#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "devft/rng.hpp"

namespace devft {

GroupShift group_fusion_shift(const std::vector<DenseVector>& group, double beta) {
    if (group.empty()) throw std::invalid_argument("group_fusion_shift: empty group");
    const DenseVector fused = fuse_vectors(group, beta);
    const DenseVector reference = fuse_vectors(group, 1.0);

    GroupShift result;
    result.group_size = group.size();
    double sq = 0.0;
    for (std::size_t i = 0; i < fused.size(); ++i) {
        const double d = fused[i] - reference[i];
        sq += d * d;
    }
    result.shift = std::sqrt(sq);

    double max_pairwise = 0.0;
    for (std::size_t j = 0; j < group.size(); ++j) {
        for (std::size_t k = j + 1; k < group.size(); ++k) {
            double dist_sq = 0.0;
            for (std::size_t i = 0; i < group[j].size(); ++i) {
                const double d = group[j][i] - group[k][i];
                dist_sq += d * d;
            }
            max_pairwise = std::max(max_pairwise, std::sqrt(dist_sq));
        }
    }
    result.max_pairwise = max_pairwise;
    result.bound = std::abs(beta - 1.0) * static_cast<double>(group.size()) * max_pairwise;
    result.violated = result.shift > result.bound;
    return result;
}

GroupShift group_fusion_shift(const std::vector<LayerParams>& group, double beta) {
    std::vector<DenseVector> flat;
    flat.reserve(group.size());
    for (const auto& layer : group) flat.push_back(flatten_layer(layer));
    return group_fusion_shift(flat, beta);
}

ShiftReport verify_lemma1(const LayeredModel& model, const GroupPartition& partition,
                          double beta) {
    if (partition.layer_count() != static_cast<int>(model.layer_count()))
        throw std::invalid_argument("verify_lemma1: partition does not match model");
    ShiftReport report;
    report.beta = beta;
    for (std::size_t g = 0; g < partition.group_count(); ++g) {
        std::vector<DenseVector> members;
        members.reserve(partition.groups()[g].size());
        for (int layer : partition.groups()[g])
            members.push_back(flatten_layer(model.layers[static_cast<std::size_t>(layer)]));
        GroupShift shift = group_fusion_shift(members, beta);
        shift.group_id = static_cast<int>(g);
        report.total_shift += shift.shift;
        report.total_bound += shift.bound;
        if (shift.violated) report.violating_groups.push_back(shift.group_id);
        report.groups.push_back(std::move(shift));
    }
    return report;
}

std::vector<ShiftReport> verify_lemma1_trials(const ModelShape& shape, int group_count,
                                              double beta, int trials, std::uint64_t seed) {
    if (trials < 1) throw std::invalid_argument("verify_lemma1_trials: trials must be positive");
    std::vector<ShiftReport> reports;
    reports.reserve(static_cast<std::size_t>(trials));
    for (int t = 0; t < trials; ++t) {
        const std::uint64_t trial_seed = derive_seed({seed, 0x11aaULL, static_cast<std::uint64_t>(t)});
        const LayeredModel model = random_model(shape, trial_seed);
        const GroupPartition partition = random_partition(
            static_cast<int>(shape.layer_count), group_count, derive_seed({trial_seed, 0x9a11ULL}));
        reports.push_back(verify_lemma1(model, partition, beta));
    }
    return reports;
}

std::string ShiftReport::to_json_string() const {
    nlohmann::json j;
    j["beta"] = beta;
    j["total_shift"] = total_shift;
    j["total_bound"] = total_bound;
    j["violating_groups"] = violating_groups;
    j["groups"] = nlohmann::json::array();
    for (const auto& g : groups) {
        j["groups"].push_back({{"group", g.group_id},
                               {"size", g.group_size},
                               {"shift", g.shift},
                               {"bound", g.bound},
                               {"max_pairwise", g.max_pairwise},
                               {"violated", g.violated}});
    }
    return j.dump();
}

std::vector<std::vector<double>> gradient_norm_series(const std::vector<RoundRecord>& records) {
    if (records.empty()) throw std::invalid_argument("gradient_norm_series: no records");
    int max_stage = 0;
    for (const auto& r : records) max_stage = std::max(max_stage, r.stage);
    std::vector<std::vector<double>> series(static_cast<std::size_t>(max_stage) + 1);
    std::vector<double> running_sum(series.size(), 0.0);
    for (const auto& r : records) {
        auto& s = series[static_cast<std::size_t>(r.stage)];
        running_sum[static_cast<std::size_t>(r.stage)] += r.mean_sq_grad_norm;
        s.push_back(running_sum[static_cast<std::size_t>(r.stage)] /
                    static_cast<double>(s.size() + 1));
    }
    return series;
}

}  // namespace devft
