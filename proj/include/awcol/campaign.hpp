#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <variant>
#include <string>
#include <vector>

#include "awcol/checkpoint.hpp"
#include "awcol/config.hpp"

namespace awcol {

/// Where target (or source) episodes come from: a synthetic domain or a file.
class EpisodeSampler {
public:
    EpisodeSampler(DomainSpec spec, std::size_t n_way, std::size_t k_shot, std::size_t queries);
    EpisodeSampler(EmbeddingDataset data, std::size_t n_way, std::size_t k_shot, std::size_t queries);

    Episode operator()(std::mt19937_64& rng) const;
    std::size_t input_dim() const;

private:
    std::variant<DomainSpec, EmbeddingDataset> source_;
    std::size_t n_way_, k_shot_, queries_;
};

EpisodeSampler source_sampler(const RunConfig& cfg);
EpisodeSampler target_sampler(const RunConfig& cfg);

struct PretrainOutcome {
    Checkpoint model1;
    Checkpoint model2;
    PretrainTrace trace1;
    PretrainTrace trace2;
    double source_accuracy1 = 0.0;  // held-out source episodes
    double source_accuracy2 = 0.0;
};

/// Pretrains both models on independently seeded source streams and writes
/// model1.ckpt, model2.ckpt, pretrain_trace.csv and pretrain_report.txt.
PretrainOutcome run_pretrain(const RunConfig& cfg);

struct EpisodeOutcome {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    double acc_co = 0.0;
    double acc_m1 = 0.0;
    double acc_m2 = 0.0;
    // Last-iteration summary from the fine-tuning trace.
    double final_loss = 0.0;
    double final_weight = 0.0;
    std::size_t clamped = 0;
    std::size_t neg_floored = 0;
};

struct EpisodeFailure {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    std::string message;
};

struct Summary {
    double mean = 0.0;
    double ci95 = 0.0;  // 1.96 * sample stdev / sqrt(n); 0 when n < 2
};

Summary summarize(const std::vector<double>& values);

struct CampaignReport {
    std::string variant = "full";
    std::vector<EpisodeOutcome> episodes;  // completed, in episode order
    std::vector<EpisodeFailure> failures;
    Summary co;
    Summary m1;
    Summary m2;
    double mean_final_loss = 0.0;
    double mean_final_weight = 0.0;
    std::size_t clamped = 0;
    std::size_t neg_floored = 0;
    std::string config_echo;
    double wall_seconds = 0.0;

    bool partial() const { return !failures.empty(); }
    std::vector<double> co_accuracies() const;
};

/// Fine-tunes cloned models on E seeded target episodes (seed = base + index)
/// and aggregates accuracies. Writes report.txt and episodes.csv into `out_dir`
/// when it is non-empty.
CampaignReport run_campaign(const RunConfig& cfg, const Checkpoint& m1, const Checkpoint& m2,
                            const std::filesystem::path& out_dir, const std::string& variant = "full");

/// `episode,seed,acc_co,acc_m1,acc_m2`
std::string episodes_csv(const CampaignReport& report);
std::string report_text(const CampaignReport& report);

struct PairedComparison {
    std::string variant;
    Summary difference;  // full - variant, per episode
    std::size_t wins = 0;   // full better
    std::size_t losses = 0;
    std::size_t ties = 0;
};

PairedComparison compare_paired(const CampaignReport& full, const CampaignReport& variant);

struct AblationTable {
    std::vector<CampaignReport> reports;  // "full" first
    std::vector<PairedComparison> comparisons;
};

/// One campaign per variant on identical episode seeds; writes
/// <out>/<variant>/{report.txt,episodes.csv} and <out>/ablation.txt.
AblationTable run_ablation_sweep(const RunConfig& cfg, const Checkpoint& m1, const Checkpoint& m2);

std::string ablation_text(const AblationTable& table);

/// Writes a synthetic source/target pair as embedding text files.
void run_gen_data(const RunConfig& cfg);

/// Throws ConfigError when a checkpoint cannot consume the episode features.
void check_compatible(const Checkpoint& ckpt, std::size_t feature_dim);

/// Creates the directory and probes that a file can be written there.
void ensure_writable_dir(const std::filesystem::path& dir);

}  // namespace awcol
