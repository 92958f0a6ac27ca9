#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "awcol/awcol.hpp"
#include "awcol/taskgen.hpp"

namespace awcol {

enum class RunMode { pretrain, eval, ablate, gen_data };

/// Everything one CLI invocation needs. Defaults: 600 episodes, 15 queries per
/// class, 400 x 100 source tasks, lr 1e-3, lambda 1e-2, alpha 0.5 -> 0.1 at
/// gamma 0.99, beta 5.
struct RunConfig {
    RunMode mode = RunMode::eval;

    std::uint64_t seed = 1;
    std::uint64_t domain_seed = 42;

    std::size_t n_way = 5;
    std::size_t k_shot = 5;
    std::size_t queries_per_class = 15;
    std::size_t episodes = 600;

    // Synthetic domains; ignored where an embedding file is given.
    std::size_t input_dim = 32;
    std::size_t source_classes = 64;
    std::size_t target_classes = 20;
    double severity = 0.7;
    ShiftOptions shift{.radius = 5.0, .min_separation = 3.0, .noise_scale = 1.0,
                       .max_translation = 40.0, .max_scale_change = 0.0};
    std::string source_embeddings;
    std::string target_embeddings;
    std::size_t samples_per_class = 100;  // gen-data

    std::size_t hidden_width = 64;
    std::size_t hidden_layers = 2;
    std::size_t embed_dim = 32;

    std::size_t pretrain_iterations = 400;
    std::size_t pretrain_tasks = 100;
    double pretrain_lr = 1e-3;

    FinetuneConfig finetune;

    std::string checkpoint_1;  // default <output_dir>/model1.ckpt
    std::string checkpoint_2;
    std::string output_dir = "awcol_run";
    std::size_t threads = 1;
    std::vector<std::string> variants;  // ablate; empty = all eight

    void validate() const;
    std::vector<std::size_t> encoder_dims(std::size_t in_dim) const;
    std::filesystem::path checkpoint_path(int model_id) const;
};

/// Parses `key = value` lines; '#' starts a comment. Unknown keys throw.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// Stable `key = value` rendering of every field; parse_config round-trips it.
/// Without execution keys (threads, output_dir) the text only depends on
/// settings that can change results.
std::string render_config(const RunConfig& cfg, bool include_execution = true);

/// FNV-1a over the result-relevant rendering, used as checkpoint provenance.
std::uint64_t config_hash(const RunConfig& cfg);

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t state = 0xcbf29ce484222325ULL);

/// SplitMix64 finalizer; derives independent stream seeds from one base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Ablation switches for a named variant (full, no_colearn, no_alt_update,
/// no_wma, no_co_loss, no_neg_loss, no_adapt_weight, with_support_loss).
Ablation variant_ablation(const std::string& name);
const std::vector<std::string>& all_variants();

}  // namespace awcol
