#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "awcol/matrix.hpp"
#include "awcol/protonet.hpp"

namespace awcol {

/// A synthetic domain: Gaussian classes around fixed centers, pushed through
/// x -> scale * R x + translation.
struct DomainSpec {
    std::size_t n_classes = 0;
    std::size_t input_dim = 0;
    Matrix centers;  // n_classes x input_dim
    double noise_scale = 1.0;
    Matrix rotation;  // input_dim x input_dim, orthonormal
    std::vector<double> translation;
    double scale = 1.0;

    void validate() const;
    /// Applies the domain transform to every row.
    Matrix transform(const Matrix& points) const;

    friend bool operator==(const DomainSpec&, const DomainSpec&) = default;
};

struct ShiftOptions {
    double radius = 5.0;           // centers lie on a sphere of this radius
    double min_separation = 3.0;   // rejection threshold between any two centers
    double noise_scale = 1.0;
    double max_translation = 5.0;  // translation norm at severity 1
    double max_scale_change = 0.0; // target scale = 1 + severity * max_scale_change
};

struct ShiftPair {
    DomainSpec source;
    DomainSpec target;
};

/// Source and target domains with disjoint class centers. The target transform
/// moves from the identity (severity 0) to a random rotation plus translation
/// (severity 1).
ShiftPair make_shift_pair(std::uint64_t seed, std::size_t n_source_classes, std::size_t n_target_classes,
                          std::size_t input_dim, double severity, const ShiftOptions& opts = {});

/// max |R^T R - I|
double orthonormality_error(const Matrix& r);

Episode sample_episode(const DomainSpec& spec, std::size_t n_way, std::size_t k_shot,
                       std::size_t queries_per_class, std::mt19937_64& rng);

/// Labeled feature vectors read from (or destined for) an embedding text file.
struct EmbeddingDataset {
    std::size_t dim = 0;
    std::size_t n_classes = 0;
    std::string source_tag;
    Matrix features;
    std::vector<std::size_t> labels;
    std::vector<std::vector<std::size_t>> by_class;  // item indices per class

    void rebuild_index();
    /// Throws ConfigError unless every class holds at least k_shot + queries items
    /// and at least n_way classes exist.
    void check_episode_shape(std::size_t n_way, std::size_t k_shot, std::size_t queries_per_class) const;

    friend bool operator==(const EmbeddingDataset& a, const EmbeddingDataset& b) {
        return a.dim == b.dim && a.n_classes == b.n_classes && a.features == b.features &&
               a.labels == b.labels;
    }
};

struct EmbeddingFormat {
    char delimiter = ',';
};

/// Text format: header `dim=<d> classes=<c>`, then `class_id,v1,...,vd` per line.
EmbeddingDataset load_embeddings(const std::filesystem::path& path, const EmbeddingFormat& format = {});
void save_embeddings(const std::filesystem::path& path, const EmbeddingDataset& data,
                     const EmbeddingFormat& format = {});

/// Draws `per_class` instances for every class of a synthetic domain.
EmbeddingDataset materialize(const DomainSpec& spec, std::size_t per_class, std::mt19937_64& rng,
                             std::string source_tag);

Episode sample_episode(const EmbeddingDataset& data, std::size_t n_way, std::size_t k_shot,
                       std::size_t queries_per_class, std::mt19937_64& rng);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace awcol
