#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "awcol/adam.hpp"
#include "awcol/encoder.hpp"
#include "awcol/matrix.hpp"

namespace awcol {

/// Floor applied to probabilities before taking logs in every cross-entropy.
inline constexpr double kLogClamp = 1e-12;

/// The part of an N-way K-shot episode a learner may look at: labeled support
/// plus unlabeled query features.
struct Task {
    std::size_t n_way = 0;
    std::size_t k_shot = 0;
    Matrix support;                           // (N*K) x d
    std::vector<std::size_t> support_labels;  // each in [0, N)
    Matrix query;                             // Nq x d

    void validate() const;
    std::size_t input_dim() const { return support.cols(); }
};

/// A task together with the query ground truth, which only evaluation reads.
struct Episode {
    Task task;
    std::vector<std::size_t> query_labels;

    void validate() const;
};

struct Prototypes {
    Matrix vectors;  // N x d_out
};

struct ProtoModel {
    EncoderParams encoder;
    AdamState adam;
    int model_id = 1;
};

ProtoModel make_proto_model(std::span<const std::size_t> dims, std::uint64_t init_seed,
                            double learning_rate, int model_id);

/// Class means of the support embeddings.
Prototypes compute_prototypes(const ProtoModel& model, const Task& task);

/// Softmax over negative squared distances to the prototypes.
Matrix predict_probs(const ProtoModel& model, const Prototypes& prototypes, const Matrix& features);

/// Query probabilities with prototypes recomputed from the task's support.
Matrix predict_task(const ProtoModel& model, const Task& task);

struct CeLoss {
    double sum = 0.0;
    double mean = 0.0;
    std::size_t clamped = 0;  // rows whose target probability fell below kLogClamp
};

CeLoss ce_loss(const Matrix& probs, std::span<const std::size_t> labels);

/// sum_b coeff[b] * -log(max(p[b, y_b], eps)) and its gradient w.r.t. the logits
/// that produced `probs` through a softmax.
struct WeightedCe {
    double value = 0.0;
    std::size_t clamped = 0;
    Matrix d_logits;
};

WeightedCe weighted_ce(const Matrix& probs, std::span<const std::size_t> labels,
                       std::span<const double> coeffs);

/// Differentiable pass of the prototypical head over [support; query].
struct HeadForward {
    ForwardCache cache;
    Matrix embeddings;  // (Ns + Nq) x d_out, support rows first
    Matrix prototypes;  // N x d_out
    Matrix probs;       // (Ns + Nq) x N
    std::size_t n_support = 0;
    std::vector<std::size_t> support_labels;
    std::size_t k_shot = 0;

    Matrix query_probs() const;
    Matrix support_probs() const;
};

HeadForward head_forward(const EncoderParams& encoder, const Task& task);

/// Backpropagates d loss / d logits (same shape as fwd.probs) through the
/// distances, the prototype means and the encoder.
Gradients head_backward(const EncoderParams& encoder, const HeadForward& fwd, const Matrix& d_logits);

/// Episode generator consumed by source pretraining.
using EpisodeStream = std::function<Episode()>;

struct PretrainTrace {
    std::vector<double> mean_loss;  // per iteration, mean over tasks of the per-query mean CE
    std::vector<double> sum_loss;   // per iteration, mean over tasks of the summed CE
    std::size_t clamped = 0;
};

/// Episodic training on source tasks: one Adam step per task on the mean query CE.
PretrainTrace pretrain_source(ProtoModel& model, const EpisodeStream& stream,
                              std::size_t iterations, std::size_t tasks_per_iteration);

}  // namespace awcol
