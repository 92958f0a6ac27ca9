#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "awcol/matrix.hpp"
#include "awcol/protonet.hpp"

// Target-task adaptation of two pretrained prototypical models by weighted
// co-learning on pseudo-labeled query instances.
namespace awcol {

/// Lower bound applied to the negative pseudo-label loss before inverting it.
inline constexpr double kNegLossFloor = 1e-3;

/// alpha <- max(alpha_min, gamma * alpha) after every update of a model.
struct AnnealSchedule {
    double alpha0 = 0.5;
    double alpha_min = 0.1;
    double gamma = 0.99;

    void validate() const;
};

/// Smoothed per-query class probabilities of one model.
struct WmaState {
    Matrix probs;  // Nq x N
    double alpha = 0.5;
    bool initialized = false;
};

/// Pseudo-labels and confidence weights derived from a co-prediction.
struct PseudoBatch {
    std::vector<std::size_t> positive;
    std::vector<std::size_t> negative;
    std::vector<double> weight;
    Matrix co_probs;

    std::size_t size() const { return positive.size(); }
};

/// Switches that reproduce the ablation variants. All false = full method.
struct Ablation {
    bool no_colearn = false;           // each model self-trains on its own smoothed predictions
    bool simultaneous_update = false;  // both models step every iteration
    bool no_wma = false;               // alpha pinned to 1
    bool drop_co_loss = false;
    bool drop_neg_loss = false;
    bool unit_weights = false;
    bool add_support_loss = false;     // plus unweighted mean CE on the support set

    friend bool operator==(const Ablation&, const Ablation&) = default;
};

struct FinetuneConfig {
    std::size_t total_iterations = 100;
    std::size_t beta = 5;
    double lambda = 1e-2;
    double learning_rate = 1e-3;
    AnnealSchedule schedule;
    Ablation ablation;
    std::uint64_t seed = 0;

    void validate() const;
};

WmaState wma_update(WmaState state, const Matrix& fresh_probs);

double anneal_alpha(double alpha, const AnnealSchedule& schedule);

/// Row-wise softmax of the average of the two smoothed predictions.
Matrix co_predict(const Matrix& wma1, const Matrix& wma2);
Matrix co_predict(const WmaState& wma1, const WmaState& wma2);

/// Argmax positive label (lowest index on ties), max-probability weight and a
/// negative label drawn uniformly from the remaining classes.
PseudoBatch make_pseudo_batch(const Matrix& co_probs, std::mt19937_64& rng);

struct LossAndGrad {
    double value = 0.0;
    Gradients grads;
};

/// Confidence-weighted CE of the current predictions against the positive labels.
LossAndGrad weighted_co_loss(const ProtoModel& model, const Task& task, const PseudoBatch& batch);

/// Same weighted CE evaluated at the negative labels.
double negative_loss(const ProtoModel& model, const Task& task, const PseudoBatch& batch);

/// co + lambda / max(neg, kNegLossFloor)
double total_loss(double co, double neg, double lambda);

/// Which terms enter the adaptation objective.
struct LossTerms {
    bool co = true;
    bool neg = true;
    bool support = false;
    double lambda = 1e-2;
};

struct AdaptationLoss {
    double total = 0.0;
    double co = 0.0;
    double neg = 0.0;
    double support = 0.0;
    bool neg_floored = false;
    std::size_t clamped = 0;
    Gradients grads;
};

/// Adaptation objective and its exact gradient for one model.
AdaptationLoss adaptation_loss(const EncoderParams& encoder, const Task& task,
                               const PseudoBatch& batch, const LossTerms& terms);

struct IterationRecord {
    std::size_t iteration = 0;
    bool updated[2] = {false, false};
    double alpha[2] = {0.0, 0.0};  // alpha used by each updated model this iteration
    double co_loss[2] = {0.0, 0.0};
    double neg_loss[2] = {0.0, 0.0};
    double total_loss[2] = {0.0, 0.0};
    double support_loss[2] = {0.0, 0.0};
    double mean_weight = 0.0;
    std::size_t clamped = 0;
    std::size_t neg_floored = 0;

    friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

/// Read-only snapshot handed to an observer after each iteration's pseudo-labels
/// are formed (before the optimizer step).
struct IterationView {
    const IterationRecord& record;
    const WmaState& wma1;
    const WmaState& wma2;
    std::span<const PseudoBatch> batches;  // one shared batch, or one per model without co-learning
};

using IterationObserver = std::function<void(const IterationView&)>;

struct FinetuneResult {
    ProtoModel m1;
    ProtoModel m2;
    std::vector<IterationRecord> trace;
    Matrix co_probs;
    Matrix wma1;
    Matrix wma2;
};

/// Alternating weighted co-learning on one target task. Query labels are not
/// part of Task, so adaptation cannot see them.
FinetuneResult finetune(const ProtoModel& m1, const ProtoModel& m2, const Task& task,
                        const FinetuneConfig& cfg, const IterationObserver& observer = {});

/// Fraction of rows whose argmax equals the label.
double evaluate(const Matrix& probs, std::span<const std::size_t> labels);

}  // namespace awcol
