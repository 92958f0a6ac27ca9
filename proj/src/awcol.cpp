#include "awcol/awcol.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "awcol/errors.hpp"

namespace awcol {

void AnnealSchedule::validate() const {
    if (!(alpha_min > 0.0 && alpha_min <= alpha0 && alpha0 <= 1.0)) {
        throw ConfigError("anneal schedule needs 0 < alpha_min <= alpha0 <= 1");
    }
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("anneal schedule needs 0 < gamma < 1");
}

void FinetuneConfig::validate() const {
    schedule.validate();
    if (beta < 1) throw ConfigError("beta must be >= 1");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (ablation.no_colearn && ablation.simultaneous_update) {
        throw ConfigError("no_colearn and simultaneous_update are mutually exclusive");
    }
    if (ablation.no_colearn && ablation.drop_co_loss) {
        throw ConfigError("no_colearn together with drop_co_loss leaves no pseudo-label loss");
    }
}

WmaState wma_update(WmaState state, const Matrix& fresh_probs) {
    require_same_shape(state.probs, fresh_probs, "wma_update");
    const double a = state.alpha;
    auto dst = state.probs.values();
    auto src = fresh_probs.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = (1.0 - a) * dst[i] + a * src[i];
    return state;
}

double anneal_alpha(double alpha, const AnnealSchedule& schedule) {
    return std::max(schedule.alpha_min, schedule.gamma * alpha);
}

Matrix co_predict(const Matrix& wma1, const Matrix& wma2) {
    require_same_shape(wma1, wma2, "co_predict");
    Matrix avg(wma1.rows(), wma1.cols());
    auto a = wma1.values();
    auto b = wma2.values();
    auto dst = avg.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = 0.5 * (a[i] + b[i]);
    return softmax_rows(avg);
}

Matrix co_predict(const WmaState& wma1, const WmaState& wma2) {
    return co_predict(wma1.probs, wma2.probs);
}

PseudoBatch make_pseudo_batch(const Matrix& co_probs, std::mt19937_64& rng) {
    const std::size_t n = co_probs.cols();
    if (n < 2) throw ConfigError("make_pseudo_batch: need at least 2 classes to draw a negative label");
    PseudoBatch batch;
    batch.co_probs = co_probs;
    batch.positive = argmax_rows(co_probs);
    batch.negative.resize(co_probs.rows());
    batch.weight.resize(co_probs.rows());
    std::uniform_int_distribution<std::size_t> pick(0, n - 2);
    for (std::size_t b = 0; b < co_probs.rows(); ++b) {
        const std::size_t pos = batch.positive[b];
        batch.weight[b] = co_probs(b, pos);
        const std::size_t r = pick(rng);
        batch.negative[b] = r < pos ? r : r + 1;
    }
    return batch;
}

namespace {

double weight_total(const PseudoBatch& batch) {
    double total = 0.0;
    for (double w : batch.weight) total += w;
    if (!(total > 0.0)) throw NumericError("pseudo-batch weights sum to zero");
    return total;
}

std::vector<double> normalized_weights(const PseudoBatch& batch) {
    const double total = weight_total(batch);
    std::vector<double> c(batch.weight.size());
    for (std::size_t b = 0; b < c.size(); ++b) c[b] = batch.weight[b] / total;
    return c;
}

void check_batch(const HeadForward& fwd, const PseudoBatch& batch) {
    const std::size_t nq = fwd.probs.rows() - fwd.n_support;
    if (batch.size() != nq || batch.negative.size() != nq || batch.weight.size() != nq) {
        throw ShapeError("pseudo-batch covers " + std::to_string(batch.size()) + " instances, task has " +
                         std::to_string(nq) + " queries");
    }
}

// Accumulates `rows` into the query (or support) block of the full logit gradient.
void add_block(Matrix& full, const Matrix& rows, std::size_t offset, double scale) {
    for (std::size_t b = 0; b < rows.rows(); ++b) {
        auto src = rows.row(b);
        auto dst = full.row(offset + b);
        for (std::size_t j = 0; j < src.size(); ++j) dst[j] += scale * src[j];
    }
}

struct ObjectiveParts {
    AdaptationLoss loss;
    Matrix d_logits;
};

ObjectiveParts objective(const HeadForward& fwd, const PseudoBatch& batch, const LossTerms& terms) {
    check_batch(fwd, batch);
    ObjectiveParts out;
    out.d_logits = Matrix(fwd.probs.rows(), fwd.probs.cols());
    const Matrix q = fwd.query_probs();
    const auto coeffs = normalized_weights(batch);

    WeightedCe pos = weighted_ce(q, batch.positive, coeffs);
    WeightedCe neg = weighted_ce(q, batch.negative, coeffs);
    out.loss.co = pos.value;
    out.loss.neg = neg.value;
    out.loss.clamped = pos.clamped + neg.clamped;

    if (terms.co) {
        out.loss.total += pos.value;
        add_block(out.d_logits, pos.d_logits, fwd.n_support, 1.0);
    }
    if (terms.neg && terms.lambda > 0.0) {
        out.loss.total += total_loss(0.0, neg.value, terms.lambda);
        if (neg.value < kNegLossFloor) {
            out.loss.neg_floored = true;
        } else {
            // d(lambda / L) = -lambda / L^2 dL
            add_block(out.d_logits, neg.d_logits, fwd.n_support, -terms.lambda / (neg.value * neg.value));
        }
    }
    if (terms.support) {
        const Matrix s = fwd.support_probs();
        const std::vector<double> unit(s.rows(), 1.0 / double(s.rows()));
        WeightedCe sup = weighted_ce(s, fwd.support_labels, unit);
        out.loss.support = sup.value;
        out.loss.total += sup.value;
        out.loss.clamped += sup.clamped;
        add_block(out.d_logits, sup.d_logits, 0, 1.0);
    }
    return out;
}

}  // namespace

LossAndGrad weighted_co_loss(const ProtoModel& model, const Task& task, const PseudoBatch& batch) {
    HeadForward fwd = head_forward(model.encoder, task);
    ObjectiveParts parts = objective(fwd, batch, LossTerms{.co = true, .neg = false, .support = false});
    if (!std::isfinite(parts.loss.co)) throw NumericError("weighted_co_loss: non-finite loss");
    return {parts.loss.co, head_backward(model.encoder, fwd, parts.d_logits)};
}

double negative_loss(const ProtoModel& model, const Task& task, const PseudoBatch& batch) {
    HeadForward fwd = head_forward(model.encoder, task);
    check_batch(fwd, batch);
    const double v = weighted_ce(fwd.query_probs(), batch.negative, normalized_weights(batch)).value;
    if (!std::isfinite(v)) throw NumericError("negative_loss: non-finite loss");
    return v;
}

double total_loss(double co, double neg, double lambda) {
    return co + lambda * (1.0 / std::max(neg, kNegLossFloor));
}

AdaptationLoss adaptation_loss(const EncoderParams& encoder, const Task& task,
                               const PseudoBatch& batch, const LossTerms& terms) {
    HeadForward fwd = head_forward(encoder, task);
    ObjectiveParts parts = objective(fwd, batch, terms);
    parts.loss.grads = head_backward(encoder, fwd, parts.d_logits);
    return std::move(parts.loss);
}

namespace {

enum class Schedule { alternating, simultaneous, independent };

Schedule schedule_of(const Ablation& a) {
    if (a.no_colearn) return Schedule::independent;
    if (a.simultaneous_update) return Schedule::simultaneous;
    return Schedule::alternating;
}

void set_unit_weights(PseudoBatch& batch) { std::fill(batch.weight.begin(), batch.weight.end(), 1.0); }

}  // namespace

FinetuneResult finetune(const ProtoModel& m1, const ProtoModel& m2, const Task& task,
                        const FinetuneConfig& cfg, const IterationObserver& observer) {
    cfg.validate();
    task.validate();
    const Ablation& abl = cfg.ablation;
    const Schedule mode = schedule_of(abl);
    const LossTerms terms{.co = !abl.drop_co_loss,
                          .neg = !abl.drop_neg_loss,
                          .support = abl.add_support_loss,
                          .lambda = cfg.lambda};

    FinetuneResult res;
    ProtoModel* models[2] = {&res.m1, &res.m2};
    res.m1 = m1;
    res.m2 = m2;
    for (ProtoModel* m : models) m->adam = make_adam(m->encoder, cfg.learning_rate);

    const double alpha_start = abl.no_wma ? 1.0 : cfg.schedule.alpha0;
    WmaState wma[2];
    for (auto& w : wma) w.alpha = alpha_start;

    if (cfg.total_iterations == 0) {
        res.wma1 = predict_task(res.m1, task);
        res.wma2 = predict_task(res.m2, task);
        res.co_probs = co_predict(res.wma1, res.wma2);
        return res;
    }

    std::mt19937_64 rng(cfg.seed);
    res.trace.reserve(cfg.total_iterations);

    for (std::size_t t = 0; t < cfg.total_iterations; ++t) {
        IterationRecord rec;
        rec.iteration = t;
        if (mode == Schedule::alternating) {
            rec.updated[(t / cfg.beta) % 2] = true;
        } else {
            rec.updated[0] = rec.updated[1] = true;
        }

        // Fresh predictions and WMA refresh for every model updated this iteration.
        HeadForward fwd[2];
        for (int m = 0; m < 2; ++m) {
            if (!rec.updated[m]) continue;
            fwd[m] = head_forward(models[m]->encoder, task);
            const Matrix fresh = fwd[m].query_probs();
            if (!wma[m].initialized) {
                wma[m].probs = fresh;
                wma[m].initialized = true;
            } else {
                wma[m] = wma_update(std::move(wma[m]), fresh);
            }
            rec.alpha[m] = wma[m].alpha;
            if (!abl.no_wma) wma[m].alpha = anneal_alpha(wma[m].alpha, cfg.schedule);
        }

        // During the first beta iterations the fixed model has no WMA of its own yet;
        // it is seeded with the updated model's current predictions.
        if (mode == Schedule::alternating && t < cfg.beta) {
            const int active = rec.updated[0] ? 0 : 1;
            WmaState& fixed = wma[1 - active];
            fixed.probs = fwd[active].query_probs();
            fixed.initialized = true;
        }

        std::vector<PseudoBatch> batches;
        if (mode == Schedule::independent) {
            for (int m = 0; m < 2; ++m) batches.push_back(make_pseudo_batch(co_predict(wma[m], wma[m]), rng));
        } else {
            batches.push_back(make_pseudo_batch(co_predict(wma[0], wma[1]), rng));
        }
        double weight_sum = 0.0;
        std::size_t weight_count = 0;
        for (auto& b : batches) {
            for (double w : b.weight) weight_sum += w;
            weight_count += b.size();
            if (abl.unit_weights) set_unit_weights(b);
        }
        rec.mean_weight = weight_sum / double(weight_count);

        Gradients grads[2];
        for (int m = 0; m < 2; ++m) {
            if (!rec.updated[m]) continue;
            const PseudoBatch& batch = batches.size() == 2 ? batches[m] : batches[0];
            ObjectiveParts parts = objective(fwd[m], batch, terms);
            if (!std::isfinite(parts.loss.total)) {
                throw NumericError("finetune: model " + std::to_string(m + 1) +
                                   " non-finite loss at iteration " + std::to_string(t));
            }
            rec.co_loss[m] = parts.loss.co;
            rec.neg_loss[m] = parts.loss.neg;
            rec.total_loss[m] = parts.loss.total;
            rec.support_loss[m] = parts.loss.support;
            rec.clamped += parts.loss.clamped;
            rec.neg_floored += parts.loss.neg_floored ? 1 : 0;
            grads[m] = head_backward(models[m]->encoder, fwd[m], parts.d_logits);
        }

        if (observer) observer(IterationView{rec, wma[0], wma[1], batches});

        for (int m = 0; m < 2; ++m) {
            if (rec.updated[m]) adam_step(models[m]->encoder, grads[m], models[m]->adam);
        }
        res.trace.push_back(rec);
    }

    res.wma1 = wma[0].probs;
    res.wma2 = wma[1].probs;
    res.co_probs = co_predict(wma[0], wma[1]);
    return res;
}

double evaluate(const Matrix& probs, std::span<const std::size_t> labels) {
    if (labels.size() != probs.rows()) throw ShapeError("evaluate: label count mismatch");
    if (labels.empty()) return 0.0;
    const auto pred = argmax_rows(probs);
    std::size_t hits = 0;
    for (std::size_t b = 0; b < labels.size(); ++b) hits += pred[b] == labels[b] ? 1 : 0;
    return double(hits) / double(labels.size());
}

}  // namespace awcol
