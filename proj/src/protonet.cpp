#include "awcol/protonet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "awcol/errors.hpp"
#include "awcol/kernels.hpp"

namespace awcol {

void Task::validate() const {
    if (n_way == 0 || k_shot == 0) throw ConfigError("task: n_way and k_shot must be positive");
    if (support.rows() != n_way * k_shot || support_labels.size() != support.rows()) {
        throw ConfigError("task: support must hold exactly N*K labeled instances");
    }
    if (query.rows() == 0) throw ConfigError("task: query set is empty");
    if (query.cols() != support.cols()) throw ShapeError("task: support/query feature dims differ");
    std::vector<std::size_t> per_class(n_way, 0);
    for (auto y : support_labels) {
        if (y >= n_way) throw ConfigError("task: support label out of range");
        ++per_class[y];
    }
    for (std::size_t c = 0; c < n_way; ++c) {
        if (per_class[c] != k_shot) {
            throw ConfigError("task: class " + std::to_string(c) + " has " +
                              std::to_string(per_class[c]) + " support instances, expected " +
                              std::to_string(k_shot));
        }
    }
}

void Episode::validate() const {
    task.validate();
    if (query_labels.size() != task.query.rows()) throw ConfigError("episode: query label count mismatch");
    for (auto y : query_labels)
        if (y >= task.n_way) throw ConfigError("episode: query label out of range");
}

ProtoModel make_proto_model(std::span<const std::size_t> dims, std::uint64_t init_seed,
                            double learning_rate, int model_id) {
    if (model_id != 1 && model_id != 2) throw ConfigError("model_id must be 1 or 2");
    ProtoModel m;
    m.encoder = init_encoder(dims, init_seed);
    m.adam = make_adam(m.encoder, learning_rate);
    m.model_id = model_id;
    return m;
}

namespace {

// Running mean: identical members give their value back exactly, so a constant
// encoder yields zero distances and zero gradients instead of roundoff noise
// that Adam would rescale into full-size steps.
Matrix class_means(const Matrix& embeddings, std::span<const std::size_t> labels,
                   std::size_t n_way, std::size_t k_shot) {
    Matrix protos(n_way, embeddings.cols());
    std::vector<std::size_t> seen(n_way, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto src = embeddings.row(i);
        auto dst = protos.row(labels[i]);
        const double n = double(++seen[labels[i]]);
        for (std::size_t k = 0; k < src.size(); ++k) dst[k] += (src[k] - dst[k]) / n;
    }
    for (std::size_t c = 0; c < n_way; ++c) {
        if (seen[c] != k_shot) throw ShapeError("class_means: class " + std::to_string(c) + " has wrong support count");
    }
    return protos;
}

Matrix neg_distance_softmax(const Matrix& embeddings, const Matrix& protos) {
    Matrix logits = kernels::sq_distances(embeddings, protos);
    for (double& v : logits.values()) v = -v;
    return softmax_rows(logits);
}

Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t end) {
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    return gather_rows(m, idx);
}

}  // namespace

Prototypes compute_prototypes(const ProtoModel& model, const Task& task) {
    task.validate();
    Matrix emb = encode(model.encoder, task.support);
    return {class_means(emb, task.support_labels, task.n_way, task.k_shot)};
}

Matrix predict_probs(const ProtoModel& model, const Prototypes& prototypes, const Matrix& features) {
    if (prototypes.vectors.cols() != model.encoder.output_dim()) {
        throw ShapeError("predict_probs: prototype dim " + std::to_string(prototypes.vectors.cols()) +
                         " vs embedding dim " + std::to_string(model.encoder.output_dim()));
    }
    return neg_distance_softmax(encode(model.encoder, features), prototypes.vectors);
}

Matrix predict_task(const ProtoModel& model, const Task& task) {
    return predict_probs(model, compute_prototypes(model, task), task.query);
}

CeLoss ce_loss(const Matrix& probs, std::span<const std::size_t> labels) {
    if (labels.size() != probs.rows()) throw ShapeError("ce_loss: label count mismatch");
    CeLoss out;
    for (std::size_t b = 0; b < probs.rows(); ++b) {
        if (labels[b] >= probs.cols()) throw ShapeError("ce_loss: label out of range");
        double p = probs(b, labels[b]);
        if (p < kLogClamp) {
            p = kLogClamp;
            ++out.clamped;
        }
        out.sum -= std::log(p);
    }
    out.mean = probs.rows() ? out.sum / double(probs.rows()) : 0.0;
    return out;
}

WeightedCe weighted_ce(const Matrix& probs, std::span<const std::size_t> labels,
                       std::span<const double> coeffs) {
    if (labels.size() != probs.rows() || coeffs.size() != probs.rows()) {
        throw ShapeError("weighted_ce: label/coefficient count mismatch");
    }
    WeightedCe out;
    out.d_logits = Matrix(probs.rows(), probs.cols());
    for (std::size_t b = 0; b < probs.rows(); ++b) {
        const std::size_t y = labels[b];
        if (y >= probs.cols()) throw ShapeError("weighted_ce: label out of range");
        const double p = probs(b, y);
        if (p < kLogClamp) {
            // Clamped rows contribute a constant, hence no gradient.
            out.value -= coeffs[b] * std::log(kLogClamp);
            ++out.clamped;
            continue;
        }
        out.value -= coeffs[b] * std::log(p);
        for (std::size_t j = 0; j < probs.cols(); ++j) {
            out.d_logits(b, j) = coeffs[b] * (probs(b, j) - (j == y ? 1.0 : 0.0));
        }
    }
    return out;
}

Matrix HeadForward::query_probs() const { return slice_rows(probs, n_support, probs.rows()); }
Matrix HeadForward::support_probs() const { return slice_rows(probs, 0, n_support); }

HeadForward head_forward(const EncoderParams& encoder, const Task& task) {
    task.validate();
    HeadForward fwd;
    auto res = encoder_forward(encoder, vstack(task.support, task.query));
    fwd.cache = std::move(res.cache);
    fwd.embeddings = std::move(res.embeddings);
    fwd.n_support = task.support.rows();
    fwd.support_labels = task.support_labels;
    fwd.k_shot = task.k_shot;
    fwd.prototypes = class_means(fwd.embeddings, task.support_labels, task.n_way, task.k_shot);
    fwd.probs = neg_distance_softmax(fwd.embeddings, fwd.prototypes);
    return fwd;
}

Gradients head_backward(const EncoderParams& encoder, const HeadForward& fwd, const Matrix& d_logits) {
    require_same_shape(d_logits, fwd.probs, "head_backward");
    const Matrix& z = fwd.embeddings;
    const Matrix& c = fwd.prototypes;
    const std::size_t dim = z.cols();

    // logit[b, j] = -||z_b - c_j||^2
    //   d/dz_b = -2 sum_j G[b, j] (z_b - c_j)
    //   d/dc_j =  2 sum_b G[b, j] (z_b - c_j)
    Matrix d_z(z.rows(), dim);
    Matrix d_c(c.rows(), dim);
    for (std::size_t b = 0; b < z.rows(); ++b) {
        auto zb = z.row(b);
        auto dzb = d_z.row(b);
        for (std::size_t j = 0; j < c.rows(); ++j) {
            const double g = d_logits(b, j);
            if (g == 0.0) continue;
            auto cj = c.row(j);
            auto dcj = d_c.row(j);
            for (std::size_t k = 0; k < dim; ++k) {
                const double diff = zb[k] - cj[k];
                dzb[k] -= 2.0 * g * diff;
                dcj[k] += 2.0 * g * diff;
            }
        }
    }
    // Prototypes are support means: each support embedding receives 1/K of its class gradient.
    const double inv_k = 1.0 / double(fwd.k_shot);
    for (std::size_t i = 0; i < fwd.n_support; ++i) {
        auto dst = d_z.row(i);
        auto src = d_c.row(fwd.support_labels[i]);
        for (std::size_t k = 0; k < dim; ++k) dst[k] += inv_k * src[k];
    }
    return encoder_backward(encoder, fwd.cache, d_z);
}

PretrainTrace pretrain_source(ProtoModel& model, const EpisodeStream& stream,
                              std::size_t iterations, std::size_t tasks_per_iteration) {
    PretrainTrace trace;
    for (std::size_t it = 0; it < iterations; ++it) {
        double mean_acc = 0.0, sum_acc = 0.0;
        for (std::size_t t = 0; t < tasks_per_iteration; ++t) {
            const Episode ep = stream();
            ep.validate();
            const std::string where = "pretrain_source: model " + std::to_string(model.model_id) +
                                      " at iteration " + std::to_string(it) + ", task " + std::to_string(t);
            HeadForward fwd;
            try {
                fwd = head_forward(model.encoder, ep.task);
            } catch (const NumericError& e) {
                throw NumericError(where + ": " + e.what());
            }
            const Matrix q = fwd.query_probs();
            const std::vector<double> coeffs(q.rows(), 1.0 / double(q.rows()));
            WeightedCe ce = weighted_ce(q, ep.query_labels, coeffs);
            if (!std::isfinite(ce.value)) {
                throw NumericError(where + ": non-finite loss");
            }
            Matrix d_logits(fwd.probs.rows(), fwd.probs.cols());
            for (std::size_t b = 0; b < q.rows(); ++b)
                std::copy_n(ce.d_logits.row(b).begin(), q.cols(), d_logits.row(fwd.n_support + b).begin());
            adam_step(model.encoder, head_backward(model.encoder, fwd, d_logits), model.adam);
            mean_acc += ce.value;
            sum_acc += ce.value * double(q.rows());
            trace.clamped += ce.clamped;
        }
        const double denom = tasks_per_iteration ? double(tasks_per_iteration) : 1.0;
        trace.mean_loss.push_back(mean_acc / denom);
        trace.sum_loss.push_back(sum_acc / denom);
    }
    return trace;
}

}  // namespace awcol
