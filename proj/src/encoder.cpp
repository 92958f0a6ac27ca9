#include "awcol/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "awcol/errors.hpp"
#include "awcol/kernels.hpp"

namespace awcol {
namespace {

std::size_t count(const std::vector<LayerParams>& layers) {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

std::vector<std::size_t> dims_of(const EncoderParams& params) {
    std::vector<std::size_t> dims{params.input_dim()};
    for (const auto& l : params.layers) dims.push_back(l.out_dim());
    return dims;
}

}  // namespace

std::size_t EncoderParams::param_count() const { return count(layers); }
std::size_t Gradients::param_count() const { return count(layers); }

Gradients Gradients::zeros_like(const EncoderParams& params) {
    Gradients g;
    g.layers.reserve(params.layers.size());
    for (const auto& l : params.layers) {
        g.layers.push_back({Matrix(l.out_dim(), l.in_dim()), std::vector<double>(l.out_dim(), 0.0)});
    }
    return g;
}

double Gradients::max_abs() const {
    double m = 0.0;
    for (auto block : param_blocks(layers))
        for (double v : block) m = std::max(m, std::abs(v));
    return m;
}

bool Gradients::all_finite() const {
    for (auto block : param_blocks(layers))
        for (double v : block)
            if (!std::isfinite(v)) return false;
    return true;
}

Gradients& Gradients::operator+=(const Gradients& other) {
    if (!congruent(layers, other.layers)) throw ShapeError("Gradients +=: shape mismatch");
    auto dst = param_blocks(layers);
    auto src = param_blocks(other.layers);
    for (std::size_t b = 0; b < dst.size(); ++b)
        for (std::size_t i = 0; i < dst[b].size(); ++i) dst[b][i] += src[b][i];
    return *this;
}

Gradients& Gradients::operator*=(double s) {
    for (auto block : param_blocks(layers))
        for (double& v : block) v *= s;
    return *this;
}

std::vector<std::span<double>> param_blocks(std::vector<LayerParams>& layers) {
    std::vector<std::span<double>> out;
    for (auto& l : layers) {
        out.push_back(l.weight.values());
        out.push_back(l.bias);
    }
    return out;
}

std::vector<std::span<const double>> param_blocks(const std::vector<LayerParams>& layers) {
    std::vector<std::span<const double>> out;
    for (const auto& l : layers) {
        out.push_back(l.weight.values());
        out.push_back(l.bias);
    }
    return out;
}

void validate_encoder(const EncoderParams& params) {
    if (params.layers.empty()) throw ShapeError("encoder has no layers");
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        const auto& l = params.layers[i];
        if (l.weight.empty() || l.bias.size() != l.out_dim()) {
            throw ShapeError("encoder layer " + std::to_string(i) + " is malformed");
        }
        if (i > 0 && params.layers[i - 1].out_dim() != l.in_dim()) {
            throw ShapeError("encoder layer " + std::to_string(i) + " input " +
                             std::to_string(l.in_dim()) + " does not chain with previous output " +
                             std::to_string(params.layers[i - 1].out_dim()));
        }
    }
}

bool congruent(const std::vector<LayerParams>& a, const std::vector<LayerParams>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i].weight.same_shape(b[i].weight) || a[i].bias.size() != b[i].bias.size()) return false;
    }
    return true;
}

EncoderParams init_encoder(std::span<const std::size_t> dims, std::uint64_t seed) {
    if (dims.size() < 2) throw ConfigError("encoder needs at least input and output dims");
    if (std::any_of(dims.begin(), dims.end(), [](std::size_t d) { return d == 0; })) {
        throw ConfigError("encoder dims must be positive");
    }
    std::mt19937_64 rng(seed);
    EncoderParams p;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const std::size_t in = dims[i], out = dims[i + 1];
        const double limit = std::sqrt(6.0 / double(in + out));
        std::uniform_real_distribution<double> u(-limit, limit);
        LayerParams layer{Matrix(out, in), std::vector<double>(out, 0.0)};
        for (double& w : layer.weight.values()) w = u(rng);
        p.layers.push_back(std::move(layer));
    }
    return p;
}

ForwardResult encoder_forward(const EncoderParams& params, const Matrix& inputs) {
    validate_encoder(params);
    if (inputs.cols() != params.input_dim()) {
        throw ShapeError("encoder_forward: input has " + std::to_string(inputs.cols()) +
                         " features, encoder expects " + std::to_string(params.input_dim()));
    }
    ForwardResult res;
    res.cache.layer_dims = dims_of(params);
    res.cache.activations.reserve(params.layers.size());
    res.cache.activations.push_back(inputs);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto& layer = params.layers[l];
        Matrix z = kernels::affine(res.cache.activations.back(), layer.weight, layer.bias);
        if (l + 1 < params.layers.size()) {
            for (double& v : z.values()) v = std::tanh(v);
            res.cache.activations.push_back(std::move(z));
        } else {
            res.embeddings = std::move(z);
        }
    }
    if (!res.embeddings.all_finite()) throw NumericError("encoder_forward: non-finite embedding");
    return res;
}

Matrix encode(const EncoderParams& params, const Matrix& inputs) {
    return encoder_forward(params, inputs).embeddings;
}

Gradients encoder_backward(const EncoderParams& params, const ForwardCache& cache,
                           const Matrix& d_embeddings) {
    validate_encoder(params);
    if (cache.layer_dims != dims_of(params) || cache.activations.size() != params.layers.size()) {
        throw ShapeError("encoder_backward: cache does not match encoder");
    }
    const std::size_t batch = cache.activations.front().rows();
    if (d_embeddings.rows() != batch || d_embeddings.cols() != params.output_dim()) {
        throw ShapeError("encoder_backward: upstream gradient " + d_embeddings.shape_str() +
                         " does not match embeddings");
    }
    Gradients g = Gradients::zeros_like(params);
    Matrix delta = d_embeddings;
    for (std::size_t l = params.layers.size(); l-- > 0;) {
        const Matrix& a_in = cache.activations[l];
        g.layers[l].weight = kernels::weight_grad(delta, a_in);
        auto& db = g.layers[l].bias;
        for (std::size_t b = 0; b < delta.rows(); ++b)
            for (std::size_t o = 0; o < delta.cols(); ++o) db[o] += delta(b, o);
        if (l == 0) break;
        Matrix d_in = kernels::input_grad(delta, params.layers[l].weight);
        // a_in = tanh(z) for hidden layers, so dtanh = 1 - a^2.
        auto dv = d_in.values();
        auto av = a_in.values();
        for (std::size_t i = 0; i < dv.size(); ++i) dv[i] *= 1.0 - av[i] * av[i];
        delta = std::move(d_in);
    }
    if (!g.all_finite()) throw NumericError("encoder_backward: non-finite gradient");
    return g;
}

Gradients finite_diff_gradient(const std::function<double(const EncoderParams&)>& loss_fn,
                               const EncoderParams& params, double h) {
    if (!(h > 0.0)) throw ConfigError("finite_diff_gradient: h must be positive");
    EncoderParams probe = params;
    Gradients g = Gradients::zeros_like(params);
    auto blocks = param_blocks(probe.layers);
    auto out = param_blocks(g.layers);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        for (std::size_t i = 0; i < blocks[b].size(); ++i) {
            const double orig = blocks[b][i];
            blocks[b][i] = orig + h;
            const double up = loss_fn(probe);
            blocks[b][i] = orig - h;
            const double down = loss_fn(probe);
            blocks[b][i] = orig;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw NumericError("finite_diff_gradient: non-finite loss");
            }
            out[b][i] = (up - down) / (2.0 * h);
        }
    }
    return g;
}

double max_relative_error(const Gradients& a, const Gradients& b, double relative_floor) {
    if (!congruent(a.layers, b.layers)) throw ShapeError("max_relative_error: shape mismatch");
    auto x = param_blocks(a.layers);
    auto y = param_blocks(b.layers);
    const double floor = relative_floor * std::max(a.max_abs(), b.max_abs());
    double worst = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        for (std::size_t i = 0; i < x[k].size(); ++i) {
            const double diff = std::abs(x[k][i] - y[k][i]);
            if (diff == 0.0) continue;
            const double denom = std::max({std::abs(x[k][i]), std::abs(y[k][i]), floor});
            worst = std::max(worst, diff / denom);
        }
    }
    return worst;
}

}  // namespace awcol
