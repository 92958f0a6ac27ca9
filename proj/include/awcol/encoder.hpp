#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "awcol/matrix.hpp"

namespace awcol {

/// One affine layer: weight is out x in, bias has length out.
struct LayerParams {
    Matrix weight;
    std::vector<double> bias;

    std::size_t in_dim() const { return weight.cols(); }
    std::size_t out_dim() const { return weight.rows(); }
    friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

/// Feed-forward encoder: tanh on every hidden layer, identity on the last.
struct EncoderParams {
    std::vector<LayerParams> layers;

    std::size_t input_dim() const { return layers.front().in_dim(); }
    std::size_t output_dim() const { return layers.back().out_dim(); }
    std::size_t param_count() const;
    friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

/// Partial derivatives laid out exactly like EncoderParams.
struct Gradients {
    std::vector<LayerParams> layers;

    static Gradients zeros_like(const EncoderParams& params);
    std::size_t param_count() const;
    double max_abs() const;
    bool all_finite() const;
    Gradients& operator+=(const Gradients& other);
    Gradients& operator*=(double s);
};

/// Flat views of every parameter block, weight then bias per layer.
std::vector<std::span<double>> param_blocks(std::vector<LayerParams>& layers);
std::vector<std::span<const double>> param_blocks(const std::vector<LayerParams>& layers);

/// Throws ShapeError unless the layer dimensions chain and every block is sized.
void validate_encoder(const EncoderParams& params);
bool congruent(const std::vector<LayerParams>& a, const std::vector<LayerParams>& b);

/// Glorot-uniform weights, zero biases. dims = {in, hidden..., out}.
EncoderParams init_encoder(std::span<const std::size_t> dims, std::uint64_t seed);

/// Activation record of one forward pass.
struct ForwardCache {
    /// activations[0] is the input; activations[l] is the input of layer l.
    std::vector<Matrix> activations;
    std::vector<std::size_t> layer_dims;
};

struct ForwardResult {
    Matrix embeddings;
    ForwardCache cache;
};

ForwardResult encoder_forward(const EncoderParams& params, const Matrix& inputs);

/// Forward without keeping the activation record.
Matrix encode(const EncoderParams& params, const Matrix& inputs);

Gradients encoder_backward(const EncoderParams& params, const ForwardCache& cache,
                           const Matrix& d_embeddings);

/// Central-difference estimate of d loss / d params.
Gradients finite_diff_gradient(const std::function<double(const EncoderParams&)>& loss_fn,
                               const EncoderParams& params, double h);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, relative_floor * max_j max(|a_j|, |b_j|)).
/// The floor keeps structurally zero entries (resolved by central differences
/// only to about eps / h) from dominating.
double max_relative_error(const Gradients& a, const Gradients& b, double relative_floor = 1e-4);

}  // namespace awcol
