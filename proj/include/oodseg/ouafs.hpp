#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "oodseg/diffmath/tape.hpp"

namespace oodseg::ouafs {

using diffmath::Tape;
using diffmath::Tensor;
using diffmath::Var;

// Feature maps are stored as [H*W x C] matrices, one row per pixel.

/// Normalized softmax entropy -sum p ln p / ln K per pixel, as [H*W x 1].
/// `probs` is [H*W x K]; rows must sum to 1 within 1e-6.
Tensor entropy_map(const Tensor& probs);

/// 1 - (p_max - p_second) per pixel, as [H*W x 1]. Needs K >= 2.
Tensor distance_map(const Tensor& probs);

struct UncertaintyMaps {
    Tensor seg;       // [H*W x K] one-hot argmax
    Tensor entropy;   // [H*W x 1]
    Tensor distance;  // [H*W x 1]

    /// Derives all three maps from a softmax map.
    static UncertaintyMaps from_probabilities(const Tensor& probs);
};

struct FusionLayerParams {
    Tensor project;     // [(C+K) x C]  concat projection
    Tensor gate_scale;  // [1 x 1]      entropy gate: X * sigmoid(scale * E)
    Tensor dist_embed;  // [1 x C]      distance embedding weight
    Tensor dist_bias;   // [1 x C]
    Tensor query;       // [C x C]
    Tensor key;         // [C x C]
    Tensor value;       // [C x C]
    Tensor output;      // [C x C]
    Tensor ortho;       // [2C x C]     combination with the previous layer
};

inline constexpr std::size_t kTensorsPerLayer = 9;

struct FusionParams {
    std::size_t channels = 0;
    std::size_t classes = 0;
    std::vector<FusionLayerParams> layers;
    double lambda1 = 1.0;
    double lambda2 = 1.0;

    static FusionParams initialize(std::size_t channels, std::size_t classes, std::size_t layers, std::uint64_t seed);

    /// Layer-major list of all tensors (kTensorsPerLayer per layer).
    std::vector<Tensor> parameters() const;
    /// Rebuilds from a parameter list shaped like `layout.parameters()`.
    static FusionParams from_parameters(const FusionParams& layout, std::span<const Tensor> params);
};

struct FusionLayerVars {
    Var project, gate_scale, dist_embed, dist_bias, query, key, value, output, ortho;
};

std::vector<FusionLayerVars> bind(std::span<const Var> params);

/// Concat(F, S) -> projection; gate by sigmoid(scale * E); then add
/// single-head cross-attention with queries from X and keys/values from the
/// distance embedding.
Var fuse_layer(const Var& features, const UncertaintyMaps& u, const FusionLayerVars& p);

/// Concat(current, previous) projected back to C channels.
Var ortho_fuse(const Var& current, const Var& previous, const Var& combination);

/// lambda1 * sum |f_i . f_i+1| + lambda2 * sum (f_i . f_i+1)^2 over
/// consecutive pairs of unit-normalized, flattened features.
Var ouafs_loss(std::span<const Var> features, double lambda1, double lambda2);

struct FusedStack {
    std::vector<Var> layers;
    Var loss;
};

/// Runs fuse_layer on every layer and ortho_fuse against the previous
/// enhanced layer from the second layer on. The loss covers consecutive
/// enhanced layers (zero for a single layer).
FusedStack fuse_stack(Tape& tape, std::span<const Var> stack, const UncertaintyMaps& u,
                      std::span<const FusionLayerVars> params, double lambda1, double lambda2);

/// Fixed random linear feature extractor standing in for a real backbone:
/// layer i is tanh(image * W_i), image [H*W x c_in].
std::vector<Tensor> stub_encoder(const Tensor& image, std::size_t layers, std::size_t channels, std::uint64_t seed);

/// Softmax over a fixed random linear head, used to synthesise uncertainty
/// inputs for the stub pipeline.
Tensor stub_segmentation(const Tensor& image, std::size_t classes, std::uint64_t seed);

}  // namespace oodseg::ouafs
