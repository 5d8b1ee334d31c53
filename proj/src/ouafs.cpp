#include "oodseg/ouafs.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "oodseg/errors.hpp"

namespace oodseg::ouafs {

namespace dm = diffmath;

namespace {

void check_softmax(const Tensor& probs, std::size_t min_classes, const char* op) {
    if (probs.rank() != 2) throw ShapeError(std::string(op) + ": expected [H*W x K], got " + dm::shape_to_string(probs.shape()));
    if (probs.cols() < min_classes) {
        throw ValidationError(std::string(op) + ": needs at least " + std::to_string(min_classes) + " classes");
    }
    const std::size_t k = probs.cols();
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double p = probs[i * k + j];
            if (p < 0.0) throw ValidationError(std::string(op) + ": negative probability at pixel " + std::to_string(i));
            s += p;
        }
        if (std::abs(s - 1.0) > 1e-6) {
            throw ValidationError(std::string(op) + ": probabilities at pixel " + std::to_string(i) + " sum to " +
                                  std::to_string(s));
        }
    }
}

Tensor uniform(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(rows * cols);
    for (double& x : v) x = dist(rng);
    return Tensor::matrix(rows, cols, std::move(v));
}

}  // namespace

Tensor entropy_map(const Tensor& probs) {
    check_softmax(probs, 2, "entropy_map");
    const std::size_t n = probs.rows(), k = probs.cols();
    const double norm = std::log(static_cast<double>(k));
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double h = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double p = probs[i * k + j];
            if (p > 0.0) h -= p * std::log(p);
        }
        out[i] = std::clamp(h / norm, 0.0, 1.0);
    }
    return Tensor::matrix(n, 1, std::move(out));
}

Tensor distance_map(const Tensor& probs) {
    check_softmax(probs, 2, "distance_map");
    const std::size_t n = probs.rows(), k = probs.cols();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double first = -1.0, second = -1.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double p = probs[i * k + j];
            if (p > first) {
                second = first;
                first = p;
            } else if (p > second) {
                second = p;
            }
        }
        out[i] = std::clamp(1.0 - (first - second), 0.0, 1.0);
    }
    return Tensor::matrix(n, 1, std::move(out));
}

UncertaintyMaps UncertaintyMaps::from_probabilities(const Tensor& probs) {
    Tensor entropy = entropy_map(probs);
    Tensor distance = distance_map(probs);
    const std::size_t n = probs.rows(), k = probs.cols();
    std::vector<double> onehot(n * k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j) {
            if (probs[i * k + j] > probs[i * k + best]) best = j;
        }
        onehot[i * k + best] = 1.0;
    }
    return UncertaintyMaps{Tensor::matrix(n, k, std::move(onehot)), std::move(entropy), std::move(distance)};
}

FusionParams FusionParams::initialize(std::size_t channels, std::size_t classes, std::size_t layers,
                                      std::uint64_t seed) {
    if (channels == 0 || classes == 0 || layers == 0) throw ValidationError("fusion: dimensions must be positive");
    std::mt19937_64 rng(seed);
    FusionParams p;
    p.channels = channels;
    p.classes = classes;
    const double c = static_cast<double>(channels);
    for (std::size_t i = 0; i < layers; ++i) {
        FusionLayerParams l;
        l.project = uniform(rng, channels + classes, channels, 1.0 / std::sqrt(c + static_cast<double>(classes)));
        l.gate_scale = Tensor::filled({1, 1}, 1.0);
        l.dist_embed = uniform(rng, 1, channels, 1.0);
        l.dist_bias = Tensor::zeros({1, channels});
        l.query = uniform(rng, channels, channels, 1.0 / std::sqrt(c));
        l.key = uniform(rng, channels, channels, 1.0 / std::sqrt(c));
        l.value = uniform(rng, channels, channels, 1.0 / std::sqrt(c));
        l.output = uniform(rng, channels, channels, 1.0 / std::sqrt(c));
        l.ortho = uniform(rng, 2 * channels, channels, 1.0 / std::sqrt(2.0 * c));
        p.layers.push_back(std::move(l));
    }
    return p;
}

std::vector<Tensor> FusionParams::parameters() const {
    std::vector<Tensor> out;
    out.reserve(layers.size() * kTensorsPerLayer);
    for (const FusionLayerParams& l : layers) {
        for (const Tensor* t : {&l.project, &l.gate_scale, &l.dist_embed, &l.dist_bias, &l.query, &l.key, &l.value,
                                &l.output, &l.ortho}) {
            out.push_back(*t);
        }
    }
    return out;
}

FusionParams FusionParams::from_parameters(const FusionParams& layout, std::span<const Tensor> params) {
    const std::vector<Tensor> expected = layout.parameters();
    if (params.size() != expected.size()) {
        throw ValidationError("fusion: expected " + std::to_string(expected.size()) + " tensors, got " +
                              std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].same_shape(expected[i])) {
            throw ShapeError("fusion: tensor " + std::to_string(i) + " has shape " +
                             dm::shape_to_string(params[i].shape()) + ", expected " +
                             dm::shape_to_string(expected[i].shape()));
        }
    }
    FusionParams out = layout;
    for (std::size_t i = 0; i < out.layers.size(); ++i) {
        const Tensor* t = &params[i * kTensorsPerLayer];
        out.layers[i] = FusionLayerParams{t[0], t[1], t[2], t[3], t[4], t[5], t[6], t[7], t[8]};
    }
    return out;
}

std::vector<FusionLayerVars> bind(std::span<const Var> params) {
    if (params.size() % kTensorsPerLayer != 0) throw ValidationError("fusion: parameter count not a layer multiple");
    std::vector<FusionLayerVars> out;
    for (std::size_t i = 0; i < params.size(); i += kTensorsPerLayer) {
        const Var* v = &params[i];
        out.push_back(FusionLayerVars{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]});
    }
    return out;
}

Var fuse_layer(const Var& features, const UncertaintyMaps& u, const FusionLayerVars& p) {
    Tape& tape = features.tape();
    const std::size_t n = features.value().rows();
    if (u.seg.rows() != n || u.entropy.rows() != n || u.distance.rows() != n) {
        throw ShapeError("fuse_layer: features " + dm::shape_to_string(features.shape()) + " vs uncertainty maps " +
                         dm::shape_to_string(u.seg.shape()));
    }
    const std::size_t channels = features.value().cols();

    Var x = dm::matmul(dm::concat_cols(features, tape.constant(u.seg)), p.project);
    Var gate = dm::sigmoid(tape.constant(u.entropy) * p.gate_scale);
    x = dm::mul_col(x, gate);

    Var dist = dm::add_row(dm::matmul(tape.constant(u.distance), p.dist_embed), p.dist_bias);
    Var q = dm::matmul(x, p.query);
    Var k = dm::matmul(dist, p.key);
    Var v = dm::matmul(dist, p.value);
    Var attn = dm::softmax_rows(dm::matmul(q, dm::transpose(k)) * (1.0 / std::sqrt(static_cast<double>(channels))));
    return x + dm::matmul(dm::matmul(attn, v), p.output);
}

Var ortho_fuse(const Var& current, const Var& previous, const Var& combination) {
    if (current.shape() != previous.shape()) {
        throw ShapeError("ortho_fuse: shape mismatch " + dm::shape_to_string(current.shape()) + " vs " +
                         dm::shape_to_string(previous.shape()));
    }
    return dm::matmul(dm::concat_cols(current, previous), combination);
}

Var ouafs_loss(std::span<const Var> features, double lambda1, double lambda2) {
    if (features.size() < 2) throw ValidationError("ouafs_loss: needs at least two feature vectors");
    if (lambda1 < 0.0 || lambda2 < 0.0) throw ValidationError("ouafs_loss: lambdas must be non-negative");
    const std::size_t len = features[0].value().size();
    std::vector<Var> unit;
    for (std::size_t i = 0; i < features.size(); ++i) {
        const Var& f = features[i];
        if (f.value().size() != len) {
            throw ShapeError("ouafs_loss: feature " + std::to_string(i) + " has " + std::to_string(f.value().size()) +
                             " entries, expected " + std::to_string(len));
        }
        Var flat = dm::reshape(f, {len});
        Var sq = dm::dot(flat, flat);
        if (!(sq.item() > 0.0)) throw ValidationError("ouafs_loss: feature " + std::to_string(i) + " has zero length");
        unit.push_back(flat / dm::sqrt(sq));
    }
    Tape& tape = features[0].tape();
    Var loss = tape.constant(Tensor::scalar(0.0));
    for (std::size_t i = 0; i + 1 < unit.size(); ++i) {
        Var d = dm::dot(unit[i], unit[i + 1]);
        loss = loss + dm::abs(d) * lambda1 + dm::square(d) * lambda2;
    }
    return loss;
}

FusedStack fuse_stack(Tape& tape, std::span<const Var> stack, const UncertaintyMaps& u,
                      std::span<const FusionLayerVars> params, double lambda1, double lambda2) {
    if (stack.empty()) throw ValidationError("fuse_stack: empty feature stack");
    if (params.size() < stack.size()) {
        throw ValidationError("fuse_stack: " + std::to_string(stack.size()) + " layers but " +
                              std::to_string(params.size()) + " parameter sets");
    }
    FusedStack out;
    for (std::size_t i = 0; i < stack.size(); ++i) {
        Var enhanced = fuse_layer(stack[i], u, params[i]);
        if (i > 0) enhanced = ortho_fuse(enhanced, out.layers[i - 1], params[i].ortho);
        out.layers.push_back(enhanced);
    }
    out.loss = out.layers.size() >= 2 ? ouafs_loss(out.layers, lambda1, lambda2) : tape.constant(Tensor::scalar(0.0));
    return out;
}

std::vector<Tensor> stub_encoder(const Tensor& image, std::size_t layers, std::size_t channels, std::uint64_t seed) {
    if (image.rank() != 2) throw ShapeError("stub_encoder: image must be [H*W x c]");
    std::mt19937_64 rng(seed);
    const std::size_t n = image.rows(), c_in = image.cols();
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(c_in)));
    std::vector<Tensor> out;
    for (std::size_t l = 0; l < layers; ++l) {
        std::vector<double> w(c_in * channels);
        for (double& x : w) x = dist(rng);
        std::vector<double> f(n * channels, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < channels; ++j) {
                double s = 0.0;
                for (std::size_t p = 0; p < c_in; ++p) s += image[i * c_in + p] * w[p * channels + j];
                f[i * channels + j] = std::tanh(s);
            }
        out.push_back(Tensor::matrix(n, channels, std::move(f)));
    }
    return out;
}

Tensor stub_segmentation(const Tensor& image, std::size_t classes, std::uint64_t seed) {
    if (image.rank() != 2) throw ShapeError("stub_segmentation: image must be [H*W x c]");
    if (classes < 2) throw ValidationError("stub_segmentation: needs at least two classes");
    std::mt19937_64 rng(seed);
    const std::size_t n = image.rows(), c_in = image.cols();
    std::normal_distribution<double> dist(0.0, 3.0 / std::sqrt(static_cast<double>(c_in)));
    std::vector<double> w(c_in * classes);
    for (double& x : w) x = dist(rng);
    std::vector<double> probs(n * classes);
    for (std::size_t i = 0; i < n; ++i) {
        double mx = -1e300;
        for (std::size_t j = 0; j < classes; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < c_in; ++p) s += image[i * c_in + p] * w[p * classes + j];
            probs[i * classes + j] = s;
            mx = std::max(mx, s);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < classes; ++j) {
            probs[i * classes + j] = std::exp(probs[i * classes + j] - mx);
            z += probs[i * classes + j];
        }
        for (std::size_t j = 0; j < classes; ++j) probs[i * classes + j] /= z;
    }
    return Tensor::matrix(n, classes, std::move(probs));
}

}  // namespace oodseg::ouafs
