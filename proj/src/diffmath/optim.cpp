#include "oodseg/diffmath/optim.hpp"

#include <cmath>
#include <string>

#include "oodseg/errors.hpp"

namespace oodseg::diffmath {

OptimState::OptimState(AdamWConfig config, std::span<const Tensor> params)
    : config_(config), learning_rate_(config.learning_rate) {
    if (!(config_.learning_rate > 0.0)) throw ValidationError("adamw: learning rate must be positive");
    if (config_.weight_decay < 0.0) throw ValidationError("adamw: weight decay must be non-negative");
    if (!(config_.decay_factor > 0.0)) throw ValidationError("adamw: decay factor must be positive");
    first_.reserve(params.size());
    second_.reserve(params.size());
    for (const Tensor& p : params) {
        first_.emplace_back(p.size(), 0.0);
        second_.emplace_back(p.size(), 0.0);
    }
}

void OptimState::end_epoch() {
    ++epochs_;
    if (config_.decay_every > 0 && epochs_ % config_.decay_every == 0) learning_rate_ *= config_.decay_factor;
}

void optimizer_step(std::vector<Tensor>& params, std::span<const Tensor> grads, OptimState& state) {
    if (params.size() != grads.size() || params.size() != state.first_.size()) {
        throw ShapeError("adamw: " + std::to_string(params.size()) + " parameters, " +
                         std::to_string(grads.size()) + " gradients, " + std::to_string(state.first_.size()) +
                         " moment slots");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (!params[k].same_shape(grads[k])) {
            throw ShapeError("adamw: parameter " + std::to_string(k) + " has shape " +
                             shape_to_string(params[k].shape()) + ", gradient " + shape_to_string(grads[k].shape()));
        }
        for (double g : grads[k].data()) {
            if (!std::isfinite(g)) throw NumericError("adamw: non-finite gradient for parameter " + std::to_string(k));
        }
    }

    const AdamWConfig& c = state.config_;
    ++state.steps_;
    const double t = static_cast<double>(state.steps_);
    const double bias1 = 1.0 - std::pow(c.beta1, t);
    const double bias2 = 1.0 - std::pow(c.beta2, t);
    const double lr = state.learning_rate_;

    for (std::size_t k = 0; k < params.size(); ++k) {
        std::vector<double>& m = state.first_[k];
        std::vector<double>& v = state.second_[k];
        const auto g = grads[k].data();
        const auto p = params[k].data();
        std::vector<double> next(p.begin(), p.end());
        for (std::size_t i = 0; i < next.size(); ++i) {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            const double mhat = m[i] / bias1;
            const double vhat = v[i] / bias2;
            next[i] -= lr * (mhat / (std::sqrt(vhat) + c.epsilon) + c.weight_decay * next[i]);
        }
        params[k] = Tensor(params[k].shape(), std::move(next));
    }
}

}  // namespace oodseg::diffmath
