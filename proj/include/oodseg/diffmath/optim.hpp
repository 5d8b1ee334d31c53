#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "oodseg/diffmath/tensor.hpp"

namespace oodseg::diffmath {

struct AdamWConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 1e-4;
    // Step schedule: the rate is multiplied by `decay_factor` after every
    // `decay_every` epochs. Zero disables the schedule.
    std::size_t decay_every = 10;
    double decay_factor = 0.9;
};

/// Moment accumulators and schedule position for one parameter set.
class OptimState {
public:
    OptimState(AdamWConfig config, std::span<const Tensor> params);

    const AdamWConfig& config() const noexcept { return config_; }
    double learning_rate() const noexcept { return learning_rate_; }
    std::size_t steps() const noexcept { return steps_; }
    std::size_t epochs() const noexcept { return epochs_; }

    /// Advances the epoch counter and applies the step decay at boundaries.
    void end_epoch();

private:
    friend void optimizer_step(std::vector<Tensor>& params, std::span<const Tensor> grads, OptimState& state);

    AdamWConfig config_;
    double learning_rate_;
    std::size_t steps_ = 0;
    std::size_t epochs_ = 0;
    std::vector<std::vector<double>> first_;
    std::vector<std::vector<double>> second_;
};

/// One AdamW update (decoupled weight decay). Throws NumericError naming the
/// parameter index when a gradient is non-finite, ShapeError on mismatch.
void optimizer_step(std::vector<Tensor>& params, std::span<const Tensor> grads, OptimState& state);

}  // namespace oodseg::diffmath
