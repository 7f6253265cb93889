#pragma once

#include <cstdint>
#include <vector>

#include "salt/tensor.hpp"

namespace salt {

// Adam with bias correction. Moment buffers are kept per parameter in
// registration order; gradients are cleared after every step.
class AdamOptimizer {
  public:
    explicit AdamOptimizer(std::vector<Parameter*> params, double lr = 1e-3,
                           double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    // One update over all unfrozen parameters. Every unfrozen parameter must
    // hold a gradient (a backward pass must have run since the last step).
    void step();

    void clear_grads();
    int64_t step_count() const { return step_count_; }
    double learning_rate() const { return lr_; }

  private:
    struct Slot {
        Parameter* param;
        std::vector<float> m;
        std::vector<float> v;
    };
    std::vector<Slot> slots_;
    double lr_, beta1_, beta2_, eps_;
    int64_t step_count_ = 0;
};

} // namespace salt
