#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include "salt/rng.hpp"
#include "salt/tensor.hpp"

namespace salt::test {

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i)
        t.data()[i] = static_cast<float>(scale * rng.normal());
    return t;
}

// Probe functional f(model outputs) = sum_i R_i * y_i with fixed random R,
// reduced in double. Central finite differences of f against the analytic
// gradient from backward_seeded(R).
struct FdProbe {
    Tensor weights; // R, same shape as the op output

    explicit FdProbe(const Tensor& reference_output, Rng& rng)
        : weights(random_tensor(reference_output.shape(), rng)) {}

    double value(const Tensor& y) const {
        double acc = 0.0;
        for (int64_t i = 0; i < y.numel(); ++i)
            acc += static_cast<double>(weights.data()[i]) * y.data()[i];
        return acc;
    }
};

// max over elements of |analytic - numeric| / max(|numeric|, floor)
inline double max_rel_err(const std::vector<double>& analytic, const std::vector<double>& numeric,
                          double floor = 1e-2) {
    double worst = 0.0;
    for (size_t i = 0; i < analytic.size(); ++i) {
        const double scale = std::max(std::abs(numeric[i]), floor);
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
    }
    return worst;
}

// Central finite differences of `forward` w.r.t. the elements of `target`.
// `forward` must re-run the whole computation and return the probe value.
inline std::vector<double> central_differences(Tensor& target, const std::function<double()>& forward,
                                               double step = 1e-3) {
    std::vector<double> grads(static_cast<size_t>(target.numel()));
    for (int64_t i = 0; i < target.numel(); ++i) {
        const float keep = target.data()[i];
        target.data()[i] = static_cast<float>(keep + step);
        const double hi = forward();
        target.data()[i] = static_cast<float>(keep - step);
        const double lo = forward();
        target.data()[i] = keep;
        grads[static_cast<size_t>(i)] = (hi - lo) / (2.0 * step);
    }
    return grads;
}

inline std::vector<double> data_of(const Tensor& t) {
    std::vector<double> out(static_cast<size_t>(t.numel()));
    for (int64_t i = 0; i < t.numel(); ++i) out[static_cast<size_t>(i)] = t.data()[i];
    return out;
}

inline std::vector<double> grad_of(const Tensor& t) {
    std::vector<double> out(static_cast<size_t>(t.numel()), 0.0);
    if (t.has_grad()) {
        for (int64_t i = 0; i < t.numel(); ++i) out[static_cast<size_t>(i)] = t.grad()[i];
    }
    return out;
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (int64_t i = 0; i < a.numel(); ++i) {
        if (std::memcmp(&a.data()[i], &b.data()[i], sizeof(float)) != 0) return false;
    }
    return true;
}

} // namespace salt::test
