#include "salt/adam.hpp"

#include <cmath>

namespace salt {

AdamOptimizer::AdamOptimizer(std::vector<Parameter*> params, double lr,
                             double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    slots_.reserve(params.size());
    for (Parameter* p : params) {
        Slot s;
        s.param = p;
        const auto n = static_cast<size_t>(p->tensor.numel());
        s.m.assign(n, 0.0f);
        s.v.assign(n, 0.0f);
        slots_.push_back(std::move(s));
    }
}

void AdamOptimizer::step() {
    ++step_count_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
    for (auto& s : slots_) {
        if (s.param->frozen) continue;
        Tensor& t = s.param->tensor;
        if (!t.has_grad()) {
            throw ProtocolMisuseError("adam step without gradient for parameter '" + s.param->name + "'");
        }
        const float* g = t.grad();
        float* w = t.data();
        const int64_t n = t.numel();
        for (int64_t i = 0; i < n; ++i) {
            const double gi = g[i];
            const double m = beta1_ * s.m[static_cast<size_t>(i)] + (1.0 - beta1_) * gi;
            const double v = beta2_ * s.v[static_cast<size_t>(i)] + (1.0 - beta2_) * gi * gi;
            s.m[static_cast<size_t>(i)] = static_cast<float>(m);
            s.v[static_cast<size_t>(i)] = static_cast<float>(v);
            const double mhat = m / bc1;
            const double vhat = v / bc2;
            w[i] = static_cast<float>(w[i] - lr_ * mhat / (std::sqrt(vhat) + eps_));
        }
    }
    clear_grads();
}

void AdamOptimizer::clear_grads() {
    for (auto& s : slots_) s.param->tensor.clear_grad();
}

} // namespace salt
