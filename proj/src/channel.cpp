#include "salt/channel.hpp"

#include <cstring>

#include "salt/errors.hpp"

namespace salt {

LossMask draw_mask(Rng& rng, const Shape& shape, double p) {
    LossMask m;
    m.shape = shape;
    const int64_t n = shape_numel(shape);
    m.keep.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) m.keep[static_cast<size_t>(i)] = rng.keep(p) ? 1 : 0;
    return m;
}

Channel::Channel(const ChannelConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {
    if (cfg.loss_rate < 0.0 || cfg.loss_rate > 1.0) {
        throw ConfigurationError("loss rate must lie in [0,1]");
    }
    if (cfg.bandwidth_bps <= 0.0) throw ConfigurationError("bandwidth must be positive");
}

Tensor Channel::apply_uplink(const Tensor& payload) {
    if (cfg_.loss_rate == 0.0) return payload;
    if (cfg_.loss_rate == 1.0) return Tensor::zeros(payload.shape());
    const LossMask mask = draw_mask(rng_, payload.shape(), cfg_.loss_rate);
    Tensor out = Tensor::zeros(payload.shape());
    const float* in = payload.data();
    float* o = out.data();
    for (int64_t i = 0; i < payload.numel(); ++i) {
        if (mask.keep[static_cast<size_t>(i)]) o[i] = in[i];
    }
    return out;
}

Tensor Channel::apply_downlink(const Tensor& payload) const { return payload; }

double comm_latency_per_batch(uint64_t vz_bits, uint64_t batch_size, double theta_bps) {
    if (vz_bits == 0 || batch_size == 0 || theta_bps <= 0.0) {
        throw ConfigurationError("latency arguments must be positive");
    }
    return 2.0 * (static_cast<double>(vz_bits * batch_size) / theta_bps);
}

double comm_latency_total(uint64_t epochs, uint64_t n_samples, uint64_t batch_size,
                          double per_batch_s) {
    if (batch_size == 0 || per_batch_s < 0.0) throw ConfigurationError("bad latency arguments");
    const uint64_t batches = (n_samples + batch_size - 1) / batch_size;
    return static_cast<double>(epochs) * static_cast<double>(batches) * per_batch_s;
}

void LatencyLedger::add_comm(double seconds) {
    if (seconds < 0.0) throw ConfigurationError("negative communication time");
    std::lock_guard<std::mutex> lk(mu_);
    comm_s_ += seconds;
}

void LatencyLedger::add_comp(double seconds) {
    if (seconds < 0.0) throw ConfigurationError("negative computation time");
    std::lock_guard<std::mutex> lk(mu_);
    comp_s_ += seconds;
}

void LatencyLedger::count_batch() {
    std::lock_guard<std::mutex> lk(mu_);
    ++batches_;
}

void LatencyLedger::count_epoch() {
    std::lock_guard<std::mutex> lk(mu_);
    ++epochs_;
}

double LatencyLedger::comm_s() const {
    std::lock_guard<std::mutex> lk(mu_);
    return comm_s_;
}

double LatencyLedger::comp_s() const {
    std::lock_guard<std::mutex> lk(mu_);
    return comp_s_;
}

uint64_t LatencyLedger::batches() const {
    std::lock_guard<std::mutex> lk(mu_);
    return batches_;
}

uint64_t LatencyLedger::epochs() const {
    std::lock_guard<std::mutex> lk(mu_);
    return epochs_;
}

} // namespace salt
