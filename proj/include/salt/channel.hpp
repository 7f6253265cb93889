#pragma once

#include <cstdint>
#include <mutex>

#include "salt/rng.hpp"
#include "salt/tensor.hpp"

namespace salt {

// Latent elements are shipped as 32-bit reals; V_z accounting uses exactly
// this width with no framing overhead.
constexpr uint64_t kBitsPerElement = 32;

inline uint64_t payload_bits(int64_t elements) {
    return static_cast<uint64_t>(elements) * kBitsPerElement;
}

struct ChannelConfig {
    double loss_rate = 0.0;       // p, element drop probability on the uplink
    double bandwidth_bps = 80e6;  // theta
    uint64_t seed = 0;
};

// Element-keep mask, i.i.d. Bernoulli(1-p) over the payload.
struct LossMask {
    Shape shape;
    std::vector<uint8_t> keep;

    int64_t kept() const {
        int64_t n = 0;
        for (uint8_t k : keep) n += k;
        return n;
    }
};

LossMask draw_mask(Rng& rng, const Shape& shape, double p);

// One simulated link direction pair: a lossy uplink that zero-fills dropped
// elements and an identity downlink (reliable delivery).
class Channel {
  public:
    explicit Channel(const ChannelConfig& cfg);

    // fresh mask per call; p=0 and p=1 are exact
    Tensor apply_uplink(const Tensor& payload);
    // identity: gradients arrive intact
    Tensor apply_downlink(const Tensor& payload) const;

    const ChannelConfig& config() const { return cfg_; }

  private:
    ChannelConfig cfg_;
    Rng rng_;
};

// Per-batch communication latency in seconds: 2 * (V_z * B / theta), the
// factor 2 covering the activation upload and the equal-size gradient
// download of one training round.
double comm_latency_per_batch(uint64_t vz_bits, uint64_t batch_size, double theta_bps);

// Total across training: E * ceil(N / B) * per-batch latency.
double comm_latency_total(uint64_t epochs, uint64_t n_samples, uint64_t batch_size,
                          double per_batch_s);

// Accumulated communication/computation seconds of a run. Thread-safe; both
// protocol endpoints feed the same ledger.
class LatencyLedger {
  public:
    void add_comm(double seconds);
    void add_comp(double seconds);
    void count_batch();
    void count_epoch();

    double comm_s() const;
    double comp_s() const;
    uint64_t batches() const;
    uint64_t epochs() const;

  private:
    mutable std::mutex mu_;
    double comm_s_ = 0.0;
    double comp_s_ = 0.0;
    uint64_t batches_ = 0;
    uint64_t epochs_ = 0;
};

} // namespace salt
