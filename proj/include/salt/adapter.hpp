#pragma once

#include <memory>

#include "salt/layers.hpp"

namespace salt {

enum class AdapterKind { Residual, Insertion };

const char* adapter_kind_name(AdapterKind k);

// Three-layer client-side adapter over a latent of C channels:
//   conv3x3(C->C) + BN + ReLU, conv3x3(C->C) + BN + ReLU, conv1x1(C->C).
// The final 1x1 conv starts at exactly zero, so a fresh residual adapter is
// the identity map and a fresh insertion adapter outputs the zero tensor.
// Channel count and spatial size are never changed.
class Adapter {
  public:
    Adapter(AdapterKind kind, int64_t channels, uint64_t seed);

    // residual: z + S(z); insertion: S(z)
    Tensor forward(Tape* tape, const Tensor& z, bool train);

    std::vector<Parameter*> parameters();
    // exact count of trainable scalars (conv weights+biases, BN gamma/beta)
    int64_t trainable_param_count();
    // multiply-accumulates of one forward pass at the given spatial size
    // (convolution MACs only)
    int64_t mac_count(int64_t h, int64_t w) const;

    AdapterKind kind() const { return kind_; }
    int64_t channels() const { return channels_; }

    std::vector<uint8_t> image() const;
    void load(const NamedTensors& stored);
    Adapter clone() const;

  private:
    AdapterKind kind_;
    int64_t channels_;
    uint64_t seed_;
    std::shared_ptr<Sequential> stack_;
};

} // namespace salt
