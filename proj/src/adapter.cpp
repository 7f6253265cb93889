#include "salt/adapter.hpp"

#include <cstring>

namespace salt {

const char* adapter_kind_name(AdapterKind k) {
    return k == AdapterKind::Residual ? "residual" : "insertion";
}

Adapter::Adapter(AdapterKind kind, int64_t channels, uint64_t seed)
    : kind_(kind), channels_(channels), seed_(seed) {
    if (channels <= 0) throw ConfigurationError("adapter channel count must be positive");
    stack_ = std::make_shared<Sequential>();
    stack_->append(std::make_shared<Conv2d>("adapter.conv1", channels, channels, 3, 1, 1, true));
    stack_->append(std::make_shared<BatchNorm2d>("adapter.bn1", channels));
    stack_->append(std::make_shared<ReLU>());
    stack_->append(std::make_shared<Conv2d>("adapter.conv2", channels, channels, 3, 1, 1, true));
    stack_->append(std::make_shared<BatchNorm2d>("adapter.bn2", channels));
    stack_->append(std::make_shared<ReLU>());
    auto out = std::make_shared<Conv2d>("adapter.out", channels, channels, 1, 1, 0, true);
    stack_->append(out);

    Rng rng(seed);
    stack_->init(rng);
    // identity start: the output conv contributes exactly zero until trained
    std::memset(out->weight.tensor.data(), 0, static_cast<size_t>(out->weight.tensor.numel()) * 4);
    std::memset(out->bias.tensor.data(), 0, static_cast<size_t>(out->bias.tensor.numel()) * 4);
}

Tensor Adapter::forward(Tape* tape, const Tensor& z, bool train) {
    if (z.rank() != 4 || z.dim(1) != channels_) {
        throw DimensionError("adapter expects [N," + std::to_string(channels_) + ",H,W], got " +
                             shape_str(z.shape()));
    }
    Tensor s = stack_->forward(tape, z, train);
    return kind_ == AdapterKind::Residual ? add(tape, z, s) : s;
}

std::vector<Parameter*> Adapter::parameters() {
    std::vector<Parameter*> out;
    stack_->collect_params(out);
    return out;
}

int64_t Adapter::trainable_param_count() {
    return param_count(*stack_);
}

int64_t Adapter::mac_count(int64_t h, int64_t w) const {
    const int64_t hw = h * w;
    const int64_t c2 = channels_ * channels_;
    return 2 * (c2 * 9 * hw) + c2 * hw;
}

std::vector<uint8_t> Adapter::image() const { return layer_image(*stack_); }

void Adapter::load(const NamedTensors& stored) { load_into_layer(*stack_, stored); }

Adapter Adapter::clone() const {
    Adapter copy(kind_, channels_, seed_);
    copy.load(decode_saltw(image()));
    return copy;
}

} // namespace salt
