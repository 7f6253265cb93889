#include "salt/layers.hpp"

#include <cmath>
#include <cstring>
#include <unordered_map>

namespace salt {

namespace {

void he_uniform(Tensor& t, int64_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (int64_t i = 0; i < t.numel(); ++i)
        t.data()[i] = static_cast<float>(rng.uniform(-bound, bound));
}

void xavier_uniform(Tensor& t, int64_t fan_in, int64_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (int64_t i = 0; i < t.numel(); ++i)
        t.data()[i] = static_cast<float>(rng.uniform(-bound, bound));
}

void fill(Tensor& t, float v) {
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = v;
}

} // namespace

Conv2d::Conv2d(std::string name, int64_t in_ch_, int64_t out_ch_, int kernel_, int stride_,
               int padding_, bool has_bias_)
    : has_bias(has_bias_), kernel(kernel_), stride(stride_), padding(padding_),
      in_ch(in_ch_), out_ch(out_ch_), name_(std::move(name)) {
    weight.tensor = Tensor::zeros({out_ch, in_ch, kernel, kernel});
    weight.name = name_ + ".weight";
    weight.set_frozen(false);
    if (has_bias) {
        bias.tensor = Tensor::zeros({out_ch});
        bias.name = name_ + ".bias";
        bias.set_frozen(false);
    } else {
        zero_bias_ = Tensor::zeros({out_ch});
    }
}

Tensor Conv2d::forward(Tape* tape, const Tensor& x, bool) {
    return conv2d(tape, x, weight.tensor, has_bias ? bias.tensor : zero_bias_, stride, padding);
}

void Conv2d::collect_params(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    if (has_bias) out.push_back(&bias);
}

void Conv2d::collect_named(NamedTensors& out) const {
    out.emplace_back(weight.name, weight.tensor);
    if (has_bias) out.emplace_back(bias.name, bias.tensor);
}

Shape Conv2d::out_shape(const Shape& in) const {
    if (in.size() != 3 || in[0] != in_ch) {
        throw DimensionError("conv " + name_ + " expects [C,H,W] with C=" + std::to_string(in_ch) +
                             ", got " + shape_str(in));
    }
    const int64_t span_h = in[1] + 2 * padding - kernel;
    const int64_t span_w = in[2] + 2 * padding - kernel;
    if (span_h < 0 || span_w < 0) {
        throw ConfigurationError("conv " + name_ + " kernel exceeds padded input " + shape_str(in));
    }
    return {out_ch, span_h / stride + 1, span_w / stride + 1};
}

void Conv2d::init(Rng& rng) {
    he_uniform(weight.tensor, in_ch * kernel * kernel, rng);
    if (has_bias) fill(bias.tensor, 0.0f);
}

void Conv2d::set_frozen(bool frozen) {
    weight.set_frozen(frozen);
    if (has_bias) bias.set_frozen(frozen);
}

BatchNorm2d::BatchNorm2d(std::string name, int64_t channels, float momentum_, float eps_)
    : momentum(momentum_), eps(eps_), name_(std::move(name)) {
    gamma.tensor = Tensor::full({channels}, 1.0f);
    gamma.name = name_ + ".gamma";
    gamma.set_frozen(false);
    beta.tensor = Tensor::zeros({channels});
    beta.name = name_ + ".beta";
    beta.set_frozen(false);
    running_mean = Tensor::zeros({channels});
    running_var = Tensor::full({channels}, 1.0f);
}

Tensor BatchNorm2d::forward(Tape* tape, const Tensor& x, bool train) {
    return batchnorm2d(tape, x, gamma.tensor, beta.tensor, running_mean, running_var, train,
                       momentum, eps);
}

void BatchNorm2d::collect_params(std::vector<Parameter*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
}

void BatchNorm2d::collect_named(NamedTensors& out) const {
    out.emplace_back(gamma.name, gamma.tensor);
    out.emplace_back(beta.name, beta.tensor);
    out.emplace_back(name_ + ".running_mean", running_mean);
    out.emplace_back(name_ + ".running_var", running_var);
}

Shape BatchNorm2d::out_shape(const Shape& in) const { return in; }

void BatchNorm2d::init(Rng&) {
    fill(gamma.tensor, 1.0f);
    fill(beta.tensor, 0.0f);
    fill(running_mean, 0.0f);
    fill(running_var, 1.0f);
}

void BatchNorm2d::set_frozen(bool frozen) {
    gamma.set_frozen(frozen);
    beta.set_frozen(frozen);
}

Shape MaxPool2d::out_shape(const Shape& in) const {
    if (in.size() != 3) throw DimensionError("maxpool expects [C,H,W], got " + shape_str(in));
    return {in[0], (in[1] - kernel_) / stride_ + 1, (in[2] - kernel_) / stride_ + 1};
}

Shape GlobalAvgPool::out_shape(const Shape& in) const {
    if (in.size() != 3) throw DimensionError("global pool expects [C,H,W], got " + shape_str(in));
    return {in[0]};
}

Linear::Linear(std::string name, int64_t in_features_, int64_t out_features_)
    : in_features(in_features_), out_features(out_features_), name_(std::move(name)) {
    weight.tensor = Tensor::zeros({out_features, in_features});
    weight.name = name_ + ".weight";
    weight.set_frozen(false);
    bias.tensor = Tensor::zeros({out_features});
    bias.name = name_ + ".bias";
    bias.set_frozen(false);
}

Tensor Linear::forward(Tape* tape, const Tensor& x, bool) {
    return linear(tape, x, weight.tensor, bias.tensor);
}

void Linear::collect_params(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
}

void Linear::collect_named(NamedTensors& out) const {
    out.emplace_back(weight.name, weight.tensor);
    out.emplace_back(bias.name, bias.tensor);
}

Shape Linear::out_shape(const Shape& in) const {
    if (in.size() != 1 || in[0] != in_features) {
        throw DimensionError("linear " + name_ + " expects [" + std::to_string(in_features) +
                             "], got " + shape_str(in));
    }
    return {out_features};
}

void Linear::init(Rng& rng) {
    xavier_uniform(weight.tensor, in_features, out_features, rng);
    fill(bias.tensor, 0.0f);
}

void Linear::set_frozen(bool frozen) {
    weight.set_frozen(frozen);
    bias.set_frozen(frozen);
}

BasicBlock::BasicBlock(std::string name, int64_t in_ch, int64_t out_ch, int stride)
    : conv1_(name + ".conv1", in_ch, out_ch, 3, stride, 1, false),
      bn1_(name + ".bn1", out_ch),
      conv2_(name + ".conv2", out_ch, out_ch, 3, 1, 1, false),
      bn2_(name + ".bn2", out_ch) {
    if (stride != 1 || in_ch != out_ch) {
        down_conv_ = std::make_unique<Conv2d>(name + ".down.conv", in_ch, out_ch, 1, stride, 0, false);
        down_bn_ = std::make_unique<BatchNorm2d>(name + ".down.bn", out_ch);
    }
}

Tensor BasicBlock::forward(Tape* tape, const Tensor& x, bool train) {
    Tensor r = conv1_.forward(tape, x, train);
    r = bn1_.forward(tape, r, train);
    r = relu(tape, r);
    r = conv2_.forward(tape, r, train);
    r = bn2_.forward(tape, r, train);
    Tensor sc = x;
    if (down_conv_) {
        sc = down_conv_->forward(tape, x, train);
        sc = down_bn_->forward(tape, sc, train);
    }
    return relu(tape, add(tape, r, sc));
}

void BasicBlock::collect_params(std::vector<Parameter*>& out) {
    conv1_.collect_params(out);
    bn1_.collect_params(out);
    conv2_.collect_params(out);
    bn2_.collect_params(out);
    if (down_conv_) {
        down_conv_->collect_params(out);
        down_bn_->collect_params(out);
    }
}

void BasicBlock::collect_named(NamedTensors& out) const {
    conv1_.collect_named(out);
    bn1_.collect_named(out);
    conv2_.collect_named(out);
    bn2_.collect_named(out);
    if (down_conv_) {
        down_conv_->collect_named(out);
        down_bn_->collect_named(out);
    }
}

Shape BasicBlock::out_shape(const Shape& in) const {
    return bn2_.out_shape(conv2_.out_shape(bn1_.out_shape(conv1_.out_shape(in))));
}

void BasicBlock::init(Rng& rng) {
    conv1_.init(rng);
    bn1_.init(rng);
    conv2_.init(rng);
    bn2_.init(rng);
    if (down_conv_) {
        down_conv_->init(rng);
        down_bn_->init(rng);
    }
}

void BasicBlock::set_frozen(bool frozen) {
    conv1_.set_frozen(frozen);
    bn1_.set_frozen(frozen);
    conv2_.set_frozen(frozen);
    bn2_.set_frozen(frozen);
    if (down_conv_) {
        down_conv_->set_frozen(frozen);
        down_bn_->set_frozen(frozen);
    }
}

std::vector<std::shared_ptr<Layer>> Sequential::slice(size_t begin, size_t end) const {
    if (begin > end || end > items_.size()) throw ConfigurationError("bad sequential slice");
    return {items_.begin() + static_cast<ptrdiff_t>(begin), items_.begin() + static_cast<ptrdiff_t>(end)};
}

Tensor Sequential::forward(Tape* tape, const Tensor& x, bool train) {
    return forward_range(tape, x, 0, items_.size(), train);
}

Tensor Sequential::forward_range(Tape* tape, const Tensor& x, size_t begin, size_t end, bool train) {
    Tensor v = x;
    for (size_t i = begin; i < end; ++i) v = items_[i]->forward(tape, v, train);
    return v;
}

void Sequential::collect_params(std::vector<Parameter*>& out) {
    for (auto& l : items_) l->collect_params(out);
}

void Sequential::collect_named(NamedTensors& out) const {
    for (const auto& l : items_) l->collect_named(out);
}

Shape Sequential::out_shape(const Shape& in) const {
    Shape s = in;
    for (const auto& l : items_) s = l->out_shape(s);
    return s;
}

void Sequential::init(Rng& rng) {
    for (auto& l : items_) l->init(rng);
}

void Sequential::set_frozen(bool frozen) {
    for (auto& l : items_) l->set_frozen(frozen);
}

std::vector<uint8_t> layer_image(const Layer& layer) {
    NamedTensors named;
    layer.collect_named(named);
    return encode_saltw(named);
}

void load_into_layer(Layer& layer, const NamedTensors& stored, bool partial) {
    std::unordered_map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : stored) by_name[name] = &t;
    NamedTensors slots;
    layer.collect_named(slots);
    for (auto& [name, slot] : slots) {
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            if (partial) continue;
            throw IoError("checkpoint is missing tensor '" + name + "'");
        }
        const Tensor& src = *it->second;
        if (!same_shape(src.shape(), slot.shape())) {
            throw IoError("checkpoint shape mismatch for '" + name + "': " +
                          shape_str(src.shape()) + " vs " + shape_str(slot.shape()));
        }
        std::memcpy(slot.data(), src.data(), static_cast<size_t>(src.numel()) * sizeof(float));
    }
}

int64_t param_count(Layer& layer) {
    std::vector<Parameter*> params;
    layer.collect_params(params);
    int64_t n = 0;
    for (const Parameter* p : params) n += p->tensor.numel();
    return n;
}

} // namespace salt
