#pragma once

#include <memory>
#include <string>
#include <vector>

#include "salt/ops.hpp"
#include "salt/rng.hpp"
#include "salt/tensor.hpp"
#include "salt/weights_io.hpp"

namespace salt {

// Forward-only module interface. `train` selects batch-stat vs running-stat
// behavior in normalization layers; parameter gradients are governed by the
// frozen flags, not by this switch.
class Layer {
  public:
    virtual ~Layer() = default;
    virtual Tensor forward(Tape* tape, const Tensor& x, bool train) = 0;
    virtual void collect_params(std::vector<Parameter*>& out) { (void)out; }
    // trainable parameters plus persistent state (BN running stats)
    virtual void collect_named(NamedTensors& out) const { (void)out; }
    virtual Shape out_shape(const Shape& in) const = 0;
    virtual void init(Rng& rng) { (void)rng; }
    virtual void set_frozen(bool frozen) { (void)frozen; }
};

class Conv2d : public Layer {
  public:
    Conv2d(std::string name, int64_t in_ch, int64_t out_ch, int kernel, int stride, int padding,
           bool has_bias);
    Tensor forward(Tape* tape, const Tensor& x, bool train) override;
    void collect_params(std::vector<Parameter*>& out) override;
    void collect_named(NamedTensors& out) const override;
    Shape out_shape(const Shape& in) const override;
    void init(Rng& rng) override;
    void set_frozen(bool frozen) override;

    Parameter weight;
    Parameter bias; // present iff has_bias
    bool has_bias;
    int kernel, stride, padding;
    int64_t in_ch, out_ch;

  private:
    Tensor zero_bias_;
    std::string name_;
};

class BatchNorm2d : public Layer {
  public:
    BatchNorm2d(std::string name, int64_t channels, float momentum = 0.1f, float eps = 1e-5f);
    Tensor forward(Tape* tape, const Tensor& x, bool train) override;
    void collect_params(std::vector<Parameter*>& out) override;
    void collect_named(NamedTensors& out) const override;
    Shape out_shape(const Shape& in) const override;
    void init(Rng& rng) override;
    void set_frozen(bool frozen) override;

    Parameter gamma;
    Parameter beta;
    Tensor running_mean;
    Tensor running_var;
    float momentum, eps;

  private:
    std::string name_;
};

class ReLU : public Layer {
  public:
    Tensor forward(Tape* tape, const Tensor& x, bool) override { return relu(tape, x); }
    Shape out_shape(const Shape& in) const override { return in; }
};

class MaxPool2d : public Layer {
  public:
    MaxPool2d(int kernel, int stride) : kernel_(kernel), stride_(stride) {}
    Tensor forward(Tape* tape, const Tensor& x, bool) override {
        return maxpool2d(tape, x, kernel_, stride_);
    }
    Shape out_shape(const Shape& in) const override;

  private:
    int kernel_, stride_;
};

class GlobalAvgPool : public Layer {
  public:
    Tensor forward(Tape* tape, const Tensor& x, bool) override { return global_avg_pool(tape, x); }
    Shape out_shape(const Shape& in) const override;
};

class Linear : public Layer {
  public:
    Linear(std::string name, int64_t in_features, int64_t out_features);
    Tensor forward(Tape* tape, const Tensor& x, bool) override;
    void collect_params(std::vector<Parameter*>& out) override;
    void collect_named(NamedTensors& out) const override;
    Shape out_shape(const Shape& in) const override;
    void init(Rng& rng) override;
    void set_frozen(bool frozen) override;

    Parameter weight;
    Parameter bias;
    int64_t in_features, out_features;

  private:
    std::string name_;
};

// Two 3x3 convs with BN and an identity or 1x1-projected shortcut.
class BasicBlock : public Layer {
  public:
    BasicBlock(std::string name, int64_t in_ch, int64_t out_ch, int stride);
    Tensor forward(Tape* tape, const Tensor& x, bool train) override;
    void collect_params(std::vector<Parameter*>& out) override;
    void collect_named(NamedTensors& out) const override;
    Shape out_shape(const Shape& in) const override;
    void init(Rng& rng) override;
    void set_frozen(bool frozen) override;

  private:
    Conv2d conv1_;
    BatchNorm2d bn1_;
    Conv2d conv2_;
    BatchNorm2d bn2_;
    std::unique_ptr<Conv2d> down_conv_;
    std::unique_ptr<BatchNorm2d> down_bn_;
};

// Ordered layer list with ranged forward, used both for whole backbones and
// for the head/tail partitions.
class Sequential : public Layer {
  public:
    Sequential() = default;
    explicit Sequential(std::vector<std::shared_ptr<Layer>> items) : items_(std::move(items)) {}

    void append(std::shared_ptr<Layer> layer) { items_.push_back(std::move(layer)); }
    size_t size() const { return items_.size(); }
    const std::shared_ptr<Layer>& at(size_t i) const { return items_.at(i); }
    std::vector<std::shared_ptr<Layer>> slice(size_t begin, size_t end) const;

    Tensor forward(Tape* tape, const Tensor& x, bool train) override;
    Tensor forward_range(Tape* tape, const Tensor& x, size_t begin, size_t end, bool train);
    void collect_params(std::vector<Parameter*>& out) override;
    void collect_named(NamedTensors& out) const override;
    Shape out_shape(const Shape& in) const override;
    void init(Rng& rng) override;
    void set_frozen(bool frozen) override;

  private:
    std::vector<std::shared_ptr<Layer>> items_;
};

// SALTW1 helpers over any layer: image = encoded named tensors.
std::vector<uint8_t> layer_image(const Layer& layer);
// Assigns stored tensors into the layer's named slots; names must match
// one-to-one unless `partial`, in which case missing names are skipped.
void load_into_layer(Layer& layer, const NamedTensors& stored, bool partial = false);

int64_t param_count(Layer& layer);

} // namespace salt
