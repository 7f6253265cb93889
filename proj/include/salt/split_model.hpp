#pragma once

#include <memory>

#include "salt/backbone.hpp"

namespace salt {

// Opaque handle over a frozen layer sequence. The public surface is exactly
// forward and input_grad plus the boundary shapes; there is no parameter
// enumeration, no weight access and no architecture introspection. BN always
// runs on running statistics inside a closed module.
class ClosedModule {
  public:
    ClosedModule(std::vector<std::shared_ptr<Layer>> layers, Shape input_sample, Shape output_sample);

    // eval-mode forward; creates no parameter gradients
    Tensor forward(const Tensor& x) const;

    // d(upstream . output)/d(input): backpropagates the given upstream
    // gradient through the module to its input, leaving internals untouched
    Tensor input_grad(const Tensor& x, const Tensor& upstream) const;

    const Shape& input_shape() const { return in_; }
    const Shape& output_shape() const { return out_; }

  private:
    std::shared_ptr<Sequential> seq_;
    Shape in_, out_;
};

// The same partition with trainable parameters, for the open-head baselines.
class OpenHead {
  public:
    OpenHead(std::vector<std::shared_ptr<Layer>> layers, Shape input_sample, Shape output_sample);

    Tensor forward(Tape* tape, const Tensor& x, bool train);
    std::vector<Parameter*> parameters();
    // fresh re-initialization (train-from-scratch baseline)
    void reinit(uint64_t seed);
    std::vector<uint8_t> image() const { return layer_image(*seq_); }
    void load(const NamedTensors& stored) { load_into_layer(*seq_, stored); }

    const Shape& input_shape() const { return in_; }
    const Shape& output_shape() const { return out_; }

  private:
    std::shared_ptr<Sequential> seq_;
    Shape in_, out_;
};

enum class HeadMode { Closed, Open };

// A backbone partitioned at a named split point. The provider keeps byte
// images of both partitions for integrity audits; the client-facing handles
// expose only the closed-module surface.
class SplitModel {
  public:
    SplitPoint point() const { return point_; }
    HeadMode head_mode() const { return head_mode_; }
    const Shape& input_shape() const { return input_; }
    // latent sample shape [C,H,W] at the cut
    const Shape& latent_shape() const { return latent_; }

    const std::shared_ptr<ClosedModule>& head() const { return head_; }
    const std::shared_ptr<OpenHead>& open_head() const { return open_head_; }
    const std::shared_ptr<ClosedModule>& tail() const { return tail_; }

    // provider-side SALTW1 images (the model owner can always serialize its
    // own weights; closedness is a property of the handed-out handles)
    std::vector<uint8_t> head_image() const { return layer_image(*head_layers_); }
    std::vector<uint8_t> tail_image() const { return layer_image(*tail_layers_); }

    friend SplitModel split_at(const Backbone& backbone, SplitPoint point, HeadMode mode);

  private:
    SplitPoint point_{};
    HeadMode head_mode_{};
    Shape input_, latent_;
    std::shared_ptr<ClosedModule> head_;
    std::shared_ptr<OpenHead> open_head_;
    std::shared_ptr<ClosedModule> tail_;
    std::shared_ptr<Sequential> head_layers_, tail_layers_;
};

// Partition the backbone. Closed mode freezes both partitions; open mode
// freezes only the tail and leaves the head trainable. The returned model
// aliases the backbone's layer objects.
SplitModel split_at(const Backbone& backbone, SplitPoint point, HeadMode mode);

// Text manifest describing a split (preset, seed, split point, latent shape).
std::string split_manifest(const Backbone& backbone, const SplitModel& split);

} // namespace salt
