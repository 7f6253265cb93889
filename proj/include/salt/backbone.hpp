#pragma once

#include <array>
#include <map>
#include <memory>
#include <string>

#include "salt/layers.hpp"

namespace salt {

// Named cut positions in the backbone. BeforeBlock1 cuts directly after the
// stem convolution; AfterBlockK cuts after residual stage K.
enum class SplitPoint { BeforeBlock1, AfterBlock1, AfterBlock2, AfterBlock3 };

constexpr std::array<SplitPoint, 4> kAllSplitPoints = {
    SplitPoint::BeforeBlock1, SplitPoint::AfterBlock1, SplitPoint::AfterBlock2,
    SplitPoint::AfterBlock3};

const char* split_point_name(SplitPoint p);
SplitPoint split_point_from(const std::string& name);

struct BackboneConfig {
    std::string preset;
    int64_t stem_channels = 0;
    std::vector<int> stage_blocks;
    std::vector<int64_t> stage_channels;
    int64_t num_classes = 10;
    Shape input_shape; // [C,H,W]
};

// CIFAR-style ResNet-18: 3x3 stem (stride 1, no initial pooling), four
// two-block stages at 64/128/256/512 channels.
BackboneConfig resnet18_cifar_config(int64_t num_classes = 10);
// Reduced-width three-stage net (8/16/32 channels, one block per stage) for
// CPU-scale runs.
BackboneConfig resnet8_desk_config(int64_t num_classes = 10);
BackboneConfig backbone_preset(const std::string& name, int64_t num_classes = 10);

struct Backbone {
    BackboneConfig config;
    uint64_t seed = 0;
    std::shared_ptr<Sequential> layers;
    // split point -> number of leading layers that form the head
    std::map<SplitPoint, size_t> cut_index;

    Tensor forward(Tape* tape, const Tensor& x, bool train) const {
        return layers->forward(tape, x, train);
    }
    Shape latent_shape(SplitPoint p) const;
    std::vector<uint8_t> image() const { return layer_image(*layers); }
    Backbone clone() const;
};

Backbone build_backbone(const BackboneConfig& config, uint64_t seed);

} // namespace salt
