#include "salt/backbone.hpp"

namespace salt {

const char* split_point_name(SplitPoint p) {
    switch (p) {
        case SplitPoint::BeforeBlock1: return "BeforeBlock1";
        case SplitPoint::AfterBlock1: return "AfterBlock1";
        case SplitPoint::AfterBlock2: return "AfterBlock2";
        case SplitPoint::AfterBlock3: return "AfterBlock3";
    }
    throw ConfigurationError("unknown split point enum value");
}

SplitPoint split_point_from(const std::string& name) {
    for (SplitPoint p : kAllSplitPoints) {
        if (name == split_point_name(p)) return p;
    }
    throw ConfigurationError("unknown split point '" + name + "'");
}

BackboneConfig resnet18_cifar_config(int64_t num_classes) {
    BackboneConfig c;
    c.preset = "resnet18-cifar";
    c.stem_channels = 64;
    c.stage_blocks = {2, 2, 2, 2};
    c.stage_channels = {64, 128, 256, 512};
    c.num_classes = num_classes;
    c.input_shape = {3, 32, 32};
    return c;
}

BackboneConfig resnet8_desk_config(int64_t num_classes) {
    BackboneConfig c;
    c.preset = "resnet8-desk";
    c.stem_channels = 8;
    c.stage_blocks = {1, 1, 1};
    c.stage_channels = {8, 16, 32};
    c.num_classes = num_classes;
    c.input_shape = {3, 32, 32};
    return c;
}

BackboneConfig backbone_preset(const std::string& name, int64_t num_classes) {
    if (name == "resnet18-cifar") return resnet18_cifar_config(num_classes);
    if (name == "resnet8-desk") return resnet8_desk_config(num_classes);
    throw ConfigurationError("unknown backbone preset '" + name + "'");
}

namespace {

void validate(const BackboneConfig& c) {
    if (c.stem_channels <= 0 || c.num_classes <= 0) throw ConfigurationError("bad backbone config");
    if (c.stage_blocks.size() != c.stage_channels.size() || c.stage_blocks.size() < 3) {
        throw ConfigurationError("backbone needs >= 3 stages with matching block counts");
    }
    int64_t prev = 0;
    for (size_t i = 0; i < c.stage_channels.size(); ++i) {
        if (c.stage_blocks[i] < 1 || c.stage_channels[i] <= 0) {
            throw ConfigurationError("invalid stage spec at stage " + std::to_string(i + 1));
        }
        if (c.stage_channels[i] < prev) {
            throw ConfigurationError("stage widths must be non-decreasing");
        }
        prev = c.stage_channels[i];
    }
    if (c.input_shape.size() != 3) throw ConfigurationError("input shape must be [C,H,W]");
}

} // namespace

Backbone build_backbone(const BackboneConfig& config, uint64_t seed) {
    validate(config);
    Backbone bb;
    bb.config = config;
    bb.seed = seed;
    bb.layers = std::make_shared<Sequential>();
    bb.layers->append(std::make_shared<Conv2d>("conv1", config.input_shape[0], config.stem_channels,
                                               3, 1, 1, false));
    // the BeforeBlock1 latent is the raw stem-conv output; stem BN and ReLU
    // sit on the Block1 side of that cut
    bb.cut_index[SplitPoint::BeforeBlock1] = bb.layers->size();
    bb.layers->append(std::make_shared<BatchNorm2d>("bn1", config.stem_channels));
    bb.layers->append(std::make_shared<ReLU>());

    int64_t in_ch = config.stem_channels;
    for (size_t s = 0; s < config.stage_channels.size(); ++s) {
        const int64_t out_ch = config.stage_channels[s];
        const int first_stride = (s == 0) ? 1 : 2;
        for (int b = 0; b < config.stage_blocks[s]; ++b) {
            const std::string name = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
            bb.layers->append(std::make_shared<BasicBlock>(name, in_ch, out_ch, b == 0 ? first_stride : 1));
            in_ch = out_ch;
        }
        if (s == 0) bb.cut_index[SplitPoint::AfterBlock1] = bb.layers->size();
        if (s == 1) bb.cut_index[SplitPoint::AfterBlock2] = bb.layers->size();
        if (s == 2) bb.cut_index[SplitPoint::AfterBlock3] = bb.layers->size();
    }
    bb.layers->append(std::make_shared<GlobalAvgPool>());
    bb.layers->append(std::make_shared<Linear>("fc", in_ch, config.num_classes));

    Rng rng(seed);
    bb.layers->init(rng);
    return bb;
}

Shape Backbone::latent_shape(SplitPoint p) const {
    const auto it = cut_index.find(p);
    if (it == cut_index.end()) throw ConfigurationError("split point not present in backbone");
    Shape s = config.input_shape;
    for (size_t i = 0; i < it->second; ++i) s = layers->at(i)->out_shape(s);
    return s;
}

Backbone Backbone::clone() const {
    Backbone copy = build_backbone(config, seed);
    load_into_layer(*copy.layers, decode_saltw(image()));
    return copy;
}

} // namespace salt
