#include "salt/split_model.hpp"

#include <sstream>

namespace salt {

namespace {

void check_batch_input(const Tensor& x, const Shape& sample, const char* what) {
    bool ok = x.rank() == sample.size() + 1;
    if (ok) {
        for (size_t i = 0; i < sample.size(); ++i) ok = ok && x.dim(i + 1) == sample[i];
    }
    if (!ok) {
        throw DimensionError(std::string(what) + " expects batch of " + shape_str(sample) +
                             ", got " + shape_str(x.shape()));
    }
}

} // namespace

ClosedModule::ClosedModule(std::vector<std::shared_ptr<Layer>> layers, Shape input_sample,
                           Shape output_sample)
    : seq_(std::make_shared<Sequential>(std::move(layers))),
      in_(std::move(input_sample)), out_(std::move(output_sample)) {
    seq_->set_frozen(true);
}

Tensor ClosedModule::forward(const Tensor& x) const {
    check_batch_input(x, in_, "closed module");
    return seq_->forward(nullptr, x, false);
}

Tensor ClosedModule::input_grad(const Tensor& x, const Tensor& upstream) const {
    check_batch_input(x, in_, "closed module");
    Tape tape;
    Tensor probe = x.clone();
    probe.set_requires_grad(true);
    Tensor y = seq_->forward(&tape, probe, false);
    if (!same_shape(y.shape(), upstream.shape())) {
        throw DimensionError("upstream gradient shape " + shape_str(upstream.shape()) +
                             " does not match module output " + shape_str(y.shape()));
    }
    tape.backward_seeded(y, upstream);
    Tensor out = Tensor::zeros(x.shape());
    if (probe.has_grad()) out.vec().assign(probe.grad(), probe.grad() + probe.numel());
    return out;
}

OpenHead::OpenHead(std::vector<std::shared_ptr<Layer>> layers, Shape input_sample, Shape output_sample)
    : seq_(std::make_shared<Sequential>(std::move(layers))),
      in_(std::move(input_sample)), out_(std::move(output_sample)) {
    seq_->set_frozen(false);
}

Tensor OpenHead::forward(Tape* tape, const Tensor& x, bool train) {
    check_batch_input(x, in_, "open head");
    return seq_->forward(tape, x, train);
}

std::vector<Parameter*> OpenHead::parameters() {
    std::vector<Parameter*> out;
    seq_->collect_params(out);
    return out;
}

void OpenHead::reinit(uint64_t seed) {
    Rng rng(seed);
    seq_->init(rng);
    seq_->set_frozen(false);
}

SplitModel split_at(const Backbone& backbone, SplitPoint point, HeadMode mode) {
    const auto it = backbone.cut_index.find(point);
    if (it == backbone.cut_index.end()) {
        throw ConfigurationError("split point " + std::string(split_point_name(point)) +
                                 " not marked in backbone");
    }
    const size_t cut = it->second;

    SplitModel m;
    m.point_ = point;
    m.head_mode_ = mode;
    m.input_ = backbone.config.input_shape;
    m.latent_ = backbone.latent_shape(point);
    Shape out_shape = m.latent_;
    for (size_t i = cut; i < backbone.layers->size(); ++i)
        out_shape = backbone.layers->at(i)->out_shape(out_shape);

    m.head_layers_ = std::make_shared<Sequential>(backbone.layers->slice(0, cut));
    m.tail_layers_ = std::make_shared<Sequential>(backbone.layers->slice(cut, backbone.layers->size()));

    if (mode == HeadMode::Closed) {
        m.head_ = std::make_shared<ClosedModule>(backbone.layers->slice(0, cut), m.input_, m.latent_);
    } else {
        m.open_head_ = std::make_shared<OpenHead>(backbone.layers->slice(0, cut), m.input_, m.latent_);
    }
    m.tail_ = std::make_shared<ClosedModule>(backbone.layers->slice(cut, backbone.layers->size()),
                                             m.latent_, out_shape);
    return m;
}

std::string split_manifest(const Backbone& backbone, const SplitModel& split) {
    std::ostringstream os;
    os << "preset=" << backbone.config.preset << "\n";
    os << "seed=" << backbone.seed << "\n";
    os << "split_point=" << split_point_name(split.point()) << "\n";
    os << "latent_shape=" << shape_str(split.latent_shape()) << "\n";
    os << "latent_elements=" << shape_numel(split.latent_shape()) << "\n";
    return os.str();
}

} // namespace salt
