#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "helpers.hpp"
#include "salt/dataset.hpp"
#include "salt/harness.hpp"
#include "salt/ops.hpp"
#include "salt/protocol.hpp"

using namespace salt;
using salt::test::bitwise_equal;
using salt::test::random_tensor;

namespace {

struct Fixture {
    Backbone backbone;
    SplitModel split;
    std::shared_ptr<Adapter> adapter;
    Dataset train, val;

    static Fixture make(SplitPoint point, uint64_t seed, int64_t n_train = 96, int64_t n_val = 32) {
        auto [tr, te] = make_blobs(10, n_train + n_val, 16, 2.0, Rng::derive(seed, 1));
        const Standardizer st = fit_standardizer(tr);
        standardize(tr, st);

        Fixture f{build_backbone(resnet8_desk_config(10), seed), {}, nullptr, {}, {}};
        f.split = split_at(f.backbone, point, HeadMode::Closed);
        f.adapter = std::make_shared<Adapter>(AdapterKind::Residual, f.split.latent_shape()[0],
                                              Rng::derive(seed, 2));
        SubtaskSpec spec;
        spec.class_subset = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
        spec.val_fraction = static_cast<double>(n_val) / static_cast<double>(n_train + n_val);
        const Subtask task = make_subtask(tr, te, spec, Rng::derive(seed, 3));
        f.train = task.train;
        f.val = task.val;
        return f;
    }

    InputPool train_pool() const { return {train.sample_shape, train.images, train.ids}; }
    InputPool val_pool() const { return {val.sample_shape, val.images, val.ids}; }

    std::unordered_map<uint32_t, int32_t> labels() const {
        std::unordered_map<uint32_t, int32_t> out;
        for (size_t i = 0; i < train.ids.size(); ++i) out[train.ids[i]] = train.labels[i];
        for (size_t i = 0; i < val.ids.size(); ++i) out[val.ids[i]] = val.labels[i];
        return out;
    }
};

std::vector<int32_t> batch_labels(const Dataset& ds, const std::vector<int64_t>& rows) {
    std::vector<int32_t> out;
    for (int64_t r : rows) out.push_back(ds.labels[static_cast<size_t>(r)]);
    return out;
}

} // namespace

TEST_CASE("single protocol round reproduces the centralized gradient at p=0") {
    Fixture f = Fixture::make(SplitPoint::AfterBlock2, 51);
    Adapter central = f.adapter->clone();

    ClientSession client(f.split.head(), f.adapter, f.train_pool(), f.val_pool(),
                         {0.0, 80e6, 900}, 1e-3);
    ServerSession server(f.split.tail(), f.labels(), {0.0, 80e6, 901});

    std::vector<int64_t> rows = {0, 1, 2, 3, 4, 5, 6, 7};
    const Message labels_msg = client.label_indices(rows, 1, false);
    server.stash_labels(labels_msg);
    const Message activation = client.forward_step(rows, 1, true);
    auto [grad, report] = server.step(activation);
    client.backward_from(grad);

    // centralized oracle: one tape through frozen head -> adapter -> frozen
    // tail layers with the same batch (provider-side layer access; the
    // frozen tail records only the input-gradient path)
    const size_t cut = f.backbone.cut_index.at(SplitPoint::AfterBlock2);
    Tensor x = f.train_pool().gather(rows);
    const Tensor z = f.backbone.layers->forward_range(nullptr, x, 0, cut, false);
    Tape tape;
    Tensor zp = central.forward(&tape, z, true);
    Tensor logits =
        f.backbone.layers->forward_range(&tape, zp, cut, f.backbone.layers->size(), false);
    Tensor loss = softmax_cross_entropy(&tape, logits, batch_labels(f.train, rows));
    tape.backward(loss);

    CHECK(report.loss == doctest::Approx(loss.item()).epsilon(1e-6));
    auto split_params = f.adapter->parameters();
    auto central_params = central.parameters();
    REQUIRE(split_params.size() == central_params.size());
    for (size_t i = 0; i < split_params.size(); ++i) {
        REQUIRE(split_params[i]->tensor.has_grad());
        REQUIRE(central_params[i]->tensor.has_grad());
        const auto& a = split_params[i]->tensor.grad_vec();
        const auto& b = central_params[i]->tensor.grad_vec();
        double worst = 0.0;
        for (size_t j = 0; j < a.size(); ++j) {
            const double scale = std::max({std::abs(double(a[j])), std::abs(double(b[j])), 1e-8});
            worst = std::max(worst, std::abs(double(a[j]) - double(b[j])) / scale);
        }
        INFO(split_params[i]->name);
        CHECK(worst <= 1e-5);
    }
}

TEST_CASE("fresh residual adapter emits activations bit-equal to the head latent") {
    Fixture f = Fixture::make(SplitPoint::AfterBlock1, 52);
    ClientSession client(f.split.head(), f.adapter, f.train_pool(), f.val_pool(),
                         {0.0, 80e6, 0}, 1e-3);
    std::vector<int64_t> rows = {0, 1, 2};
    const Message activation = client.forward_step(rows, 1, true);
    const Tensor z = f.split.head()->forward(f.train_pool().gather(rows));
    CHECK(bitwise_equal(activation.tensor, z));
    CHECK(activation.tensor.dim(0) == 3);
    CHECK(Shape(activation.tensor.shape().begin() + 1, activation.tensor.shape().end()) ==
          f.split.latent_shape());
}

TEST_CASE("server at p=1 computes the constant-input tail loss") {
    Fixture f = Fixture::make(SplitPoint::AfterBlock2, 53);
    ClientSession client(f.split.head(), f.adapter, f.train_pool(), f.val_pool(),
                         {1.0, 80e6, 0}, 1e-3);
    ServerSession server(f.split.tail(), f.labels(), {1.0, 80e6, 7});
    std::vector<int64_t> rows = {0, 1, 2, 3};
    server.stash_labels(client.label_indices(rows, 1, false));
    auto [grad, report] = server.step(client.forward_step(rows, 1, true));

    Shape zero_shape = f.split.latent_shape();
    zero_shape.insert(zero_shape.begin(), 4);
    const Tensor logits = f.split.tail()->forward(Tensor::zeros(zero_shape));
    const CeWithGrad ce = softmax_cross_entropy_with_grad(logits, batch_labels(f.train, rows));
    CHECK(report.loss == doctest::Approx(ce.loss).epsilon(1e-6));
    CHECK(std::isfinite(report.loss));
}

TEST_CASE("stale, duplicate and unknown batch ids are protocol misuse") {
    Fixture f = Fixture::make(SplitPoint::AfterBlock2, 54);
    ClientSession client(f.split.head(), f.adapter, f.train_pool(), f.val_pool(),
                         {0.0, 80e6, 0}, 1e-3);
    ServerSession server(f.split.tail(), f.labels(), {0.0, 80e6, 7});

    std::vector<int64_t> rows = {0, 1};
    Message act = client.forward_step(rows, 5, true);
    CHECK_THROWS_AS(server.step(act), ProtocolMisuseError); // labels never announced

    server.stash_labels(client.label_indices(rows, 5, false));
    auto [grad, report] = server.step(act);
    Message stale = grad;
    stale.batch_id = 99;
    CHECK_THROWS_AS(client.backward_from(stale), ProtocolMisuseError);
    client.backward_from(grad);
    CHECK_THROWS_AS(client.backward_from(grad), ProtocolMisuseError); // duplicate
}

TEST_CASE("label resolution failure surfaces as a label error") {
    Fixture f = Fixture::make(SplitPoint::AfterBlock2, 55);
    ClientSession client(f.split.head(), f.adapter, f.train_pool(), f.val_pool(),
                         {0.0, 80e6, 0}, 1e-3);
    ServerSession server(f.split.tail(), {}, {0.0, 80e6, 7}); // empty label store
    std::vector<int64_t> rows = {0, 1};
    server.stash_labels(client.label_indices(rows, 1, false));
    CHECK_THROWS_AS(server.step(client.forward_step(rows, 1, true)), LabelError);
}

TEST_CASE("run_training: message conservation and schedule accounting") {
    Fixture f = Fixture::make(SplitPoint::AfterBlock2, 56, 64, 16);
    ClientSession client(f.split.head(), f.adapter, f.train_pool(), f.val_pool(),
                         {0.0, 80e6, 10}, 1e-3);
    ServerSession server(f.split.tail(), f.labels(), {0.0, 80e6, 11});
    TrainSchedule schedule;
    schedule.batch_size = 32;
    schedule.max_epochs = 2;
    schedule.patience = 5;
    schedule.shuffle_seed = 77;

    Transcript transcript;
    LatencyLedger ledger;
    const TrainingTrace trace = run_training(client, server, schedule, &ledger, &transcript);
    REQUIRE_FALSE(trace.aborted);
    REQUIRE(trace.epochs.size() == 2);

    const auto batches_of = [&](int64_t n) {
        return (n + schedule.batch_size - 1) / schedule.batch_size;
    };
    const int rounds_per_epoch =
        static_cast<int>(batches_of(f.train.count()) + batches_of(f.val.count()));

    std::map<MsgType, int> counts;
    for (const auto& e : transcript.entries()) counts[e.message.type]++;
    CHECK(counts[MsgType::ActivationBatch] == 2 * rounds_per_epoch);
    CHECK(counts[MsgType::GradientBatch] == counts[MsgType::ActivationBatch]);
    CHECK(counts[MsgType::LossReport] == counts[MsgType::ActivationBatch]);
    CHECK(counts[MsgType::LabelIndexBatch] == counts[MsgType::ActivationBatch]);
    CHECK(counts[MsgType::EpochEnd] == 2);
    CHECK(counts[MsgType::TrainingEnd] == 1);
    CHECK(ledger.batches() == static_cast<uint64_t>(2 * rounds_per_epoch));
    CHECK(ledger.epochs() == 2);

    // modeled comm: every round ships rows*latent*32 bits each way
    const double vz = static_cast<double>(payload_bits(shape_numel(f.split.latent_shape())));
    const double rows_per_epoch = static_cast<double>(f.train.count() + f.val.count());
    const double expected = 2.0 * vz * rows_per_epoch * 2.0 / 80e6;
    CHECK(ledger.comm_s() == doctest::Approx(expected).epsilon(1e-9));
    CHECK(trace.comm_s == doctest::Approx(ledger.comm_s()).epsilon(1e-12));
}

TEST_CASE("zero learning rate leaves every trainable value exactly unchanged") {
    Fixture f = Fixture::make(SplitPoint::AfterBlock2, 57, 64, 16);
    std::vector<std::vector<float>> before;
    for (Parameter* p : f.adapter->parameters()) before.push_back(p->tensor.vec());

    ClientSession client(f.split.head(), f.adapter, f.train_pool(), f.val_pool(),
                         {0.0, 80e6, 10}, 0.0);
    ServerSession server(f.split.tail(), f.labels(), {0.0, 80e6, 11});
    TrainSchedule schedule;
    schedule.batch_size = 32;
    schedule.max_epochs = 2;
    schedule.shuffle_seed = 78;
    schedule.restore_best = false;
    const TrainingTrace trace = run_training(client, server, schedule);
    CHECK_FALSE(trace.aborted);

    const auto params = f.adapter->parameters();
    for (size_t i = 0; i < params.size(); ++i) CHECK(params[i]->tensor.vec() == before[i]);
    // only BN running statistics may drift; the loss trace stays put
    CHECK(std::abs(trace.epochs[0].val_loss - trace.epochs[1].val_loss) < 0.05);
}

TEST_CASE("split training trajectory matches the centralized mirror at p=0") {
    Fixture f = Fixture::make(SplitPoint::AfterBlock2, 58, 64, 16);
    Adapter central = f.adapter->clone();

    TrainSchedule schedule;
    schedule.batch_size = 32;
    schedule.max_epochs = 3;
    schedule.patience = 50;
    schedule.shuffle_seed = 79;
    schedule.restore_best = false;

    ClientSession client(f.split.head(), f.adapter, f.train_pool(), f.val_pool(),
                         {0.0, 80e6, 10}, 1e-3);
    ServerSession server(f.split.tail(), f.labels(), {0.0, 80e6, 11});
    const TrainingTrace trace = run_training(client, server, schedule);
    REQUIRE_FALSE(trace.aborted);
    REQUIRE(trace.epochs.size() == 3);

    // centralized mirror with the same shuffle stream, batching and Adam
    const size_t cut = f.backbone.cut_index.at(SplitPoint::AfterBlock2);
    AdamOptimizer adam(central.parameters(), 1e-3);
    Rng shuffle(schedule.shuffle_seed);
    std::vector<double> epoch_train_loss;
    for (int epoch = 0; epoch < 3; ++epoch) {
        const auto order = shuffle.permutation(f.train.count());
        double total = 0.0;
        for (int64_t at = 0; at < f.train.count(); at += schedule.batch_size) {
            const int64_t hi = std::min<int64_t>(f.train.count(), at + schedule.batch_size);
            std::vector<int64_t> rows(order.begin() + at, order.begin() + hi);
            Tensor x = f.train_pool().gather(rows);
            const Tensor z = f.backbone.layers->forward_range(nullptr, x, 0, cut, false);
            Tape tape;
            Tensor zp = central.forward(&tape, z, true);
            Tensor logits =
                f.backbone.layers->forward_range(&tape, zp, cut, f.backbone.layers->size(), false);
            Tensor loss = softmax_cross_entropy(&tape, logits, batch_labels(f.train, rows));
            tape.backward(loss);
            adam.step();
            total += static_cast<double>(loss.item()) * static_cast<double>(hi - at);
        }
        epoch_train_loss.push_back(total / static_cast<double>(f.train.count()));
    }
    for (int epoch = 0; epoch < 3; ++epoch) {
        CHECK(std::abs(trace.epochs[epoch].train_loss - epoch_train_loss[epoch]) < 1e-4);
    }
    // final parameters agree to tight tolerance
    auto sp = f.adapter->parameters();
    auto cp = central.parameters();
    for (size_t i = 0; i < sp.size(); ++i) {
        const auto& a = sp[i]->tensor.vec();
        const auto& b = cp[i]->tensor.vec();
        for (size_t j = 0; j < a.size(); ++j) {
            CHECK(std::abs(double(a[j]) - double(b[j])) <=
                  1e-5 * std::max(1.0, std::abs(double(b[j]))));
        }
    }
}

TEST_CASE("information boundary: transcript carries no labels to the client, no inputs to the server") {
    Fixture f = Fixture::make(SplitPoint::AfterBlock2, 59, 64, 16);
    ClientSession client(f.split.head(), f.adapter, f.train_pool(), f.val_pool(),
                         {0.0, 80e6, 10}, 1e-3);
    ServerSession server(f.split.tail(), f.labels(), {0.0, 80e6, 11});
    TrainSchedule schedule;
    schedule.batch_size = 32;
    schedule.max_epochs = 1;
    schedule.shuffle_seed = 80;
    Transcript transcript;
    const TrainingTrace trace = run_training(client, server, schedule, nullptr, &transcript);
    REQUIRE_FALSE(trace.aborted);

    const Shape input_shape = f.train.sample_shape;
    for (const auto& e : transcript.entries()) {
        if (e.direction == Direction::ServerToClient) {
            // the only client-bound payloads are gradients and scalar losses
            CHECK((e.message.type == MsgType::GradientBatch || e.message.type == MsgType::LossReport));
            CHECK(e.message.indices.empty());
        } else if (e.message.type == MsgType::ActivationBatch) {
            const Shape sample(e.message.tensor.shape().begin() + 1, e.message.tensor.shape().end());
            CHECK(sample == f.split.latent_shape());
            CHECK(sample != input_shape);
        }
    }
}

TEST_CASE("open-head session trains the head through the same protocol") {
    Backbone bb = build_backbone(resnet8_desk_config(10), 61);
    SplitModel sm = split_at(bb, SplitPoint::AfterBlock2, HeadMode::Open);
    auto [tr, te] = make_blobs(10, 80, 16, 2.0, 600);
    const Standardizer st = fit_standardizer(tr);
    standardize(tr, st);
    InputPool pool{tr.sample_shape, tr.images, tr.ids};
    std::unordered_map<uint32_t, int32_t> labels;
    for (size_t i = 0; i < tr.ids.size(); ++i) labels[tr.ids[i]] = tr.labels[i];

    const auto head_before = sm.head_image();
    const auto tail_before = sm.tail_image();
    ClientSession client(sm.open_head(), pool, pool, {0.0, 80e6, 1}, 1e-3);
    ServerSession server(sm.tail(), labels, {0.0, 80e6, 2});
    TrainSchedule schedule;
    schedule.batch_size = 40;
    schedule.max_epochs = 1;
    schedule.shuffle_seed = 81;
    const TrainingTrace trace = run_training(client, server, schedule);
    REQUIRE_FALSE(trace.aborted);
    CHECK(sm.head_image() != head_before); // head moved
    CHECK(sm.tail_image() == tail_before); // closed tail byte-identical
}

TEST_CASE("training without anything trainable is refused") {
    Fixture f = Fixture::make(SplitPoint::AfterBlock2, 62, 32, 8);
    ClientSession client(f.split.head(), nullptr, f.train_pool(), f.val_pool(),
                         {0.0, 80e6, 0}, 1e-3);
    ServerSession server(f.split.tail(), f.labels(), {0.0, 80e6, 7});
    TrainSchedule schedule;
    CHECK_THROWS_AS(run_training(client, server, schedule), ProtocolMisuseError);
}

TEST_CASE("trace CSV has the documented columns") {
    TrainingTrace trace;
    trace.epochs.push_back({1, 0.5, 0.6, 0.01, 0.02});
    const std::string csv = trace_csv(trace);
    CHECK(csv.rfind("epoch,train_loss,val_loss,comp_s,comm_s\n", 0) == 0);
    CHECK(csv.find("\n1,0.5") != std::string::npos);
}
