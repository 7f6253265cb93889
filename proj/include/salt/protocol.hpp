#pragma once

#include <memory>
#include <optional>
#include <unordered_map>

#include "salt/adam.hpp"
#include "salt/adapter.hpp"
#include "salt/channel.hpp"
#include "salt/split_model.hpp"
#include "salt/transport.hpp"

namespace salt {

// Client-side input pool: raw inputs plus opaque sample ids. Labels never
// appear on this side; the server resolves ids against its own label store.
struct InputPool {
    Shape sample_shape; // [C,H,W]
    std::vector<float> data;
    std::vector<uint32_t> ids;

    int64_t count() const { return static_cast<int64_t>(ids.size()); }
    Tensor gather(const std::vector<int64_t>& rows) const;
};

// One client endpoint of the split-learning protocol. Owns the head (closed
// for adapter methods, open for the fine-tuning baselines), the optional
// adapter, the optimizer over whatever is trainable, and the input shards.
class ClientSession {
  public:
    ClientSession(std::shared_ptr<ClosedModule> head, std::shared_ptr<Adapter> adapter,
                  InputPool train, InputPool val, ChannelConfig channel, double lr);
    ClientSession(std::shared_ptr<OpenHead> head, InputPool train, InputPool val,
                  ChannelConfig channel, double lr);

    // Runs head (+adapter) on the given train/val rows and retains the tape
    // when `update` is set. Returns the ActivationBatch to transmit.
    Message forward_step(const std::vector<int64_t>& rows, uint32_t batch_id, bool update);
    Message label_indices(const std::vector<int64_t>& rows, uint32_t batch_id, bool from_val) const;

    // Receive path, split so callers can inspect gradients between the
    // backward pass and the optimizer step.
    void backward_from(const Message& gradient);
    void optimizer_step();
    void backward_step(const Message& gradient);

    std::vector<Parameter*> trainable();
    bool has_trainable() const { return !trainable_.empty(); }
    const Shape& latent_shape() const { return latent_; }
    const ChannelConfig& channel() const { return channel_; }
    const InputPool& train_pool() const { return train_; }
    const InputPool& val_pool() const { return val_; }

    // trainable weights + adapter/head state, for best-epoch restore
    std::vector<uint8_t> state_image() const;
    void load_state(const std::vector<uint8_t>& image);

  private:
    void finish_init(double lr);
    std::shared_ptr<ClosedModule> closed_head_;
    std::shared_ptr<Adapter> adapter_;
    std::shared_ptr<OpenHead> open_head_;
    InputPool train_, val_;
    ChannelConfig channel_;
    Channel downlink_;
    Shape latent_;
    std::vector<Parameter*> trainable_;
    std::optional<AdamOptimizer> adam_;

    struct Pending {
        std::unique_ptr<Tape> tape;
        Tensor zprime;
        uint32_t batch_id = 0;
    };
    std::optional<Pending> pending_;
};

// Server endpoint: closed tail, label store, loss. Applies the lossy uplink
// at receipt, computes the loss on the tail output and returns the gradient
// w.r.t. the received feature.
class ServerSession {
  public:
    ServerSession(std::shared_ptr<ClosedModule> tail,
                  std::unordered_map<uint32_t, int32_t> label_store, ChannelConfig uplink);

    void stash_labels(const Message& label_batch);
    // -> {GradientBatch, LossReport}
    std::pair<Message, Message> step(const Message& activation);

  private:
    std::shared_ptr<ClosedModule> tail_;
    std::unordered_map<uint32_t, int32_t> labels_;
    Channel uplink_;
    std::unordered_map<uint32_t, std::vector<uint32_t>> pending_;
};

struct TrainSchedule {
    int batch_size = 128;
    int max_epochs = 100;
    int patience = 5;
    double min_delta = 1e-4;
    uint64_t shuffle_seed = 0;
    bool restore_best = true;
};

struct EpochRow {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double comp_s = 0.0;
    double comm_s = 0.0;
};

struct TrainingTrace {
    std::vector<EpochRow> epochs;
    int stop_epoch = 0;
    int best_epoch = 0;
    bool aborted = false;
    std::string abort_reason;
    double comp_s = 0.0;
    double comm_s = 0.0;
    uint64_t macs = 0; // multiply-accumulates executed during the run
};

// Drives Algorithm-1 training end to end: the server loop runs on its own
// thread, the client iterates epochs and mini-batches in lockstep, one batch
// in flight. Validation batches flow through the same protocol (the client
// discards their gradients) and feed the plateau rule. Communication seconds
// are modeled per round from the actual payload bits; computation seconds
// are wall-clock measurements on both endpoints.
TrainingTrace run_training(ClientSession& client, ServerSession& server,
                           const TrainSchedule& schedule, LatencyLedger* ledger = nullptr,
                           Transcript* transcript = nullptr);

std::string trace_csv(const TrainingTrace& trace);

} // namespace salt
