#include "salt/protocol.hpp"

#include <chrono>
#include <cstring>
#include <sstream>
#include <thread>

#include "salt/early_stop.hpp"
#include "salt/ops.hpp"

namespace salt {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

} // namespace

Tensor InputPool::gather(const std::vector<int64_t>& rows) const {
    const int64_t elems = shape_numel(sample_shape);
    Shape shape = sample_shape;
    shape.insert(shape.begin(), static_cast<int64_t>(rows.size()));
    Tensor out = Tensor::zeros(shape);
    for (size_t r = 0; r < rows.size(); ++r) {
        const int64_t row = rows[r];
        if (row < 0 || row >= count()) throw DimensionError("input pool row out of range");
        std::memcpy(out.data() + static_cast<int64_t>(r) * elems, data.data() + row * elems,
                    static_cast<size_t>(elems) * sizeof(float));
    }
    return out;
}

ClientSession::ClientSession(std::shared_ptr<ClosedModule> head, std::shared_ptr<Adapter> adapter,
                             InputPool train, InputPool val, ChannelConfig channel, double lr)
    : closed_head_(std::move(head)), adapter_(std::move(adapter)), train_(std::move(train)),
      val_(std::move(val)), channel_(channel), downlink_(channel) {
    latent_ = closed_head_->output_shape();
    if (adapter_ && adapter_->channels() != latent_[0]) {
        throw DimensionError("adapter channels " + std::to_string(adapter_->channels()) +
                             " do not match latent " + shape_str(latent_));
    }
    if (adapter_) {
        for (Parameter* p : adapter_->parameters()) trainable_.push_back(p);
    }
    finish_init(lr);
}

ClientSession::ClientSession(std::shared_ptr<OpenHead> head, InputPool train, InputPool val,
                             ChannelConfig channel, double lr)
    : open_head_(std::move(head)), train_(std::move(train)), val_(std::move(val)),
      channel_(channel), downlink_(channel) {
    latent_ = open_head_->output_shape();
    trainable_ = open_head_->parameters();
    finish_init(lr);
}

void ClientSession::finish_init(double lr) {
    if (!trainable_.empty()) adam_.emplace(trainable_, lr);
}

Message ClientSession::forward_step(const std::vector<int64_t>& rows, uint32_t batch_id,
                                    bool update) {
    const InputPool& pool = update ? train_ : val_;
    Tensor x = pool.gather(rows);

    auto tape = update && has_trainable() ? std::make_unique<Tape>() : nullptr;
    Tensor z;
    if (closed_head_) {
        z = closed_head_->forward(x);
    } else {
        z = open_head_->forward(tape.get(), x, update);
    }
    Tensor zprime = adapter_ ? adapter_->forward(tape.get(), z, update) : z;

    if (tape) {
        pending_ = Pending{std::move(tape), zprime, batch_id};
    } else {
        pending_.reset();
    }
    Message msg;
    msg.type = MsgType::ActivationBatch;
    msg.batch_id = batch_id;
    msg.tensor = zprime;
    return msg;
}

Message ClientSession::label_indices(const std::vector<int64_t>& rows, uint32_t batch_id,
                                     bool from_val) const {
    const InputPool& pool = from_val ? val_ : train_;
    Message msg;
    msg.type = MsgType::LabelIndexBatch;
    msg.batch_id = batch_id;
    msg.indices.reserve(rows.size());
    for (int64_t r : rows) msg.indices.push_back(pool.ids.at(static_cast<size_t>(r)));
    return msg;
}

void ClientSession::backward_from(const Message& gradient) {
    if (gradient.type != MsgType::GradientBatch) throw ProtocolMisuseError("expected GradientBatch");
    if (!pending_) throw ProtocolMisuseError("gradient received with no pending batch");
    if (pending_->batch_id != gradient.batch_id) {
        throw ProtocolMisuseError("stale or duplicate batch id " + std::to_string(gradient.batch_id));
    }
    const Tensor delta = downlink_.apply_downlink(gradient.tensor);
    pending_->tape->backward_seeded(pending_->zprime, delta);
    pending_.reset();
}

void ClientSession::optimizer_step() {
    if (!adam_) throw ProtocolMisuseError("session has no trainable parameters");
    adam_->step();
}

void ClientSession::backward_step(const Message& gradient) {
    backward_from(gradient);
    optimizer_step();
}

std::vector<Parameter*> ClientSession::trainable() { return trainable_; }

std::vector<uint8_t> ClientSession::state_image() const {
    if (adapter_) return adapter_->image();
    if (open_head_) return open_head_->image();
    return {};
}

void ClientSession::load_state(const std::vector<uint8_t>& image) {
    if (image.empty()) return;
    const NamedTensors stored = decode_saltw(image);
    if (adapter_) {
        adapter_->load(stored);
    } else if (open_head_) {
        open_head_->load(stored);
    }
}

ServerSession::ServerSession(std::shared_ptr<ClosedModule> tail,
                             std::unordered_map<uint32_t, int32_t> label_store, ChannelConfig uplink)
    : tail_(std::move(tail)), labels_(std::move(label_store)), uplink_(uplink) {}

void ServerSession::stash_labels(const Message& label_batch) {
    if (label_batch.type != MsgType::LabelIndexBatch) {
        throw ProtocolMisuseError("expected LabelIndexBatch");
    }
    pending_[label_batch.batch_id] = label_batch.indices;
}

std::pair<Message, Message> ServerSession::step(const Message& activation) {
    if (activation.type != MsgType::ActivationBatch) throw ProtocolMisuseError("expected ActivationBatch");
    const auto it = pending_.find(activation.batch_id);
    if (it == pending_.end()) {
        throw ProtocolMisuseError("unknown batch id " + std::to_string(activation.batch_id));
    }
    std::vector<int32_t> labels;
    labels.reserve(it->second.size());
    for (uint32_t id : it->second) {
        const auto lab = labels_.find(id);
        if (lab == labels_.end()) throw LabelError("no label stored for sample " + std::to_string(id));
        labels.push_back(lab->second);
    }
    pending_.erase(it);

    const Tensor received = uplink_.apply_uplink(activation.tensor);
    const Tensor logits = tail_->forward(received);
    const CeWithGrad ce = softmax_cross_entropy_with_grad(logits, labels);
    const Tensor delta = tail_->input_grad(received, ce.logit_grad);

    Message grad;
    grad.type = MsgType::GradientBatch;
    grad.batch_id = activation.batch_id;
    grad.tensor = delta;
    Message report;
    report.type = MsgType::LossReport;
    report.batch_id = activation.batch_id;
    report.loss = ce.loss;
    return {std::move(grad), std::move(report)};
}

namespace {

void serve(ServerSession& server, Duplex& end, LatencyLedger* ledger) {
    try {
        for (;;) {
            Message msg = end.recv();
            switch (msg.type) {
                case MsgType::LabelIndexBatch:
                    server.stash_labels(msg);
                    break;
                case MsgType::ActivationBatch: {
                    const auto t0 = Clock::now();
                    auto [grad, report] = server.step(msg);
                    if (ledger) ledger->add_comp(seconds_since(t0));
                    end.send(std::move(grad));
                    end.send(std::move(report));
                    break;
                }
                case MsgType::EpochEnd:
                    break;
                case MsgType::TrainingEnd:
                    end.close();
                    return;
                default:
                    throw ProtocolMisuseError("unexpected client message");
            }
        }
    } catch (...) {
        // link torn down or a server-side fault: poison the transport so the
        // blocked client aborts with a partial trace instead of hanging
        end.close();
    }
}

std::vector<std::vector<int64_t>> make_batches(int64_t n, int batch_size,
                                               const std::vector<int64_t>& order) {
    std::vector<std::vector<int64_t>> batches;
    for (int64_t at = 0; at < n; at += batch_size) {
        const int64_t hi = std::min<int64_t>(n, at + batch_size);
        batches.emplace_back(order.begin() + at, order.begin() + hi);
    }
    return batches;
}

} // namespace

TrainingTrace run_training(ClientSession& client, ServerSession& server,
                           const TrainSchedule& schedule, LatencyLedger* ledger,
                           Transcript* transcript) {
    if (!client.has_trainable()) {
        throw ProtocolMisuseError("run_training requires a trainable adapter or open head");
    }
    auto [client_end, server_end] = make_inprocess_transport(transcript);
    std::thread server_thread([&server, server_end = server_end, ledger] {
        serve(server, *server_end, ledger);
    });

    TrainingTrace trace;
    const uint64_t macs0 = mac_counter().load();
    const int64_t vz_bits = static_cast<int64_t>(payload_bits(shape_numel(client.latent_shape())));
    const double theta = client.channel().bandwidth_bps;
    Rng shuffle_rng(schedule.shuffle_seed);
    uint32_t next_batch = 1;
    std::vector<double> val_losses;
    std::vector<uint8_t> best_state;
    double local_comm = 0.0, local_comp = 0.0;

    // one protocol round: labels up, activation up, gradient + loss down
    auto round = [&](const std::vector<int64_t>& rows, bool update) {
        const uint32_t id = next_batch++;
        client_end->send(client.label_indices(rows, id, !update));
        const auto t0 = Clock::now();
        Message activation = client.forward_step(rows, id, update);
        double comp = seconds_since(t0);
        client_end->send(std::move(activation));
        Message grad = client_end->recv();
        Message report = client_end->recv();
        if (grad.type != MsgType::GradientBatch || report.type != MsgType::LossReport) {
            throw ProtocolMisuseError("unexpected server reply ordering");
        }
        if (update) {
            const auto t1 = Clock::now();
            client.backward_step(grad);
            comp += seconds_since(t1);
        }
        const double comm =
            comm_latency_per_batch(static_cast<uint64_t>(vz_bits), rows.size(), theta);
        local_comm += comm;
        local_comp += comp;
        if (ledger) {
            ledger->add_comm(comm);
            ledger->add_comp(comp);
            ledger->count_batch();
        }
        return static_cast<double>(report.loss);
    };

    try {
        for (int epoch = 1; epoch <= schedule.max_epochs; ++epoch) {
            const double epoch_comm0 = local_comm, epoch_comp0 = local_comp;
            const auto order = shuffle_rng.permutation(client.train_pool().count());
            double train_loss = 0.0;
            int64_t train_rows = 0;
            for (const auto& rows : make_batches(client.train_pool().count(), schedule.batch_size, order)) {
                const double loss = round(rows, true);
                if (!std::isfinite(loss)) throw ProtocolMisuseError("training loss diverged");
                train_loss += loss * static_cast<double>(rows.size());
                train_rows += static_cast<int64_t>(rows.size());
            }

            std::vector<int64_t> val_order(static_cast<size_t>(client.val_pool().count()));
            for (size_t i = 0; i < val_order.size(); ++i) val_order[i] = static_cast<int64_t>(i);
            double val_loss = 0.0;
            int64_t val_rows = 0;
            for (const auto& rows : make_batches(client.val_pool().count(), schedule.batch_size, val_order)) {
                val_loss += round(rows, false) * static_cast<double>(rows.size());
                val_rows += static_cast<int64_t>(rows.size());
            }
            client_end->send(Message{MsgType::EpochEnd, static_cast<uint32_t>(epoch), {}, {}, 0.0f});
            if (ledger) ledger->count_epoch();

            EpochRow row;
            row.epoch = epoch;
            row.train_loss = train_rows ? train_loss / static_cast<double>(train_rows) : 0.0;
            row.val_loss = val_rows ? val_loss / static_cast<double>(val_rows) : row.train_loss;
            row.comp_s = local_comp - epoch_comp0;
            row.comm_s = local_comm - epoch_comm0;
            trace.epochs.push_back(row);
            val_losses.push_back(row.val_loss);

            const EarlyStopResult es =
                early_stop(val_losses, schedule.patience, schedule.min_delta, schedule.max_epochs);
            if (es.best_epoch == epoch) best_state = client.state_image();
            trace.best_epoch = es.best_epoch;
            trace.stop_epoch = es.stop_epoch;
            if (es.stopped_early) break;
        }
        client_end->send(Message{MsgType::TrainingEnd, 0, {}, {}, 0.0f});
    } catch (const std::exception& e) {
        trace.aborted = true;
        trace.abort_reason = e.what();
        client_end->close();
        server_end->close();
    }
    server_thread.join();

    if (!trace.aborted && schedule.restore_best && !best_state.empty()) {
        client.load_state(best_state);
    }
    trace.comp_s = local_comp;
    trace.comm_s = local_comm;
    trace.macs = mac_counter().load() - macs0;
    return trace;
}

std::string trace_csv(const TrainingTrace& trace) {
    std::ostringstream os;
    os << "epoch,train_loss,val_loss,comp_s,comm_s\n";
    os.precision(17);
    for (const auto& row : trace.epochs) {
        os << row.epoch << "," << row.train_loss << "," << row.val_loss << "," << row.comp_s << ","
           << row.comm_s << "\n";
    }
    return os.str();
}

} // namespace salt
