#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <vector>

#include "salt/tensor.hpp"

namespace salt {

enum class MsgType : uint8_t {
    ActivationBatch = 1,
    GradientBatch = 2,
    LabelIndexBatch = 3,
    LossReport = 4,
    EpochEnd = 5,
    TrainingEnd = 6,
};

const char* msg_type_name(MsgType t);

struct Message {
    MsgType type{};
    uint32_t batch_id = 0;
    Tensor tensor;                 // ActivationBatch / GradientBatch payload
    std::vector<uint32_t> indices; // LabelIndexBatch sample indices
    float loss = 0.0f;             // LossReport payload
};

// Wire framing: u32 big-endian frame length (bytes after the prefix),
// u8 message tag, u32 LE batch id, then a tag-specific little-endian body:
//   Activation/Gradient: u8 rank, rank x u32 dims, raw f32 payload
//   LabelIndexBatch:     u8 rank (=1), u32 count, count x u32 indices
//   LossReport:          f32 loss
//   EpochEnd/TrainingEnd: empty
std::vector<uint8_t> encode_frame(const Message& msg);
Message decode_frame(const std::vector<uint8_t>& frame);

// Direction-tagged copy of every message that crossed a transport, for
// information-boundary audits.
enum class Direction { ClientToServer, ServerToClient };

struct TranscriptEntry {
    Direction direction;
    Message message;
};

class Transcript {
  public:
    void add(Direction d, const Message& m);
    std::vector<TranscriptEntry> entries() const;

  private:
    mutable std::mutex mu_;
    std::vector<TranscriptEntry> entries_;
};

// Ordered, reliable, in-process duplex link between exactly one client and
// one server. Loss is never simulated here; that belongs to the channel.
class Duplex {
  public:
    void send(Message msg);
    Message recv();
    void close();
    bool closed() const;

    friend std::pair<std::shared_ptr<Duplex>, std::shared_ptr<Duplex>> make_inprocess_transport(
        Transcript* transcript);

  private:
    struct Queue {
        std::mutex mu;
        std::condition_variable cv;
        std::deque<Message> items;
        bool closed = false;
    };
    std::shared_ptr<Queue> out_;
    std::shared_ptr<Queue> in_;
    Transcript* transcript_ = nullptr;
    Direction send_direction_ = Direction::ClientToServer;
};

// Returns {client endpoint, server endpoint}. When a transcript is supplied
// every sent message is recorded with its direction.
std::pair<std::shared_ptr<Duplex>, std::shared_ptr<Duplex>> make_inprocess_transport(
    Transcript* transcript = nullptr);

} // namespace salt
