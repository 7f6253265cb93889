#include "salt/transport.hpp"

#include <cstring>

namespace salt {

const char* msg_type_name(MsgType t) {
    switch (t) {
        case MsgType::ActivationBatch: return "ActivationBatch";
        case MsgType::GradientBatch: return "GradientBatch";
        case MsgType::LabelIndexBatch: return "LabelIndexBatch";
        case MsgType::LossReport: return "LossReport";
        case MsgType::EpochEnd: return "EpochEnd";
        case MsgType::TrainingEnd: return "TrainingEnd";
    }
    return "?";
}

namespace {

void put_u32_le(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint32_t get_u32_le(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

} // namespace

std::vector<uint8_t> encode_frame(const Message& msg) {
    std::vector<uint8_t> body;
    body.push_back(static_cast<uint8_t>(msg.type));
    put_u32_le(body, msg.batch_id);
    switch (msg.type) {
        case MsgType::ActivationBatch:
        case MsgType::GradientBatch: {
            const Tensor& t = msg.tensor;
            body.push_back(static_cast<uint8_t>(t.rank()));
            for (int64_t d : t.shape()) put_u32_le(body, static_cast<uint32_t>(d));
            const size_t at = body.size();
            body.resize(at + static_cast<size_t>(t.numel()) * 4);
            std::memcpy(body.data() + at, t.data(), static_cast<size_t>(t.numel()) * 4);
            break;
        }
        case MsgType::LabelIndexBatch: {
            body.push_back(1);
            put_u32_le(body, static_cast<uint32_t>(msg.indices.size()));
            for (uint32_t v : msg.indices) put_u32_le(body, v);
            break;
        }
        case MsgType::LossReport: {
            uint32_t raw;
            std::memcpy(&raw, &msg.loss, 4);
            put_u32_le(body, raw);
            break;
        }
        case MsgType::EpochEnd:
        case MsgType::TrainingEnd:
            break;
    }
    std::vector<uint8_t> frame;
    frame.reserve(body.size() + 4);
    const auto len = static_cast<uint32_t>(body.size());
    frame.push_back(static_cast<uint8_t>(len >> 24));
    frame.push_back(static_cast<uint8_t>(len >> 16));
    frame.push_back(static_cast<uint8_t>(len >> 8));
    frame.push_back(static_cast<uint8_t>(len));
    frame.insert(frame.end(), body.begin(), body.end());
    return frame;
}

Message decode_frame(const std::vector<uint8_t>& frame) {
    if (frame.size() < 4) throw TransportError("frame shorter than length prefix");
    const uint32_t len = (static_cast<uint32_t>(frame[0]) << 24) |
                         (static_cast<uint32_t>(frame[1]) << 16) |
                         (static_cast<uint32_t>(frame[2]) << 8) | static_cast<uint32_t>(frame[3]);
    if (frame.size() != static_cast<size_t>(len) + 4) throw TransportError("frame length mismatch");
    const uint8_t* p = frame.data() + 4;
    const uint8_t* end = frame.data() + frame.size();
    if (end - p < 5) throw TransportError("frame too short for header");
    Message msg;
    msg.type = static_cast<MsgType>(*p++);
    msg.batch_id = get_u32_le(p);
    p += 4;
    auto need = [&](size_t n) {
        if (static_cast<size_t>(end - p) < n) throw TransportError("truncated frame body");
    };
    switch (msg.type) {
        case MsgType::ActivationBatch:
        case MsgType::GradientBatch: {
            need(1);
            const uint8_t rank = *p++;
            Shape shape(rank);
            need(static_cast<size_t>(rank) * 4);
            for (uint8_t i = 0; i < rank; ++i) {
                shape[i] = static_cast<int64_t>(get_u32_le(p));
                p += 4;
            }
            const int64_t n = shape_numel(shape);
            need(static_cast<size_t>(n) * 4);
            std::vector<float> data(static_cast<size_t>(n));
            std::memcpy(data.data(), p, static_cast<size_t>(n) * 4);
            p += static_cast<size_t>(n) * 4;
            msg.tensor = Tensor::from_data(std::move(shape), std::move(data));
            break;
        }
        case MsgType::LabelIndexBatch: {
            need(5);
            const uint8_t rank = *p++;
            if (rank != 1) throw TransportError("label index batch must be rank 1");
            const uint32_t count = get_u32_le(p);
            p += 4;
            need(static_cast<size_t>(count) * 4);
            msg.indices.resize(count);
            for (uint32_t i = 0; i < count; ++i) {
                msg.indices[i] = get_u32_le(p);
                p += 4;
            }
            break;
        }
        case MsgType::LossReport: {
            need(4);
            const uint32_t raw = get_u32_le(p);
            p += 4;
            std::memcpy(&msg.loss, &raw, 4);
            break;
        }
        case MsgType::EpochEnd:
        case MsgType::TrainingEnd:
            break;
        default:
            throw TransportError("unknown message tag");
    }
    if (p != end) throw TransportError("trailing bytes in frame");
    return msg;
}

void Transcript::add(Direction d, const Message& m) {
    std::lock_guard<std::mutex> lk(mu_);
    entries_.push_back({d, m});
}

std::vector<TranscriptEntry> Transcript::entries() const {
    std::lock_guard<std::mutex> lk(mu_);
    return entries_;
}

void Duplex::send(Message msg) {
    if (transcript_) transcript_->add(send_direction_, msg);
    std::lock_guard<std::mutex> lk(out_->mu);
    if (out_->closed) throw TransportError("send on closed transport");
    out_->items.push_back(std::move(msg));
    out_->cv.notify_one();
}

Message Duplex::recv() {
    std::unique_lock<std::mutex> lk(in_->mu);
    in_->cv.wait(lk, [this] { return !in_->items.empty() || in_->closed; });
    if (in_->items.empty()) throw TransportError("recv on closed transport");
    Message msg = std::move(in_->items.front());
    in_->items.pop_front();
    return msg;
}

void Duplex::close() {
    for (const auto& q : {out_, in_}) {
        std::lock_guard<std::mutex> lk(q->mu);
        q->closed = true;
        q->cv.notify_all();
    }
}

bool Duplex::closed() const {
    std::lock_guard<std::mutex> lk(out_->mu);
    return out_->closed;
}

std::pair<std::shared_ptr<Duplex>, std::shared_ptr<Duplex>> make_inprocess_transport(
    Transcript* transcript) {
    auto up = std::make_shared<Duplex::Queue>();   // client -> server
    auto down = std::make_shared<Duplex::Queue>(); // server -> client
    auto client = std::make_shared<Duplex>();
    client->out_ = up;
    client->in_ = down;
    client->transcript_ = transcript;
    client->send_direction_ = Direction::ClientToServer;
    auto server = std::make_shared<Duplex>();
    server->out_ = down;
    server->in_ = up;
    server->transcript_ = transcript;
    server->send_direction_ = Direction::ServerToClient;
    return {client, server};
}

} // namespace salt
