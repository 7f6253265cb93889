#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <thread>

#include "helpers.hpp"
#include "salt/transport.hpp"

using namespace salt;
using salt::test::bitwise_equal;
using salt::test::random_tensor;

TEST_CASE("frame round trip for every message type") {
    Rng rng(1);
    std::vector<Message> originals;
    {
        Message m;
        m.type = MsgType::ActivationBatch;
        m.batch_id = 7;
        m.tensor = random_tensor({2, 3, 4, 4}, rng);
        originals.push_back(m);
    }
    {
        Message m;
        m.type = MsgType::GradientBatch;
        m.batch_id = 8;
        m.tensor = random_tensor({2, 5}, rng);
        originals.push_back(m);
    }
    {
        Message m;
        m.type = MsgType::LabelIndexBatch;
        m.batch_id = 9;
        m.indices = {1, 22, 333, 4444};
        originals.push_back(m);
    }
    {
        Message m;
        m.type = MsgType::LossReport;
        m.batch_id = 10;
        m.loss = 2.302585f;
        originals.push_back(m);
    }
    {
        Message m;
        m.type = MsgType::EpochEnd;
        m.batch_id = 3;
        originals.push_back(m);
    }
    {
        Message m;
        m.type = MsgType::TrainingEnd;
        originals.push_back(m);
    }

    for (const Message& m : originals) {
        const auto frame = encode_frame(m);
        const Message back = decode_frame(frame);
        CHECK(back.type == m.type);
        CHECK(back.batch_id == m.batch_id);
        if (m.type == MsgType::ActivationBatch || m.type == MsgType::GradientBatch) {
            CHECK(bitwise_equal(back.tensor, m.tensor));
        }
        if (m.type == MsgType::LabelIndexBatch) CHECK(back.indices == m.indices);
        if (m.type == MsgType::LossReport) CHECK(back.loss == m.loss);
    }
}

TEST_CASE("frame layout: big-endian length prefix, tag, LE batch id") {
    Message m;
    m.type = MsgType::LossReport;
    m.batch_id = 0x01020304;
    m.loss = 0.0f;
    const auto frame = encode_frame(m);
    const uint32_t body_len = static_cast<uint32_t>(frame.size() - 4);
    CHECK(frame[0] == static_cast<uint8_t>(body_len >> 24));
    CHECK(frame[1] == static_cast<uint8_t>(body_len >> 16));
    CHECK(frame[2] == static_cast<uint8_t>(body_len >> 8));
    CHECK(frame[3] == static_cast<uint8_t>(body_len));
    CHECK(frame[4] == static_cast<uint8_t>(MsgType::LossReport));
    CHECK(frame[5] == 0x04); // little-endian batch id
    CHECK(frame[6] == 0x03);
    CHECK(frame[7] == 0x02);
    CHECK(frame[8] == 0x01);
}

TEST_CASE("decode rejects malformed frames") {
    Message m;
    m.type = MsgType::ActivationBatch;
    m.batch_id = 1;
    Rng rng(2);
    m.tensor = random_tensor({2, 2}, rng);
    auto frame = encode_frame(m);

    auto truncated = frame;
    truncated.resize(frame.size() - 3);
    CHECK_THROWS_AS(decode_frame(truncated), TransportError);

    auto bad_len = frame;
    bad_len[3] ^= 0x01;
    CHECK_THROWS_AS(decode_frame(bad_len), TransportError);

    auto extra = frame;
    extra.push_back(0);
    CHECK_THROWS_AS(decode_frame(extra), TransportError);

    CHECK_THROWS_AS(decode_frame({0, 0}), TransportError);
}

TEST_CASE("in-process duplex delivers in order across threads") {
    auto [client, server] = make_inprocess_transport();
    std::thread echo([server = server] {
        for (;;) {
            Message m = server->recv();
            if (m.type == MsgType::TrainingEnd) return;
            m.batch_id += 1000;
            server->send(std::move(m));
        }
    });
    for (uint32_t i = 0; i < 50; ++i) {
        Message m;
        m.type = MsgType::LossReport;
        m.batch_id = i;
        m.loss = static_cast<float>(i);
        client->send(std::move(m));
    }
    for (uint32_t i = 0; i < 50; ++i) {
        const Message m = client->recv();
        CHECK(m.batch_id == i + 1000);
        CHECK(m.loss == static_cast<float>(i));
    }
    Message end;
    end.type = MsgType::TrainingEnd;
    client->send(std::move(end));
    echo.join();
}

TEST_CASE("closed transport raises on send and on drained recv") {
    auto [client, server] = make_inprocess_transport();
    Message m;
    m.type = MsgType::EpochEnd;
    client->send(m);
    client->close();
    CHECK_THROWS_AS(client->send(m), TransportError);
    // already-queued message still drains, then recv fails
    CHECK(server->recv().type == MsgType::EpochEnd);
    CHECK_THROWS_AS(server->recv(), TransportError);
}

TEST_CASE("transcript records directions and payloads") {
    Transcript transcript;
    auto [client, server] = make_inprocess_transport(&transcript);
    Message up;
    up.type = MsgType::LabelIndexBatch;
    up.batch_id = 1;
    up.indices = {4, 5};
    client->send(up);
    Message down;
    down.type = MsgType::LossReport;
    down.batch_id = 1;
    down.loss = 1.5f;
    server->send(down);
    (void)server->recv();
    (void)client->recv();

    const auto entries = transcript.entries();
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].direction == Direction::ClientToServer);
    CHECK(entries[0].message.type == MsgType::LabelIndexBatch);
    CHECK(entries[0].message.indices == std::vector<uint32_t>{4, 5});
    CHECK(entries[1].direction == Direction::ServerToClient);
    CHECK(entries[1].message.type == MsgType::LossReport);
}
