#include "salt/weights_io.hpp"

#include <cstring>
#include <fstream>

namespace salt {

namespace {

constexpr uint8_t kMagic[8] = {'S', 'A', 'L', 'T', 'W', '1', 0, 0};

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v));
    out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

struct Reader {
    const std::vector<uint8_t>& buf;
    size_t at = 0;

    void need(size_t n) const {
        if (at + n > buf.size()) throw IoError("truncated SALTW1 stream");
    }
    uint8_t u8() {
        need(1);
        return buf[at++];
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint16_t>(buf[at] | (buf[at + 1] << 8));
        at += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[at + i]) << (8 * i);
        at += 4;
        return v;
    }
};

} // namespace

std::vector<uint8_t> encode_saltw(const NamedTensors& tensors) {
    std::vector<uint8_t> out(kMagic, kMagic + 8);
    put_u32(out, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        if (name.size() > 0xffff) throw IoError("tensor name too long: " + name);
        put_u16(out, static_cast<uint16_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        out.push_back(static_cast<uint8_t>(t.rank()));
        for (int64_t d : t.shape()) put_u32(out, static_cast<uint32_t>(d));
        const size_t start = out.size();
        out.resize(start + static_cast<size_t>(t.numel()) * 4);
        static_assert(sizeof(float) == 4);
        std::memcpy(out.data() + start, t.data(), static_cast<size_t>(t.numel()) * 4);
    }
    return out;
}

NamedTensors decode_saltw(const std::vector<uint8_t>& bytes) {
    Reader r{bytes};
    r.need(8);
    if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw IoError("bad SALTW1 magic");
    r.at = 8;
    const uint32_t count = r.u32();
    NamedTensors out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint16_t nlen = r.u16();
        r.need(nlen);
        std::string name(reinterpret_cast<const char*>(bytes.data() + r.at), nlen);
        r.at += nlen;
        const uint8_t rank = r.u8();
        Shape shape(rank);
        for (uint8_t d = 0; d < rank; ++d) shape[d] = static_cast<int64_t>(r.u32());
        const int64_t n = shape_numel(shape);
        r.need(static_cast<size_t>(n) * 4);
        std::vector<float> data(static_cast<size_t>(n));
        std::memcpy(data.data(), bytes.data() + r.at, static_cast<size_t>(n) * 4);
        r.at += static_cast<size_t>(n) * 4;
        out.emplace_back(std::move(name), Tensor::from_data(std::move(shape), std::move(data)));
    }
    return out;
}

void save_saltw(const std::string& path, const NamedTensors& tensors) {
    const auto bytes = encode_saltw(tensors);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("short write: " + path);
}

NamedTensors load_saltw(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open: " + path);
    const auto size = static_cast<size_t>(f.tellg());
    f.seekg(0);
    std::vector<uint8_t> bytes(size);
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!f) throw IoError("short read: " + path);
    return decode_saltw(bytes);
}

} // namespace salt
