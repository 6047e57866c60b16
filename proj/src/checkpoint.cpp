#include "checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace progtune {

namespace {

constexpr char kMagic[4] = {'P', 'G', 'T', 'N'};

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<uint8_t>& out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

class Reader {
public:
    Reader(const uint8_t* data, size_t size, const std::string& path)
        : data_(data), size_(size), path_(path) {}

    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string bytes(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == size_; }

private:
    void need(size_t n) {
        if (pos_ + n > size_) {
            fail(Errc::io, "checkpoint '" + path_ + "' is truncated at byte " +
                               std::to_string(pos_));
        }
    }
    const uint8_t* data_;
    size_t size_;
    size_t pos_ = 0;
    std::string path_;
};

}  // namespace

uint32_t encode_tag(const ParameterTag& tag) {
    uint32_t kind = 0;
    switch (tag.kind) {
    case TagKind::embedding: kind = 0; break;
    case TagKind::block: kind = 1; break;
    case TagKind::head: kind = 2; break;
    case TagKind::adapter: kind = 3; break;
    case TagKind::lora: kind = 4; break;
    case TagKind::bias: kind = 5; break;
    }
    uint32_t sub = 0;
    if (tag.detail == "wq") sub = 1;
    else if (tag.detail == "wk") sub = 2;
    else if (tag.detail == "wv") sub = 3;
    else if (tag.detail == "wo") sub = 4;
    return kind | (static_cast<uint32_t>(tag.block) << 8) | (sub << 24);
}

ParameterTag decode_tag(uint32_t code) {
    ParameterTag tag;
    switch (code & 0xff) {
    case 0: tag.kind = TagKind::embedding; break;
    case 1: tag.kind = TagKind::block; break;
    case 2: tag.kind = TagKind::head; break;
    case 3: tag.kind = TagKind::adapter; break;
    case 4: tag.kind = TagKind::lora; break;
    case 5: tag.kind = TagKind::bias; break;
    default: fail(Errc::format, "checkpoint: unknown tag kind " + std::to_string(code & 0xff));
    }
    tag.block = static_cast<int64_t>((code >> 8) & 0xffff);
    switch (code >> 24) {
    case 0: break;
    case 1: tag.detail = "wq"; break;
    case 2: tag.detail = "wk"; break;
    case 3: tag.detail = "wv"; break;
    case 4: tag.detail = "wo"; break;
    default: fail(Errc::format, "checkpoint: unknown tag detail " + std::to_string(code >> 24));
    }
    return tag;
}

std::vector<uint8_t> serialize_checkpoint(const Model& model) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<uint32_t>(model.registry.entries().size()));
    for (const auto& e : model.registry.entries()) {
        put_u32(out, static_cast<uint32_t>(e.id.size()));
        out.insert(out.end(), e.id.begin(), e.id.end());
        put_u32(out, encode_tag(e.tag));
        put_u32(out, static_cast<uint32_t>(e.tensor->shape.size()));
        for (int64_t d : e.tensor->shape) put_u64(out, static_cast<uint64_t>(d));
        for (double v : e.tensor->data) put_f64(out, v);
    }
    return out;
}

void save_checkpoint(const Model& model, const std::string& path) {
    const auto bytes = serialize_checkpoint(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::io, "cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(Errc::io, "short write to '" + path + "'");
}

std::vector<CheckpointTensor> read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) fail(Errc::io, "cannot open '" + path + "'");
    const auto size = static_cast<size_t>(in.tellg());
    std::vector<uint8_t> bytes(size);
    in.seekg(0);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!in) fail(Errc::io, "cannot read '" + path + "'");

    Reader r(bytes.data(), bytes.size(), path);
    if (r.bytes(4) != std::string(kMagic, 4)) {
        fail(Errc::format, "'" + path + "' is not a PGTN checkpoint (bad magic)");
    }
    const uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        fail(Errc::format, "unsupported checkpoint version " + std::to_string(version));
    }
    const uint32_t count = r.u32();
    std::vector<CheckpointTensor> tensors;
    tensors.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        CheckpointTensor t;
        const uint32_t name_len = r.u32();
        t.name = r.bytes(name_len);
        t.tag = decode_tag(r.u32());
        const uint32_t rank = r.u32();
        int64_t elements = 1;
        for (uint32_t k = 0; k < rank; ++k) {
            const uint64_t dim = r.u64();
            if (dim == 0 || dim > (1ull << 32)) {
                fail(Errc::format, "checkpoint tensor '" + t.name + "' has invalid dimension");
            }
            t.shape.push_back(static_cast<int64_t>(dim));
            elements *= static_cast<int64_t>(dim);
        }
        t.data.reserve(static_cast<size_t>(elements));
        for (int64_t k = 0; k < elements; ++k) t.data.push_back(r.f64());
        tensors.push_back(std::move(t));
    }
    if (!r.at_end()) fail(Errc::format, "'" + path + "' has trailing bytes");
    return tensors;
}

void load_checkpoint(const std::string& path, Model& model) {
    const auto tensors = read_checkpoint(path);
    const auto& entries = model.registry.entries();
    if (tensors.size() != entries.size()) {
        fail(Errc::format, "checkpoint holds " + std::to_string(tensors.size()) +
                               " tensors, model expects " + std::to_string(entries.size()));
    }
    for (size_t i = 0; i < entries.size(); ++i) {
        if (tensors[i].name != entries[i].id) {
            fail(Errc::format, "checkpoint tensor '" + tensors[i].name +
                                   "' does not match model parameter '" + entries[i].id + "'");
        }
        if (tensors[i].shape != entries[i].tensor->shape) {
            fail(Errc::format, "checkpoint tensor '" + tensors[i].name + "' has shape " +
                                   shape_str(tensors[i].shape) + ", model expects " +
                                   shape_str(entries[i].tensor->shape));
        }
    }
    // structure verified; now commit
    for (size_t i = 0; i < entries.size(); ++i) {
        entries[i].tensor->data = tensors[i].data;
    }
}

}  // namespace progtune
