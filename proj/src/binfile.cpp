#include "pedalnet/binfile.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "pedalnet/errors.hpp"

namespace pedalnet::binfile {

static_assert(std::endian::native == std::endian::little,
              "container serialization assumes a little-endian host");

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

struct Reader {
    const std::vector<std::uint8_t>& b;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > b.size())
            throw TruncatedFileError("container truncated at byte " + std::to_string(pos));
    }
    std::uint8_t u8() {
        need(1);
        return b[pos++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = static_cast<std::uint32_t>(b[pos]) |
                          static_cast<std::uint32_t>(b[pos + 1]) << 8 |
                          static_cast<std::uint32_t>(b[pos + 2]) << 16 |
                          static_cast<std::uint32_t>(b[pos + 3]) << 24;
        pos += 4;
        return v;
    }
    void raw(void* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, b.data() + pos, n);
        pos += n;
    }
};

}  // namespace

void Container::add_f32(const std::vector<float>& v) {
    Block blk;
    blk.dtype = Dtype::f32;
    blk.f32 = v;
    blocks.push_back(std::move(blk));
}

void Container::add_f64(const std::vector<double>& v) {
    Block blk;
    blk.dtype = Dtype::f64;
    blk.f64 = v;
    blocks.push_back(std::move(blk));
}

std::vector<std::uint8_t> serialize(const Container& c) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 8);
    put_u32(out, c.kind);
    put_u32(out, static_cast<std::uint32_t>(c.config_text.size()));
    out.insert(out.end(), c.config_text.begin(), c.config_text.end());
    put_u32(out, static_cast<std::uint32_t>(c.blocks.size()));
    for (const Block& blk : c.blocks) {
        out.push_back(static_cast<std::uint8_t>(blk.dtype));
        put_u32(out, static_cast<std::uint32_t>(blk.size()));
        std::size_t off = out.size();
        if (blk.dtype == Dtype::f32) {
            out.resize(off + blk.f32.size() * 4);
            std::memcpy(out.data() + off, blk.f32.data(), blk.f32.size() * 4);
        } else {
            out.resize(off + blk.f64.size() * 8);
            std::memcpy(out.data() + off, blk.f64.data(), blk.f64.size() * 8);
        }
    }
    return out;
}

Container deserialize(const std::vector<std::uint8_t>& bytes) {
    Reader r{bytes};
    r.need(8);
    if (std::memcmp(bytes.data(), kMagic, 6) != 0)
        throw ModelError("not a pedalnet model file (bad magic)");
    if (std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw VersionError("unsupported container version " +
                           std::string(reinterpret_cast<const char*>(bytes.data()) + 6, 2));
    r.pos = 8;

    Container c;
    c.kind = r.u32();
    std::uint32_t cfg_len = r.u32();
    r.need(cfg_len);
    c.config_text.assign(reinterpret_cast<const char*>(bytes.data()) + r.pos, cfg_len);
    r.pos += cfg_len;

    std::uint32_t n_blocks = r.u32();
    c.blocks.resize(n_blocks);
    for (Block& blk : c.blocks) {
        std::uint8_t dt = r.u8();
        if (dt != 1 && dt != 2)
            throw ModelError("unknown block dtype " + std::to_string(dt));
        blk.dtype = static_cast<Dtype>(dt);
        std::uint32_t n = r.u32();
        if (blk.dtype == Dtype::f32) {
            blk.f32.resize(n);
            r.raw(blk.f32.data(), std::size_t{n} * 4);
        } else {
            blk.f64.resize(n);
            r.raw(blk.f64.data(), std::size_t{n} * 8);
        }
    }
    if (r.pos != bytes.size())
        throw ModelError("trailing bytes after container payload");
    return c;
}

void write_file(const std::string& path, const Container& c) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open " + path + " for writing");
    auto bytes = serialize(c);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error("short write to " + path);
}

Container read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

}  // namespace pedalnet::binfile
