#include "pedalnet/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "pedalnet/errors.hpp"

namespace pedalnet::wav {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

struct ByteReader {
    const std::vector<std::uint8_t>& b;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > b.size())
            throw ParseError("unexpected end of WAV data", pos);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = static_cast<std::uint32_t>(b[pos]) | b[pos + 1] << 8 |
                          b[pos + 2] << 16 | static_cast<std::uint32_t>(b[pos + 3]) << 24;
        pos += 4;
        return v;
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(b[pos] | b[pos + 1] << 8);
        pos += 2;
        return v;
    }
    bool tag(const char* t) {
        need(4);
        bool ok = std::memcmp(b.data() + pos, t, 4) == 0;
        pos += 4;
        return ok;
    }
};

}  // namespace

Signal resample_linear(const Signal& s, double target_rate) {
    if (target_rate <= 0.0) throw DataError("resample: target rate must be positive");
    if (s.sample_rate == target_rate) return s;
    if (s.samples.empty()) {
        Signal out;
        out.sample_rate = target_rate;
        return out;
    }
    const double ratio = s.sample_rate / target_rate;
    const std::size_t out_len = static_cast<std::size_t>(
        std::llround(static_cast<double>(s.samples.size()) * target_rate / s.sample_rate));
    Signal out;
    out.sample_rate = target_rate;
    out.samples.resize(out_len);
    for (std::size_t i = 0; i < out_len; ++i) {
        const double src = static_cast<double>(i) * ratio;
        const std::size_t i0 = std::min(static_cast<std::size_t>(src), s.samples.size() - 1);
        const std::size_t i1 = std::min(i0 + 1, s.samples.size() - 1);
        const double frac = src - static_cast<double>(i0);
        out.samples[i] = s.samples[i0] * (1.0 - frac) + s.samples[i1] * frac;
    }
    return out;
}

Signal read(const std::string& path, double target_rate) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    ByteReader r{bytes};

    if (!r.tag("RIFF")) throw ParseError("missing RIFF header", 0);
    r.u32();  // riff size
    if (!r.tag("WAVE")) throw ParseError("not a WAVE file", 8);

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    std::size_t data_pos = 0, data_len = 0;

    while (r.pos + 8 <= bytes.size()) {
        std::size_t chunk_at = r.pos;
        r.need(8);
        char id[5] = {0};
        std::memcpy(id, bytes.data() + r.pos, 4);
        r.pos += 4;
        std::uint32_t size = r.u32();
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (size < 16) throw ParseError("fmt chunk too small", chunk_at);
            format = r.u16();
            channels = r.u16();
            rate = r.u32();
            r.u32();  // byte rate
            r.u16();  // block align
            bits = r.u16();
            if (format == kFormatExtensible && size >= 40) {
                r.u16();             // extension size
                r.u16();             // valid bits
                r.u32();             // channel mask
                format = r.u16();    // first two bytes of the subformat GUID
                r.pos = chunk_at + 8 + size;
            } else {
                r.pos = chunk_at + 8 + size;
            }
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data_pos = r.pos;
            data_len = size;
            r.need(size);
            r.pos += size;
        } else {
            r.need(size);
            r.pos += size;  // skip unknown chunk
        }
        if (size % 2 == 1 && r.pos < bytes.size()) ++r.pos;  // chunk padding
    }

    if (!have_fmt) throw ParseError("missing fmt chunk", bytes.size());
    if (data_pos == 0) throw ParseError("missing data chunk", bytes.size());
    if (channels == 0 || rate == 0) throw ParseError("bad fmt chunk", data_pos);

    const std::size_t bytes_per_sample = bits / 8u;
    if (format == kFormatPcm && bits != 16 && bits != 24)
        throw DataError("unsupported PCM depth " + std::to_string(bits) + " in " + path);
    if (format == kFormatFloat && bits != 32)
        throw DataError("unsupported float depth " + std::to_string(bits) + " in " + path);
    if (format != kFormatPcm && format != kFormatFloat)
        throw DataError("unsupported WAV format tag " + std::to_string(format) + " in " + path);

    const std::size_t n_frames = data_len / (bytes_per_sample * channels);
    Signal out;
    out.sample_rate = rate;
    out.samples.resize(n_frames);
    const std::uint8_t* d = bytes.data() + data_pos;
    for (std::size_t i = 0; i < n_frames; ++i) {
        double acc = 0.0;
        for (std::uint16_t ch = 0; ch < channels; ++ch) {
            const std::uint8_t* p = d + (i * channels + ch) * bytes_per_sample;
            double v = 0.0;
            if (format == kFormatPcm && bits == 16) {
                std::int16_t s = static_cast<std::int16_t>(p[0] | p[1] << 8);
                v = s / 32768.0;
            } else if (format == kFormatPcm && bits == 24) {
                std::int32_t s = p[0] | p[1] << 8 | p[2] << 16;
                if (s & 0x800000) s |= ~0xFFFFFF;
                v = s / 8388608.0;
            } else {
                float fv;
                std::memcpy(&fv, p, 4);
                v = fv;
            }
            acc += v;
        }
        out.samples[i] = acc / channels;
    }
    if (target_rate > 0.0 && out.sample_rate != target_rate)
        out = resample_linear(out, target_rate);
    return out;
}

void write(const std::string& path, const Signal& s) {
    validate(s);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open " + path + " for writing");

    const std::uint32_t rate = static_cast<std::uint32_t>(std::lround(s.sample_rate));
    const std::uint32_t data_len = static_cast<std::uint32_t>(s.samples.size() * 2);
    auto u32 = [&](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
    auto u16 = [&](std::uint16_t v) { f.write(reinterpret_cast<const char*>(&v), 2); };

    f.write("RIFF", 4);
    u32(36 + data_len);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    u32(16);
    u16(kFormatPcm);
    u16(1);  // mono
    u32(rate);
    u32(rate * 2);
    u16(2);
    u16(16);
    f.write("data", 4);
    u32(data_len);
    for (double x : s.samples) {
        const double clamped = std::clamp(x, -1.0, 1.0);
        auto v = static_cast<std::int16_t>(std::lround(clamped * 32767.0));
        f.write(reinterpret_cast<const char*>(&v), 2);
    }
    if (!f) throw DataError("short write to " + path);
}

}  // namespace pedalnet::wav
