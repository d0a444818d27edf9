#include "pedalnet/midi.hpp"

#include <algorithm>
#include <cstring>
#include <map>
#include <set>

#include "pedalnet/errors.hpp"
#include "pedalnet/rng.hpp"
#include "pedalnet/textio.hpp"

namespace pedalnet::midi {

namespace {

constexpr std::uint8_t kMetaStatus = 0xFF;
constexpr std::uint8_t kSysexStart = 0xF0;
constexpr std::uint8_t kSysexCont = 0xF7;
constexpr int kSustainController = 64;

struct ByteCursor {
    std::span<const std::uint8_t> b;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > b.size()) throw ParseError("unexpected end of MIDI data", pos);
    }
    std::uint8_t u8() {
        need(1);
        return b[pos++];
    }
    std::uint32_t u32be() {
        need(4);
        std::uint32_t v = static_cast<std::uint32_t>(b[pos]) << 24 | b[pos + 1] << 16 |
                          b[pos + 2] << 8 | b[pos + 3];
        pos += 4;
        return v;
    }
    std::uint16_t u16be() {
        need(2);
        auto v = static_cast<std::uint16_t>(b[pos] << 8 | b[pos + 1]);
        pos += 2;
        return v;
    }
};

// Variable-length quantity; keeps the raw bytes so unmodified files
// re-serialize exactly even when the encoding was non-minimal.
std::uint32_t read_vlq(ByteCursor& c, std::vector<std::uint8_t>* raw) {
    std::uint32_t value = 0;
    for (int i = 0; i < 4; ++i) {
        std::uint8_t byte = c.u8();
        if (raw) raw->push_back(byte);
        value = (value << 7) | (byte & 0x7F);
        if (!(byte & 0x80)) return value;
    }
    throw ParseError("variable-length quantity longer than 4 bytes", c.pos);
}

std::vector<std::uint8_t> encode_vlq(std::uint32_t value) {
    std::uint8_t tmp[4];
    int n = 0;
    do {
        tmp[n++] = static_cast<std::uint8_t>(value & 0x7F);
        value >>= 7;
    } while (value != 0);
    std::vector<std::uint8_t> out;
    for (int i = n - 1; i >= 0; --i)
        out.push_back(i == 0 ? tmp[i] : static_cast<std::uint8_t>(tmp[i] | 0x80));
    return out;
}

int channel_data_bytes(std::uint8_t status) {
    switch (status & 0xF0) {
        case 0xC0:
        case 0xD0:
            return 1;
        default:
            return 2;
    }
}

bool is_cc64(const SmfEvent& e) {
    return (e.status & 0xF0) == 0xB0 && e.data.size() >= 1 && e.data[0] == kSustainController;
}

}  // namespace

SmfFile read_smf(std::span<const std::uint8_t> bytes) {
    ByteCursor c{bytes};
    c.need(4);
    if (std::memcmp(bytes.data(), "MThd", 4) != 0)
        throw ParseError("missing MThd header", 0);
    c.pos = 4;
    std::uint32_t header_len = c.u32be();
    if (header_len < 6) throw ParseError("MThd chunk too small", c.pos);
    std::size_t header_end = c.pos + header_len;
    SmfFile file;
    file.format = c.u16be();
    std::uint16_t n_tracks = c.u16be();
    std::uint16_t division = c.u16be();
    if (file.format != 0 && file.format != 1)
        throw ParseError("unsupported SMF format " + std::to_string(file.format), 8);
    if (division & 0x8000)
        throw ParseError("SMPTE time division is not supported", 12);
    if (division == 0) throw ParseError("zero ticks-per-quarter", 12);
    file.division = division;
    c.pos = header_end;

    for (int t = 0; t < n_tracks; ++t) {
        c.need(8);
        if (std::memcmp(bytes.data() + c.pos, "MTrk", 4) != 0)
            throw ParseError("expected MTrk chunk", c.pos);
        c.pos += 4;
        std::uint32_t track_len = c.u32be();
        c.need(track_len);
        std::size_t track_end = c.pos + track_len;

        SmfTrack track;
        std::int64_t tick = 0;
        std::uint8_t running = 0;
        while (c.pos < track_end) {
            SmfEvent ev;
            ev.delta = read_vlq(c, &ev.delta_raw);
            tick += ev.delta;
            ev.tick = tick;

            std::uint8_t first = c.u8();
            if (first & 0x80) {
                ev.status = first;
                ev.explicit_status = true;
            } else {
                if (running == 0)
                    throw ParseError("data byte without running status", c.pos - 1);
                ev.status = running;
                ev.explicit_status = false;
                --c.pos;  // re-read as data
            }

            if (ev.status == kMetaStatus) {
                std::uint8_t type = c.u8();
                ev.data.push_back(type);
                std::vector<std::uint8_t> len_raw;
                std::uint32_t len = read_vlq(c, &len_raw);
                ev.data.insert(ev.data.end(), len_raw.begin(), len_raw.end());
                c.need(len);
                ev.data.insert(ev.data.end(), c.b.begin() + c.pos, c.b.begin() + c.pos + len);
                c.pos += len;
                running = 0;
            } else if (ev.status == kSysexStart || ev.status == kSysexCont) {
                std::vector<std::uint8_t> len_raw;
                std::uint32_t len = read_vlq(c, &len_raw);
                ev.data.insert(ev.data.end(), len_raw.begin(), len_raw.end());
                c.need(len);
                ev.data.insert(ev.data.end(), c.b.begin() + c.pos, c.b.begin() + c.pos + len);
                c.pos += len;
                running = 0;
            } else if (ev.status >= 0x80 && ev.status < 0xF0) {
                int n = channel_data_bytes(ev.status);
                for (int i = 0; i < n; ++i) ev.data.push_back(c.u8());
                running = ev.status;
            } else {
                throw ParseError("unsupported status byte " + std::to_string(ev.status),
                                 c.pos - 1);
            }
            track.events.push_back(std::move(ev));
        }
        if (c.pos != track_end)
            throw ParseError("event ran past declared track length", c.pos);
        file.tracks.push_back(std::move(track));
    }
    return file;
}

std::vector<std::uint8_t> write_smf(const SmfFile& file) {
    std::vector<std::uint8_t> out;
    auto u32be = [&](std::uint32_t v) {
        out.push_back(static_cast<std::uint8_t>(v >> 24));
        out.push_back(static_cast<std::uint8_t>(v >> 16));
        out.push_back(static_cast<std::uint8_t>(v >> 8));
        out.push_back(static_cast<std::uint8_t>(v));
    };
    auto u16be = [&](std::uint16_t v) {
        out.push_back(static_cast<std::uint8_t>(v >> 8));
        out.push_back(static_cast<std::uint8_t>(v));
    };

    out.insert(out.end(), {'M', 'T', 'h', 'd'});
    u32be(6);
    u16be(static_cast<std::uint16_t>(file.format));
    u16be(static_cast<std::uint16_t>(file.tracks.size()));
    u16be(static_cast<std::uint16_t>(file.division));

    for (const SmfTrack& track : file.tracks) {
        std::vector<std::uint8_t> body;
        std::uint8_t running = 0;
        for (const SmfEvent& ev : track.events) {
            if (!ev.delta_raw.empty())
                body.insert(body.end(), ev.delta_raw.begin(), ev.delta_raw.end());
            else {
                auto enc = encode_vlq(ev.delta);
                body.insert(body.end(), enc.begin(), enc.end());
            }
            const bool channel_event = ev.status >= 0x80 && ev.status < 0xF0;
            if (ev.explicit_status || !channel_event || running != ev.status)
                body.push_back(ev.status);
            body.insert(body.end(), ev.data.begin(), ev.data.end());
            running = channel_event ? ev.status : 0;
        }
        out.insert(out.end(), {'M', 'T', 'r', 'k'});
        u32be(static_cast<std::uint32_t>(body.size()));
        out.insert(out.end(), body.begin(), body.end());
    }
    return out;
}

SmfFile strip_sustain_smf(const SmfFile& file) {
    SmfFile out;
    out.format = file.format;
    out.division = file.division;
    for (const SmfTrack& track : file.tracks) {
        SmfTrack filtered;
        std::uint32_t carried_delta = 0;
        for (const SmfEvent& ev : track.events) {
            if (is_cc64(ev)) {
                carried_delta += ev.delta;
                continue;
            }
            SmfEvent copy = ev;
            if (carried_delta > 0) {
                copy.delta += carried_delta;
                copy.delta_raw.clear();  // re-encode: the original bytes are stale
                carried_delta = 0;
            }
            filtered.events.push_back(std::move(copy));
        }
        out.tracks.push_back(std::move(filtered));
    }
    return out;
}

MidiPerformance interpret_smf(const SmfFile& file) {
    // Tempo map across all tracks (format 1 keeps it in track 0, but
    // accepting it anywhere costs nothing).
    std::vector<TempoChange> tempo;
    for (const SmfTrack& track : file.tracks)
        for (const SmfEvent& ev : track.events)
            if (ev.status == kMetaStatus && !ev.data.empty() && ev.data[0] == 0x51 &&
                ev.data.size() >= 5)
                tempo.push_back({ev.tick, ev.data[2] << 16 | ev.data[3] << 8 | ev.data[4]});
    std::stable_sort(tempo.begin(), tempo.end(),
                     [](const TempoChange& a, const TempoChange& b) { return a.tick < b.tick; });
    if (tempo.empty() || tempo.front().tick > 0)
        tempo.insert(tempo.begin(), TempoChange{0, 500000});

    // Piecewise-linear tick -> seconds map.
    std::vector<double> tempo_sec(tempo.size(), 0.0);
    for (std::size_t i = 1; i < tempo.size(); ++i) {
        const auto& prev = tempo[i - 1];
        tempo_sec[i] = tempo_sec[i - 1] + static_cast<double>(tempo[i].tick - prev.tick) *
                                              prev.us_per_quarter * 1e-6 / file.division;
    }
    auto tick_to_s = [&](std::int64_t tick) {
        std::size_t i = tempo.size() - 1;
        while (i > 0 && tempo[i].tick > tick) --i;
        return tempo_sec[i] + static_cast<double>(tick - tempo[i].tick) *
                                  tempo[i].us_per_quarter * 1e-6 / file.division;
    };

    MidiPerformance perf;
    perf.tempo_map = tempo;

    struct Open {
        std::int64_t tick;
        int velocity;
    };
    std::map<int, std::vector<Open>> open_notes;  // key = channel<<8 | pitch, FIFO
    std::int64_t last_tick = 0;

    for (const SmfTrack& track : file.tracks) {
        for (const SmfEvent& ev : track.events) {
            last_tick = std::max(last_tick, ev.tick);
            const std::uint8_t hi = ev.status & 0xF0;
            if (hi == 0x90 || hi == 0x80) {
                const int key = (ev.status & 0x0F) << 8 | ev.data[0];
                const int velocity = ev.data[1];
                const bool is_on = hi == 0x90 && velocity > 0;
                if (is_on) {
                    open_notes[key].push_back({ev.tick, velocity});
                } else {
                    auto& stack = open_notes[key];
                    if (!stack.empty()) {
                        Open o = stack.front();
                        stack.erase(stack.begin());
                        perf.notes.push_back({tick_to_s(o.tick), tick_to_s(ev.tick),
                                              ev.data[0], o.velocity});
                    }
                }
            } else if (hi == 0xB0 && ev.data[0] == kSustainController) {
                perf.cc64.push_back({tick_to_s(ev.tick), ev.data[1]});
            }
        }
        // close notes left hanging at end of track
        for (auto& [key, stack] : open_notes)
            for (const Open& o : stack)
                perf.notes.push_back({tick_to_s(o.tick), tick_to_s(last_tick),
                                      key & 0xFF, o.velocity});
        open_notes.clear();
    }

    std::stable_sort(perf.notes.begin(), perf.notes.end(),
                     [](const NoteEvent& a, const NoteEvent& b) {
                         return a.onset_s != b.onset_s ? a.onset_s < b.onset_s
                                                       : a.pitch < b.pitch;
                     });
    std::stable_sort(perf.cc64.begin(), perf.cc64.end(),
                     [](const CcEvent& a, const CcEvent& b) { return a.time_s < b.time_s; });
    perf.end_time_s = tick_to_s(last_tick);
    return perf;
}

MidiPerformance parse_midi(std::span<const std::uint8_t> bytes) {
    return interpret_smf(read_smf(bytes));
}

MidiPerformance strip_sustain(const MidiPerformance& perf) {
    MidiPerformance out = perf;
    out.cc64.clear();
    return out;
}

std::vector<PedalSegment> pedal_segments(const std::vector<CcEvent>& cc64, int threshold,
                                         double end_time_s) {
    std::vector<PedalSegment> segs;
    bool on = false;
    double open_at = 0.0;
    for (const CcEvent& ev : cc64) {
        const bool pressed = ev.value >= threshold;
        if (pressed && !on) {
            on = true;
            open_at = ev.time_s;
        } else if (!pressed && on) {
            on = false;
            if (ev.time_s > open_at) segs.push_back({open_at, ev.time_s});
        }
    }
    if (on && end_time_s > open_at) segs.push_back({open_at, end_time_s});
    return segs;
}

std::vector<PedalSegment> pedal_segments(const MidiPerformance& perf, int threshold) {
    return pedal_segments(perf.cc64, threshold, perf.end_time_s);
}

ExcerptManifest build_excerpt_manifest(const std::vector<MidiPerformance>& perfs,
                                       int cap_per_composer, std::uint64_t seed,
                                       int pedal_threshold, double min_segment_s) {
    struct Pair {
        const MidiPerformance* perf;
        PedalSegment seg;
    };
    std::map<std::string, std::vector<Pair>> by_composer;
    for (const MidiPerformance& perf : perfs)
        for (const PedalSegment& seg : pedal_segments(perf, pedal_threshold))
            if (seg.offset_s - seg.onset_s >= min_segment_s)
                by_composer[perf.composer_id].push_back({&perf, seg});

    ExcerptManifest manifest;
    Rng rng(seed);
    for (auto& [composer, pairs] : by_composer) {  // std::map: sorted, deterministic
        std::vector<std::size_t> idx(pairs.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        if (cap_per_composer >= 0 && pairs.size() > static_cast<std::size_t>(cap_per_composer)) {
            rng.shuffle(idx);
            idx.resize(static_cast<std::size_t>(cap_per_composer));
            std::sort(idx.begin(), idx.end());
        }
        for (std::size_t i : idx) {
            const Pair& p = pairs[i];
            manifest.entries.push_back({p.perf->source_id, composer, p.seg.onset_s,
                                        p.seg.offset_s, "pedal"});
            manifest.entries.push_back({p.perf->source_id, composer, p.seg.onset_s,
                                        p.seg.offset_s, "no-pedal"});
        }
    }
    return manifest;
}

std::string manifest_to_csv(const ExcerptManifest& m) {
    std::string out = "source_id,composer_id,onset_s,offset_s,label\n";
    for (const ManifestEntry& e : m.entries) {
        out += e.source_id + ',' + e.composer_id + ',' + textio::fmt_double(e.onset_s) + ',' +
               textio::fmt_double(e.offset_s) + ',' + e.label + '\n';
    }
    return out;
}

ExcerptManifest manifest_from_csv(const std::string& text) {
    ExcerptManifest m;
    std::size_t start = 0;
    bool header = true;
    while (start < text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string::npos) nl = text.size();
        std::string line = text.substr(start, nl - start);
        start = nl + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            if (line != "source_id,composer_id,onset_s,offset_s,label")
                throw DataError("bad manifest header: " + line);
            header = false;
            continue;
        }
        auto f = textio::split(line, ',');
        if (f.size() != 5) throw DataError("bad manifest row: " + line);
        if (f[4] != "pedal" && f[4] != "no-pedal")
            throw DataError("bad manifest label: " + f[4]);
        m.entries.push_back({f[0], f[1], textio::parse_double(f[2]),
                             textio::parse_double(f[3]), f[4]});
    }
    return m;
}

std::vector<PedalSegment> read_segments_csv(const std::string& path) {
    std::vector<PedalSegment> segs;
    auto lines = textio::read_lines(path);
    if (lines.empty() || lines[0] != "onset_s,offset_s")
        throw DataError("bad segments header in " + path);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        auto f = textio::split(lines[i], ',');
        if (f.size() != 2) throw DataError("bad segments row in " + path + ": " + lines[i]);
        segs.push_back({textio::parse_double(f[0]), textio::parse_double(f[1])});
    }
    return segs;
}

void write_segments_csv(const std::string& path, const std::vector<PedalSegment>& segs) {
    std::string out = "onset_s,offset_s\n";
    for (const PedalSegment& s : segs)
        out += textio::fmt_double(s.onset_s) + ',' + textio::fmt_double(s.offset_s) + '\n';
    textio::write_text(path, out);
}

}  // namespace pedalnet::midi
