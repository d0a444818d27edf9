#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pedalnet::midi {

struct NoteEvent {
    double onset_s = 0.0;
    double offset_s = 0.0;
    int pitch = 0;     // 0..127
    int velocity = 0;  // 0..127
};

struct CcEvent {
    double time_s = 0.0;
    int value = 0;  // 0..127
};

struct TempoChange {
    std::int64_t tick = 0;
    int us_per_quarter = 500000;
};

struct MidiPerformance {
    std::vector<NoteEvent> notes;       // sorted by onset
    std::vector<CcEvent> cc64;          // sorted by time
    std::vector<TempoChange> tempo_map; // sorted by tick
    double end_time_s = 0.0;            // time of the last event
    std::string source_id;
    std::string composer_id;
};

struct PedalSegment {
    double onset_s = 0.0;
    double offset_s = 0.0;  // > onset_s
};

// ---- byte-level SMF model (round-trips unmodified files exactly) ----

struct SmfEvent {
    std::vector<std::uint8_t> delta_raw;  // original VLQ encoding, kept verbatim
    std::uint32_t delta = 0;
    std::int64_t tick = 0;                // absolute
    std::uint8_t status = 0;              // resolved (running status applied)
    bool explicit_status = true;          // whether the file spelled the status byte
    std::vector<std::uint8_t> data;       // channel data / meta type+len+payload / sysex len+payload
};

struct SmfTrack {
    std::vector<SmfEvent> events;
};

struct SmfFile {
    int format = 0;     // 0 or 1
    int division = 480; // ticks per quarter note
    std::vector<SmfTrack> tracks;
};

SmfFile read_smf(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_smf(const SmfFile& file);

// Removes every CC64 event; remaining events keep their absolute ticks
// (deltas are merged and re-encoded minimally where a removal touched them).
SmfFile strip_sustain_smf(const SmfFile& file);

MidiPerformance interpret_smf(const SmfFile& file);
MidiPerformance parse_midi(std::span<const std::uint8_t> bytes);

MidiPerformance strip_sustain(const MidiPerformance& perf);

// Pedal state is on while value >= threshold; a trailing on state closes at
// end_time_s. Zero-length segments are dropped.
std::vector<PedalSegment> pedal_segments(const std::vector<CcEvent>& cc64, int threshold,
                                         double end_time_s);
std::vector<PedalSegment> pedal_segments(const MidiPerformance& perf, int threshold = 64);

// ---- excerpt manifest ----

struct ManifestEntry {
    std::string source_id;
    std::string composer_id;
    double onset_s = 0.0;
    double offset_s = 0.0;
    std::string label;  // "pedal" or "no-pedal"
};

struct ExcerptManifest {
    std::vector<ManifestEntry> entries;  // pedal/no-pedal twins adjacent, ratio 1:1
};

// One entry pair per pedal segment; composers contributing more than
// cap_per_composer pairs are subsampled with the given seed.
ExcerptManifest build_excerpt_manifest(const std::vector<MidiPerformance>& perfs,
                                       int cap_per_composer, std::uint64_t seed,
                                       int pedal_threshold = 64, double min_segment_s = 0.0);

std::string manifest_to_csv(const ExcerptManifest& m);
ExcerptManifest manifest_from_csv(const std::string& text);

std::vector<PedalSegment> read_segments_csv(const std::string& path);
void write_segments_csv(const std::string& path, const std::vector<PedalSegment>& segs);

}  // namespace pedalnet::midi
