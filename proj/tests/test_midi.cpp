#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "pedalnet/errors.hpp"
#include "pedalnet/midi.hpp"
#include "pedalnet/textio.hpp"

using namespace pedalnet;
using Bytes = std::vector<std::uint8_t>;

namespace {

Bytes make_smf(const Bytes& track, int format = 0, int division = 480) {
    Bytes out = {'M', 'T', 'h', 'd', 0, 0, 0, 6};
    auto u16 = [&](int v) {
        out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
        out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    };
    u16(format);
    u16(1);
    u16(division);
    out.insert(out.end(), {'M', 'T', 'r', 'k'});
    const auto len = static_cast<std::uint32_t>(track.size());
    out.push_back(static_cast<std::uint8_t>(len >> 24));
    out.push_back(static_cast<std::uint8_t>((len >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((len >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>(len & 0xFF));
    out.insert(out.end(), track.begin(), track.end());
    return out;
}

// delta 0: note-on C4, delta 480: note-off, end of track.
// At 480 ticks/quarter and the default tempo one tick is 1/960 s.
const Bytes kSimpleTrack = {0x00, 0x90, 0x3C, 0x64,
                            0x83, 0x60, 0x80, 0x3C, 0x40,
                            0x00, 0xFF, 0x2F, 0x00};

// Six CC64 messages: on(80), off(30), on(64), off(63), on(127), and a
// redundant repeat of 127; the last segment is left open at the note-off.
const Bytes kPedalTrack = {0x00, 0x90, 0x3C, 0x64,
                           0x81, 0x70, 0xB0, 0x40, 0x50,
                           0x81, 0x70, 0xB0, 0x40, 0x1E,
                           0x81, 0x70, 0xB0, 0x40, 0x40,
                           0x81, 0x70, 0xB0, 0x40, 0x3F,
                           0x81, 0x70, 0xB0, 0x40, 0x7F,
                           0x78, 0xB0, 0x40, 0x7F,
                           0x82, 0x68, 0x80, 0x3C, 0x40,
                           0x00, 0xFF, 0x2F, 0x00};

// Same notes with every CC64 removed: the note-off delta grows to 1680.
const Bytes kPedalTrackStripped = {0x00, 0x90, 0x3C, 0x64,
                                   0x8D, 0x10, 0x80, 0x3C, 0x40,
                                   0x00, 0xFF, 0x2F, 0x00};

midi::CcEvent cc(double t, int v) { return {t, v}; }

}  // namespace

TEST_CASE("simple SMF parses to one note with tempo-derived times") {
    const Bytes file = make_smf(kSimpleTrack);
    midi::MidiPerformance perf = midi::parse_midi(file);
    REQUIRE(perf.notes.size() == 1);
    CHECK(perf.notes[0].pitch == 60);
    CHECK(perf.notes[0].velocity == 100);
    CHECK(perf.notes[0].onset_s == doctest::Approx(0.0));
    CHECK(perf.notes[0].offset_s == doctest::Approx(0.5));
    CHECK(perf.cc64.empty());
    CHECK(perf.end_time_s == doctest::Approx(0.5));
    CHECK(midi::pedal_segments(perf).empty());
}

TEST_CASE("tempo change splits the tick-to-seconds map") {
    // 500000 us/quarter for the first 480 ticks, then 250000.
    const Bytes track = {0x00, 0xFF, 0x51, 0x03, 0x07, 0xA1, 0x20,
                         0x00, 0x90, 0x3C, 0x64,
                         0x83, 0x60, 0xFF, 0x51, 0x03, 0x03, 0xD0, 0x90,
                         0x83, 0x60, 0x80, 0x3C, 0x40,
                         0x00, 0xFF, 0x2F, 0x00};
    midi::MidiPerformance perf = midi::parse_midi(make_smf(track));
    REQUIRE(perf.notes.size() == 1);
    CHECK(perf.notes[0].onset_s == doctest::Approx(0.0));
    CHECK(perf.notes[0].offset_s == doctest::Approx(0.75));
    REQUIRE(perf.tempo_map.size() == 2);
    CHECK(perf.tempo_map[0].us_per_quarter == 500000);
    CHECK(perf.tempo_map[1].tick == 480);
    CHECK(perf.tempo_map[1].us_per_quarter == 250000);
}

TEST_CASE("running status round-trips byte for byte") {
    const Bytes track = {0x00, 0x90, 0x3C, 0x64,
                         0x60, 0x3E, 0x64,
                         0x60, 0x80, 0x3C, 0x40,
                         0x00, 0x3E, 0x40,
                         0x00, 0xFF, 0x2F, 0x00};
    const Bytes file = make_smf(track);
    midi::SmfFile smf = midi::read_smf(file);
    CHECK(midi::write_smf(smf) == file);

    midi::MidiPerformance perf = midi::interpret_smf(smf);
    REQUIRE(perf.notes.size() == 2);
    CHECK(perf.notes[0].pitch == 60);
    CHECK(perf.notes[0].offset_s == doctest::Approx(0.2));
    CHECK(perf.notes[1].pitch == 62);
    CHECK(perf.notes[1].onset_s == doctest::Approx(0.1));
    CHECK(perf.notes[1].offset_s == doctest::Approx(0.2));
}

TEST_CASE("non-minimal delta encoding is preserved") {
    const Bytes track = {0x80, 0x00, 0x90, 0x3C, 0x64,
                         0x83, 0x60, 0x80, 0x3C, 0x40,
                         0x00, 0xFF, 0x2F, 0x00};
    const Bytes file = make_smf(track);
    midi::SmfFile smf = midi::read_smf(file);
    CHECK(smf.tracks.at(0).events.at(0).delta == 0);
    CHECK(midi::write_smf(smf) == file);
}

TEST_CASE("note-on with velocity zero ends the note") {
    const Bytes track = {0x00, 0x90, 0x3C, 0x64,
                         0x81, 0x70, 0x90, 0x3C, 0x00,
                         0x00, 0xFF, 0x2F, 0x00};
    midi::MidiPerformance perf = midi::parse_midi(make_smf(track));
    REQUIRE(perf.notes.size() == 1);
    CHECK(perf.notes[0].velocity == 100);
    CHECK(perf.notes[0].offset_s == doctest::Approx(0.25));
}

TEST_CASE("truncated files raise ParseError with a byte offset") {
    const Bytes file = make_smf(kSimpleTrack);
    for (std::size_t cut : {std::size_t{3}, std::size_t{10}, file.size() - 2}) {
        Bytes part(file.begin(), file.begin() + static_cast<std::ptrdiff_t>(cut));
        CHECK_THROWS_AS(midi::read_smf(part), ParseError);
    }
    Bytes not_midi = {'R', 'I', 'F', 'F', 0, 0, 0, 0};
    try {
        midi::read_smf(not_midi);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.byte_offset == 0);
        CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
    }
}

TEST_CASE("pedal_segments thresholding") {
    SUBCASE("rise and fall around the threshold") {
        std::vector<midi::CcEvent> evs = {cc(0.0, 0), cc(1.0, 100), cc(3.0, 20)};
        auto segs = midi::pedal_segments(evs, 64, 5.0);
        REQUIRE(segs.size() == 1);
        CHECK(segs[0].onset_s == doctest::Approx(1.0));
        CHECK(segs[0].offset_s == doctest::Approx(3.0));
    }
    SUBCASE("values below the threshold never open a segment") {
        std::vector<midi::CcEvent> evs = {cc(0.0, 10), cc(1.0, 63), cc(2.0, 0)};
        CHECK(midi::pedal_segments(evs, 64, 5.0).empty());
    }
    SUBCASE("64 counts as pressed, 63 does not") {
        std::vector<midi::CcEvent> evs = {cc(0.5, 64), cc(0.9, 63), cc(2.0, 127), cc(2.5, 0)};
        auto segs = midi::pedal_segments(evs, 64, 3.0);
        REQUIRE(segs.size() == 2);
        CHECK(segs[0].onset_s == doctest::Approx(0.5));
        CHECK(segs[0].offset_s == doctest::Approx(0.9));
        CHECK(segs[1].onset_s == doctest::Approx(2.0));
        CHECK(segs[1].offset_s == doctest::Approx(2.5));
    }
    SUBCASE("a trailing press closes at the end time") {
        std::vector<midi::CcEvent> evs = {cc(1.0, 127)};
        auto segs = midi::pedal_segments(evs, 64, 4.0);
        REQUIRE(segs.size() == 1);
        CHECK(segs[0].offset_s == doctest::Approx(4.0));
    }
    SUBCASE("zero-length segments are dropped") {
        std::vector<midi::CcEvent> evs = {cc(1.0, 127), cc(1.0, 0)};
        CHECK(midi::pedal_segments(evs, 64, 4.0).empty());
    }
}

TEST_CASE("pedal file: six CC64 messages give three segments") {
    const Bytes file = make_smf(kPedalTrack);
    midi::MidiPerformance perf = midi::parse_midi(file);
    REQUIRE(perf.cc64.size() == 6);
    CHECK(perf.end_time_s == doctest::Approx(1.75));

    auto segs = midi::pedal_segments(perf);
    REQUIRE(segs.size() == 3);
    const double want[3][2] = {{0.25, 0.5}, {0.75, 1.0}, {1.25, 1.75}};
    for (int i = 0; i < 3; ++i) {
        CHECK(segs[i].onset_s == doctest::Approx(want[i][0]));
        CHECK(segs[i].offset_s == doctest::Approx(want[i][1]));
    }
}

TEST_CASE("strip_sustain_smf removes CC64 and merges deltas minimally") {
    midi::SmfFile smf = midi::read_smf(make_smf(kPedalTrack));
    midi::SmfFile stripped = midi::strip_sustain_smf(smf);
    CHECK(midi::write_smf(stripped) == make_smf(kPedalTrackStripped));

    midi::MidiPerformance perf = midi::interpret_smf(stripped);
    CHECK(perf.cc64.empty());
    REQUIRE(perf.notes.size() == 1);
    CHECK(perf.notes[0].offset_s == doctest::Approx(1.75));

    // Stripping a file without any CC64 changes nothing.
    midi::SmfFile plain = midi::read_smf(make_smf(kSimpleTrack));
    CHECK(midi::write_smf(midi::strip_sustain_smf(plain)) == make_smf(kSimpleTrack));
}

TEST_CASE("strip_sustain clears controller data on the performance") {
    midi::MidiPerformance perf = midi::parse_midi(make_smf(kPedalTrack));
    midi::MidiPerformance bare = midi::strip_sustain(perf);
    CHECK(bare.cc64.empty());
    CHECK(bare.notes.size() == perf.notes.size());
    CHECK(bare.end_time_s == perf.end_time_s);
    CHECK(midi::pedal_segments(bare).empty());
    midi::MidiPerformance twice = midi::strip_sustain(bare);
    CHECK(twice.cc64.empty());
}

namespace {

midi::MidiPerformance fake_perf(const std::string& source, const std::string& composer,
                                std::vector<midi::PedalSegment> segs) {
    midi::MidiPerformance p;
    p.source_id = source;
    p.composer_id = composer;
    double end = 0.0;
    for (const auto& s : segs) {
        p.cc64.push_back({s.onset_s, 127});
        p.cc64.push_back({s.offset_s, 0});
        end = std::max(end, s.offset_s);
    }
    p.end_time_s = end + 1.0;
    return p;
}

}  // namespace

TEST_CASE("excerpt manifest pairs every segment with both labels") {
    std::vector<midi::MidiPerformance> perfs = {
        fake_perf("chopin_op1", "chopin", {{0.0, 2.0}, {3.0, 5.0}}),
        fake_perf("bach_wtc1", "bach", {{1.0, 4.0}}),
    };
    midi::ExcerptManifest m = midi::build_excerpt_manifest(perfs, 1000, 7);
    REQUIRE(m.entries.size() == 6);

    int pedal = 0, nopedal = 0;
    for (std::size_t i = 0; i < m.entries.size(); i += 2) {
        CHECK(m.entries[i].label == "pedal");
        CHECK(m.entries[i + 1].label == "no-pedal");
        CHECK(m.entries[i].source_id == m.entries[i + 1].source_id);
        CHECK(m.entries[i].onset_s == m.entries[i + 1].onset_s);
    }
    for (const auto& e : m.entries) (e.label == "pedal" ? pedal : nopedal)++;
    CHECK(pedal == nopedal);
    // composers come out in sorted order
    CHECK(m.entries[0].composer_id == "bach");
    CHECK(m.entries[2].composer_id == "chopin");
}

TEST_CASE("excerpt manifest caps per composer reproducibly") {
    std::vector<midi::MidiPerformance> perfs = {
        fake_perf("liszt_hr2", "liszt",
                  {{0.0, 1.0}, {2.0, 3.0}, {4.0, 5.0}, {6.0, 7.0}, {8.0, 9.0}}),
    };
    midi::ExcerptManifest a = midi::build_excerpt_manifest(perfs, 2, 42);
    midi::ExcerptManifest b = midi::build_excerpt_manifest(perfs, 2, 42);
    REQUIRE(a.entries.size() == 4);
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        CHECK(a.entries[i].onset_s == b.entries[i].onset_s);
        CHECK(a.entries[i].label == b.entries[i].label);
    }
    // kept segments stay in score order
    CHECK(a.entries[0].onset_s < a.entries[2].onset_s);

    midi::ExcerptManifest c = midi::build_excerpt_manifest(perfs, 2, 43);
    CHECK(c.entries.size() == 4);
}

TEST_CASE("excerpt manifest drops segments shorter than the minimum") {
    std::vector<midi::MidiPerformance> perfs = {
        fake_perf("x_a", "x", {{0.0, 0.2}, {1.0, 3.0}}),
    };
    midi::ExcerptManifest m = midi::build_excerpt_manifest(perfs, 1000, 0, 64, 0.5);
    REQUIRE(m.entries.size() == 2);
    CHECK(m.entries[0].onset_s == doctest::Approx(1.0));
}

TEST_CASE("manifest CSV round trip") {
    std::vector<midi::MidiPerformance> perfs = {
        fake_perf("chopin_op1", "chopin", {{0.25, 2.5}}),
    };
    midi::ExcerptManifest m = midi::build_excerpt_manifest(perfs, 1000, 0);
    std::string csv = midi::manifest_to_csv(m);
    midi::ExcerptManifest back = midi::manifest_from_csv(csv);
    REQUIRE(back.entries.size() == m.entries.size());
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        CHECK(back.entries[i].source_id == m.entries[i].source_id);
        CHECK(back.entries[i].composer_id == m.entries[i].composer_id);
        CHECK(back.entries[i].onset_s == m.entries[i].onset_s);
        CHECK(back.entries[i].offset_s == m.entries[i].offset_s);
        CHECK(back.entries[i].label == m.entries[i].label);
    }

    CHECK_THROWS_AS(midi::manifest_from_csv("nope\n"), DataError);
    CHECK_THROWS_AS(
        midi::manifest_from_csv("source_id,composer_id,onset_s,offset_s,label\na,b,0,1\n"),
        DataError);
    CHECK_THROWS_AS(
        midi::manifest_from_csv("source_id,composer_id,onset_s,offset_s,label\na,b,0,1,maybe\n"),
        DataError);
}

TEST_CASE("segments CSV round trip") {
    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() / "pedalnet_test_segments.csv";
    std::vector<midi::PedalSegment> segs = {{0.25, 0.5}, {0.75, 1.0}, {1.25, 1.75}};
    midi::write_segments_csv(path.string(), segs);
    auto back = midi::read_segments_csv(path.string());
    REQUIRE(back.size() == segs.size());
    for (std::size_t i = 0; i < segs.size(); ++i) {
        CHECK(back[i].onset_s == segs[i].onset_s);
        CHECK(back[i].offset_s == segs[i].offset_s);
    }
    fs::remove(path);

    const fs::path bad = fs::temp_directory_path() / "pedalnet_test_segments_bad.csv";
    textio::write_text(bad.string(), "wrong,header\n0,1\n");
    CHECK_THROWS_AS(midi::read_segments_csv(bad.string()), DataError);
    fs::remove(bad);
}
