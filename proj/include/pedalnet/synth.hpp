#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pedalnet/dsp.hpp"
#include "pedalnet/midi.hpp"
#include "pedalnet/rng.hpp"
#include "pedalnet/signal.hpp"

namespace pedalnet::synth {

// Deterministic additive piano-ish synthesizer. Stands in for a real
// renderer so the full pipeline can be trained and tested at desk scale.
struct SynthConfig {
    double sample_rate = 44100.0;
    int n_partials = 8;
    double decay_rate_no_pedal = 3.0;  // 1/s
    double decay_rate_pedal = 0.8;     // 1/s, must be slower (smaller)
    double resonance_gain = 0.3;       // sympathetic-partial level, in [0, 1]
    double inharmonicity = 1e-4;       // stretch per squared partial index
    double noise_amp = 0.0;            // white noise floor (domain-shift knob)
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError
};

// Renders every note as a sum of exponentially decaying inharmonic
// partials. When with_pedal is set and a note overlaps a pedal segment,
// the note decays at the pedal rate, rings until the pedal release, and
// excites low-level sympathetic partials at other string frequencies.
// Output is peak-normalized to 0.9.
Signal render(const midi::MidiPerformance& perf, bool with_pedal, const SynthConfig& cfg);

struct LabeledMel {
    dsp::MelSpectrogram mel;
    int label = 0;  // 1 = pedal, 0 = no-pedal
};

// Random short scores rendered both ways, clipped to their pedal segment,
// fit to 2 s and converted to melspectrograms. Labels are balanced 1:1.
std::vector<LabeledMel> generate_paired_dataset(int n_pairs, const SynthConfig& cfg,
                                                const dsp::DspConfig& dsp_cfg = {});

// One excerpt pair, clipped to the pedal segment but not yet fit to 2 s.
// generate_paired_dataset(n, cfg) consumes render_pair(0..n-1, cfg).
struct RenderedPair {
    Signal pedal;
    Signal no_pedal;
    midi::PedalSegment segment;  // excerpt bounds in score time
};
RenderedPair render_pair(int index, const SynthConfig& cfg);

// A random score with 1..6 notes and one pedal segment, used both for the
// paired dataset and for toy passages.
midi::MidiPerformance random_score(Rng& rng);

struct ToyPassage {
    std::string id;
    Signal audio;
    std::vector<midi::PedalSegment> truth;
    midi::MidiPerformance score;
};

// A longer performance with several pedalled and unpedalled stretches,
// rendered with pedal; ground truth is the score's pedal segment list.
ToyPassage generate_passage(const std::string& id, double duration_s, const SynthConfig& cfg,
                            std::uint64_t salt);

}  // namespace pedalnet::synth
