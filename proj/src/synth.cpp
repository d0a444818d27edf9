#include "pedalnet/synth.hpp"

#include <algorithm>
#include <cmath>

#include "pedalnet/errors.hpp"

namespace pedalnet::synth {

namespace {

constexpr double kTwoPi = 6.28318530717958647692;
constexpr double kAttackS = 0.005;
constexpr double kDampRate = 50.0;   // extra decay once the damper falls back
constexpr double kDampTailS = 0.25;  // render window after the effective offset

double pitch_to_hz(int pitch) { return 440.0 * std::pow(2.0, (pitch - 69) / 12.0); }

struct PartialSpec {
    double freq_hz;
    double amp;
    double decay_rate;   // 1/s while sounding
    double onset_s;
    double offset_s;     // effective offset (damper return)
    double phase;
};

// Recursive complex oscillator: one complex multiply per sample instead of
// a std::sin call. Amplitude drift over a few seconds is ~1e-11, irrelevant
// at synthesis accuracy.
void add_partial(std::vector<double>& buf, double sample_rate, const PartialSpec& p) {
    if (p.freq_hz >= 0.47 * sample_rate) return;  // Nyquist guard
    const long start = std::lround(p.onset_s * sample_rate);
    const long damp_at = std::lround(p.offset_s * sample_rate);
    const long end = std::min<long>(static_cast<long>(buf.size()),
                                    damp_at + std::lround(kDampTailS * sample_rate));
    if (start >= end) return;

    const double omega = kTwoPi * p.freq_hz / sample_rate;
    const double rot_re = std::cos(omega), rot_im = std::sin(omega);
    double z_re = std::cos(p.phase), z_im = std::sin(p.phase);
    const double decay_step = std::exp(-p.decay_rate / sample_rate);
    const double damp_step = std::exp(-(p.decay_rate + kDampRate) / sample_rate);
    const long attack_len = std::lround(kAttackS * sample_rate);

    double env = p.amp;
    for (long i = start; i < end; ++i) {
        double gain = env;
        if (i - start < attack_len)
            gain *= static_cast<double>(i - start) / static_cast<double>(attack_len);
        buf[static_cast<std::size_t>(i)] += gain * z_im;
        const double nre = z_re * rot_re - z_im * rot_im;
        z_im = z_re * rot_im + z_im * rot_re;
        z_re = nre;
        env *= (i < damp_at) ? decay_step : damp_step;
        if (env < 1e-7 && i >= damp_at) break;
    }
}

}  // namespace

void SynthConfig::validate() const {
    if (sample_rate <= 0.0) throw ConfigError("synth: sample_rate must be positive");
    if (n_partials < 1) throw ConfigError("synth: n_partials must be >= 1");
    if (!(decay_rate_pedal < decay_rate_no_pedal))
        throw ConfigError("synth: decay_rate_pedal must be slower than decay_rate_no_pedal");
    if (resonance_gain < 0.0) throw ConfigError("synth: resonance_gain must be >= 0");
    if (noise_amp < 0.0) throw ConfigError("synth: noise_amp must be >= 0");
}

Signal render(const midi::MidiPerformance& perf, bool with_pedal, const SynthConfig& cfg) {
    cfg.validate();
    if (perf.notes.empty()) throw DataError("render: performance has no notes");

    const auto segments = midi::pedal_segments(perf);

    // Work out the buffer length first: notes may ring until pedal release.
    double last_s = perf.end_time_s;
    struct NotePlan {
        const midi::NoteEvent* note;
        bool pedaled;
        double eff_offset;
        double res_start;   // sympathetic excitation start
        double res_end;
    };
    std::vector<NotePlan> plans;
    for (const midi::NoteEvent& note : perf.notes) {
        NotePlan plan{&note, false, note.offset_s, 0.0, 0.0};
        if (with_pedal) {
            for (const midi::PedalSegment& seg : segments) {
                if (seg.onset_s < note.offset_s && note.onset_s < seg.offset_s) {
                    if (!plan.pedaled) {
                        plan.pedaled = true;
                        plan.res_start = std::max(note.onset_s, seg.onset_s);
                    }
                    plan.eff_offset = std::max(plan.eff_offset, seg.offset_s);
                }
            }
        }
        if (plan.pedaled) plan.res_end = plan.eff_offset;
        last_s = std::max(last_s, plan.eff_offset + kDampTailS);
        plans.push_back(plan);
    }

    Signal out;
    out.sample_rate = cfg.sample_rate;
    out.samples.assign(static_cast<std::size_t>(std::lround((last_s + 0.05) * cfg.sample_rate)),
                       0.0);

    for (std::size_t ni = 0; ni < plans.size(); ++ni) {
        const NotePlan& plan = plans[ni];
        const midi::NoteEvent& note = *plan.note;
        Rng rng(Rng::mix(cfg.seed, ni));
        const double f0 = pitch_to_hz(note.pitch);
        const double amp = note.velocity / 127.0;
        const double rate = plan.pedaled ? cfg.decay_rate_pedal : cfg.decay_rate_no_pedal;

        // Shared draws first so pedal and no-pedal twins stay phase-aligned.
        std::vector<double> phases(static_cast<std::size_t>(cfg.n_partials));
        for (double& ph : phases) ph = rng.uniform(0.0, kTwoPi);

        for (int p = 1; p <= cfg.n_partials; ++p) {
            PartialSpec spec;
            spec.freq_hz = f0 * p * std::sqrt(1.0 + cfg.inharmonicity * p * p);
            spec.amp = amp / p;
            spec.decay_rate = rate * (1.0 + 0.15 * (p - 1));
            spec.onset_s = note.onset_s;
            spec.offset_s = plan.eff_offset;
            spec.phase = phases[static_cast<std::size_t>(p - 1)];
            add_partial(out.samples, cfg.sample_rate, spec);
        }

        if (plan.pedaled && cfg.resonance_gain > 0.0) {
            // Undamped strings at other fundamentals ring along quietly.
            const int n_partners = rng.uniform_int(2, 5);
            for (int k = 0; k < n_partners; ++k) {
                int partner = rng.uniform_int(36, 84);
                if (partner == note.pitch) partner = partner > 36 ? partner - 1 : partner + 1;
                const double pf0 = pitch_to_hz(partner);
                for (int p = 1; p <= 4; ++p) {
                    PartialSpec spec;
                    spec.freq_hz = pf0 * p * std::sqrt(1.0 + cfg.inharmonicity * p * p);
                    spec.amp = cfg.resonance_gain * amp * 0.06 / p;
                    spec.decay_rate = cfg.decay_rate_pedal * (1.0 + 0.15 * (p - 1));
                    spec.onset_s = plan.res_start;
                    spec.offset_s = plan.res_end;
                    spec.phase = rng.uniform(0.0, kTwoPi);
                    add_partial(out.samples, cfg.sample_rate, spec);
                }
            }
        }
    }

    if (cfg.noise_amp > 0.0) {
        Rng noise_rng(Rng::mix(cfg.seed, 0x6e6f697365ULL));
        for (double& x : out.samples) x += cfg.noise_amp * (2.0 * noise_rng.next_double() - 1.0);
    }

    double peak = 0.0;
    for (double x : out.samples) peak = std::max(peak, std::abs(x));
    if (peak > 0.0) {
        const double scale = 0.9 / peak;
        for (double& x : out.samples) x *= scale;
    }
    return out;
}

midi::MidiPerformance random_score(Rng& rng) {
    midi::MidiPerformance perf;
    const double seg_on = rng.uniform(0.05, 0.5);
    const double seg_len = rng.uniform(0.3, 2.3);
    const double seg_off = seg_on + seg_len;

    const int n_notes = rng.uniform_int(1, 6);
    double t = std::max(0.0, seg_on + rng.uniform(-0.05, 0.1));
    double last_offset = 0.0;
    for (int k = 0; k < n_notes; ++k) {
        if (k > 0 && !rng.bernoulli(0.35)) t += rng.uniform(0.15, 0.6);
        const int pitch = rng.uniform_int(36, 84);
        const int velocity = rng.uniform_int(60, 110);
        const double dur = rng.uniform(0.25, 1.0);
        perf.notes.push_back({t, t + dur, pitch, velocity});
        last_offset = std::max(last_offset, t + dur);
    }
    perf.cc64 = {{0.0, 0}, {seg_on, 127}, {seg_off, 0}};
    perf.end_time_s = std::max(seg_off, last_offset) + 0.1;
    return perf;
}

RenderedPair render_pair(int index, const SynthConfig& cfg) {
    if (index < 0) throw DataError("render_pair: index must be >= 0");
    cfg.validate();

    Rng rng(Rng::mix(cfg.seed, 0x73636f7265ULL + static_cast<std::uint64_t>(index)));
    midi::MidiPerformance score = random_score(rng);
    const auto segs = midi::pedal_segments(score);
    const midi::PedalSegment seg = segs.front();

    SynthConfig pair_cfg = cfg;
    pair_cfg.seed = Rng::mix(cfg.seed, 0x72656e646572ULL + static_cast<std::uint64_t>(index));

    RenderedPair out;
    out.pedal = slice(render(score, true, pair_cfg), seg.onset_s, seg.offset_s);
    out.no_pedal = slice(render(score, false, pair_cfg), seg.onset_s, seg.offset_s);
    out.segment = seg;
    return out;
}

std::vector<LabeledMel> generate_paired_dataset(int n_pairs, const SynthConfig& cfg,
                                                const dsp::DspConfig& dsp_cfg) {
    if (n_pairs < 1) throw DataError("generate_paired_dataset: n_pairs must be >= 1");
    cfg.validate();

    std::vector<LabeledMel> out;
    out.reserve(static_cast<std::size_t>(n_pairs) * 2);
    for (int i = 0; i < n_pairs; ++i) {
        const RenderedPair pair = render_pair(i, cfg);
        out.push_back({melspectrogram(fit_to_duration(pair.pedal, 2.0), dsp_cfg), 1});
        out.push_back({melspectrogram(fit_to_duration(pair.no_pedal, 2.0), dsp_cfg), 0});
    }
    return out;
}

ToyPassage generate_passage(const std::string& id, double duration_s, const SynthConfig& cfg,
                            std::uint64_t salt) {
    if (duration_s < 2.0) throw DataError("generate_passage: duration must be >= 2 s");
    Rng rng(Rng::mix(cfg.seed, 0x70617373ULL + salt));

    midi::MidiPerformance score;
    score.cc64.push_back({0.0, 0});
    double t = rng.uniform(0.3, 0.9);
    bool pedal_on_first = rng.bernoulli(0.6);
    bool state_on = pedal_on_first;
    if (pedal_on_first) score.cc64.push_back({0.05, 127});
    while (t < duration_s - 0.4) {
        const double span = state_on ? rng.uniform(0.8, 2.5) : rng.uniform(0.5, 1.8);
        const double end = std::min(t + span, duration_s - 0.2);
        score.cc64.push_back({end, state_on ? 0 : 127});
        t = end;
        state_on = !state_on;
    }
    if (state_on) score.cc64.push_back({duration_s - 0.1, 0});

    // Fill the passage with notes regardless of pedal state.
    double nt = 0.1;
    while (nt < duration_s - 0.35) {
        const int n_chord = rng.bernoulli(0.3) ? rng.uniform_int(2, 3) : 1;
        for (int k = 0; k < n_chord; ++k) {
            const int pitch = rng.uniform_int(36, 84);
            const int velocity = rng.uniform_int(60, 110);
            const double dur = rng.uniform(0.25, 1.0);
            score.notes.push_back({nt, std::min(nt + dur, duration_s), pitch, velocity});
        }
        nt += rng.uniform(0.2, 0.7);
    }
    std::stable_sort(score.cc64.begin(), score.cc64.end(),
                     [](const midi::CcEvent& a, const midi::CcEvent& b) {
                         return a.time_s < b.time_s;
                     });
    score.end_time_s = duration_s;

    SynthConfig pass_cfg = cfg;
    pass_cfg.seed = Rng::mix(cfg.seed, 0x617564696fULL + salt);

    ToyPassage out;
    out.id = id;
    out.score = score;
    out.truth = midi::pedal_segments(score);
    out.audio = fit_to_duration(render(score, true, pass_cfg), duration_s);
    return out;
}

}  // namespace pedalnet::synth
