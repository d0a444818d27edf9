#pragma once

#include <vector>

namespace pedalnet {

// Mono sample buffer; the unit of all audio I/O in the pipeline.
struct Signal {
    std::vector<double> samples;  // amplitudes in [-1, 1]
    double sample_rate = 44100.0;

    double duration_s() const {
        return static_cast<double>(samples.size()) / sample_rate;
    }
};

// Throws DataError on non-positive rate or non-finite samples.
void validate(const Signal& s);

// Exact-length reshaping: shorter inputs are cyclically repeated then cut,
// longer inputs keep their first round(target_s * rate) samples.
Signal fit_to_duration(const Signal& s, double target_s);

// [begin_s, end_s) slice, clamped to the signal bounds.
Signal slice(const Signal& s, double begin_s, double end_s);

}  // namespace pedalnet
