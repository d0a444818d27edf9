#include "pedalnet/signal.hpp"

#include <algorithm>
#include <cmath>

#include "pedalnet/errors.hpp"

namespace pedalnet {

void validate(const Signal& s) {
    if (s.sample_rate <= 0.0) throw DataError("sample rate must be positive");
    for (double x : s.samples)
        if (!std::isfinite(x)) throw DataError("signal contains non-finite samples");
}

Signal fit_to_duration(const Signal& s, double target_s) {
    if (s.samples.empty()) throw DataError("fit_to_duration: empty signal");
    if (target_s <= 0.0) throw DataError("fit_to_duration: target must be positive");

    const std::size_t target_len =
        static_cast<std::size_t>(std::llround(target_s * s.sample_rate));
    Signal out;
    out.sample_rate = s.sample_rate;
    if (s.samples.size() == target_len) {
        out.samples = s.samples;
        return out;
    }
    out.samples.resize(target_len);
    if (s.samples.size() > target_len) {
        std::copy_n(s.samples.begin(), target_len, out.samples.begin());
    } else {
        for (std::size_t i = 0; i < target_len; ++i)
            out.samples[i] = s.samples[i % s.samples.size()];
    }
    return out;
}

Signal slice(const Signal& s, double begin_s, double end_s) {
    auto clamp_idx = [&](double t) {
        long i = std::lround(t * s.sample_rate);
        return static_cast<std::size_t>(std::clamp<long>(i, 0, static_cast<long>(s.samples.size())));
    };
    std::size_t b = clamp_idx(begin_s);
    std::size_t e = clamp_idx(end_s);
    Signal out;
    out.sample_rate = s.sample_rate;
    if (e > b) out.samples.assign(s.samples.begin() + b, s.samples.begin() + e);
    return out;
}

}  // namespace pedalnet
