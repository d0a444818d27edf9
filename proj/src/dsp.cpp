#include "pedalnet/dsp.hpp"

#include <algorithm>
#include <cmath>

#include "pedalnet/errors.hpp"

namespace pedalnet::dsp {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Reflection without edge repetition (librosa-style), valid for any
// index once mapped into the period 2*(len-1).
std::size_t reflect_index(long i, std::size_t len) {
    if (len == 1) return 0;
    const long period = 2 * (static_cast<long>(len) - 1);
    long m = i % period;
    if (m < 0) m += period;
    if (m >= static_cast<long>(len)) m = period - m;
    return static_cast<std::size_t>(m);
}

}  // namespace

void DspConfig::validate(double sample_rate) const {
    if (!is_pow2(fft_size)) throw ConfigError("fft_size must be a power of two");
    if (hop <= 0 || hop > fft_size) throw ConfigError("hop must satisfy 0 < hop <= fft_size");
    if (n_mels < 1) throw ConfigError("n_mels must be >= 1");
    if (n_mels > fft_size / 2)
        throw ConfigError("n_mels too large for fft_size: a filter would have zero support");
    const double fmax_r = resolved_fmax(sample_rate);
    if (!(fmin >= 0.0 && fmin < fmax_r && fmax_r <= sample_rate / 2.0))
        throw ConfigError("need 0 <= fmin < fmax <= sample_rate/2");
}

void fft(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    if (!is_pow2(static_cast<int>(n))) throw ConfigError("fft size must be a power of two");
    // bit reversal
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                std::complex<double> u = a[i + k];
                std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse)
        for (auto& x : a) x /= static_cast<double>(n);
}

RealMatrix stft_magnitude(const Signal& signal, const DspConfig& cfg) {
    cfg.validate(signal.sample_rate);
    if (signal.samples.empty()) throw DataError("stft_magnitude: empty signal");

    const int n_bins = cfg.fft_size / 2 + 1;
    const std::size_t len = signal.samples.size();
    const int n_frames = 1 + static_cast<int>(len / static_cast<std::size_t>(cfg.hop));
    const int pad = cfg.fft_size / 2;

    // periodic Hann
    std::vector<double> window(cfg.fft_size);
    for (int i = 0; i < cfg.fft_size; ++i)
        window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / cfg.fft_size);

    RealMatrix out(n_bins, n_frames);
    std::vector<std::complex<double>> buf(cfg.fft_size);
    for (int t = 0; t < n_frames; ++t) {
        const long start = static_cast<long>(t) * cfg.hop - pad;
        for (int i = 0; i < cfg.fft_size; ++i) {
            const long src = start + i;
            double x = (src >= 0 && src < static_cast<long>(len))
                           ? signal.samples[static_cast<std::size_t>(src)]
                           : signal.samples[reflect_index(src, len)];
            buf[i] = x * window[i];
        }
        fft(buf);
        for (int k = 0; k < n_bins; ++k) out.at(k, t) = std::abs(buf[k]);
    }
    return out;
}

RealMatrix mel_filterbank(const DspConfig& cfg, double sample_rate) {
    cfg.validate(sample_rate);
    const int n_bins = cfg.fft_size / 2 + 1;
    const double fmax = cfg.resolved_fmax(sample_rate);
    const double mel_lo = hz_to_mel(cfg.fmin);
    const double mel_hi = hz_to_mel(fmax);

    std::vector<double> hz_pts(static_cast<std::size_t>(cfg.n_mels) + 2);
    for (int i = 0; i < cfg.n_mels + 2; ++i)
        hz_pts[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));

    RealMatrix fb(cfg.n_mels, n_bins);
    const double bin_hz = sample_rate / cfg.fft_size;
    for (int m = 0; m < cfg.n_mels; ++m) {
        const double left = hz_pts[m], center = hz_pts[m + 1], right = hz_pts[m + 2];
        double row_sum = 0.0;
        for (int k = 0; k < n_bins; ++k) {
            const double f = k * bin_hz;
            const double up = (f - left) / (center - left);
            const double down = (right - f) / (right - center);
            const double w = std::max(0.0, std::min(up, down));
            fb.at(m, k) = w;
            row_sum += w;
        }
        if (row_sum == 0.0) {
            // A very narrow triangle can fall between FFT bins (this happens
            // for the bottom band at 128 mels / 1024-point FFT / 44.1 kHz).
            // Give the filter its nearest bin so every band keeps support.
            int k = static_cast<int>(std::lround(center / bin_hz));
            fb.at(m, std::clamp(k, 0, n_bins - 1)) = 1.0;
        }
    }
    return fb;
}

MelSpectrogram melspectrogram(const Signal& signal, const DspConfig& cfg) {
    const RealMatrix mag = stft_magnitude(signal, cfg);
    const RealMatrix fb = mel_filterbank(cfg, signal.sample_rate);

    MelSpectrogram mel;
    mel.n_mels = cfg.n_mels;
    mel.n_frames = mag.cols;
    mel.frame_hop_s = cfg.hop / signal.sample_rate;
    mel.values.assign(static_cast<std::size_t>(mel.n_mels) * mel.n_frames, 0.0);

    // Filter supports are contiguous; restrict each row to its nonzero span.
    std::vector<int> k_begin(mel.n_mels), k_end(mel.n_mels);
    for (int m = 0; m < mel.n_mels; ++m) {
        int b = 0, e = mag.rows;
        while (b < mag.rows && fb.at(m, b) == 0.0) ++b;
        while (e > b && fb.at(m, e - 1) == 0.0) --e;
        k_begin[m] = b;
        k_end[m] = e;
    }

    // power = filterbank . |STFT|^2
    double max_power = 0.0;
    for (int m = 0; m < mel.n_mels; ++m) {
        for (int t = 0; t < mel.n_frames; ++t) {
            double acc = 0.0;
            for (int k = k_begin[m]; k < k_end[m]; ++k) {
                const double a = mag.at(k, t);
                acc += fb.at(m, k) * a * a;
            }
            mel.values[static_cast<std::size_t>(m) * mel.n_frames + t] = acc;
            max_power = std::max(max_power, acc);
        }
    }
    if (max_power <= 0.0) {
        std::fill(mel.values.begin(), mel.values.end(), cfg.floor_db);
        return mel;
    }
    for (double& p : mel.values)
        p = std::max(cfg.floor_db, 10.0 * std::log10(std::max(p, 1e-30) / max_power));
    return mel;
}

}  // namespace pedalnet::dsp
