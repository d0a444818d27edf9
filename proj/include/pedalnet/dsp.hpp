#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "pedalnet/signal.hpp"

namespace pedalnet::dsp {

struct RealMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;  // row-major

    RealMatrix() = default;
    RealMatrix(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
};

struct DspConfig {
    int fft_size = 1024;    // power of two
    int hop = 441;          // samples (10 ms at 44.1 kHz)
    int n_mels = 128;
    double fmin = 0.0;      // Hz
    double fmax = 0.0;      // Hz; 0 means sample_rate / 2
    double floor_db = -80.0;

    double resolved_fmax(double sample_rate) const {
        return fmax > 0.0 ? fmax : sample_rate / 2.0;
    }
    void validate(double sample_rate) const;  // throws ConfigError
};

struct MelSpectrogram {
    std::vector<double> values;  // row-major [n_mels][n_frames], dB, max-referenced
    int n_mels = 0;
    int n_frames = 0;
    double frame_hop_s = 0.010;

    double at(int m, int t) const { return values[static_cast<std::size_t>(m) * n_frames + t]; }
};

// HTK-style mel scale.
inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// In-place radix-2 FFT; size must be a power of two.
void fft(std::vector<std::complex<double>>& a, bool inverse = false);

// Magnitude spectrogram [fft_size/2+1 x n_frames] with a periodic Hann
// window and centered reflect padding; n_frames = 1 + floor(len / hop).
RealMatrix stft_magnitude(const Signal& signal, const DspConfig& cfg);

// Triangular mel filters [n_mels x fft_size/2+1] with peaks at 1.
RealMatrix mel_filterbank(const DspConfig& cfg, double sample_rate);

// Power melspectrogram in dB, referenced to the per-matrix maximum and
// clipped at cfg.floor_db.
MelSpectrogram melspectrogram(const Signal& signal, const DspConfig& cfg);

}  // namespace pedalnet::dsp
