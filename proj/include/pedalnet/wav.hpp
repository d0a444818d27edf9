#pragma once

#include <string>

#include "pedalnet/signal.hpp"

namespace pedalnet::wav {

// Reads PCM 16/24-bit or IEEE float 32-bit WAV. Multi-channel audio is
// downmixed to mono by averaging; if target_rate > 0 and differs from the
// file rate, the result is resampled by linear interpolation.
Signal read(const std::string& path, double target_rate = 44100.0);

// 16-bit PCM writer.
void write(const std::string& path, const Signal& s);

Signal resample_linear(const Signal& s, double target_rate);

}  // namespace pedalnet::wav
