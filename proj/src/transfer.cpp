#include "pedalnet/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pedalnet/errors.hpp"
#include "pedalnet/textio.hpp"

namespace pedalnet::transfer {

namespace {

constexpr int kInferChunk = 64;

}  // namespace

std::vector<double> extract_features(const nn::Network<float>& net,
                                     const dsp::MelSpectrogram& mel) {
    const nn::InferResult<float> r =
        nn::infer(net, nn::make_batch<float>({&mel}), /*want_block_means=*/true);
    return std::vector<double>(r.block_means.begin(), r.block_means.end());
}

FrameFeatures extract_frame_features(const nn::Network<float>& net, const Signal& signal,
                                     const std::string& recording_id, double window_s,
                                     double hop_s, const dsp::DspConfig& dcfg) {
    validate(signal);
    dcfg.validate(signal.sample_rate);
    if (window_s <= 0.0 || hop_s <= 0.0)
        throw ConfigError("extract_frame_features: window and hop must be positive");
    const std::size_t win = static_cast<std::size_t>(std::llround(window_s * signal.sample_rate));
    const std::size_t hop = static_cast<std::size_t>(std::llround(hop_s * signal.sample_rate));
    if (win == 0 || hop == 0)
        throw ConfigError("extract_frame_features: window and hop must span samples");
    if (signal.samples.size() < win)
        throw DataError("extract_frame_features: signal shorter than the analysis window (" +
                        std::to_string(signal.samples.size()) + " < " + std::to_string(win) +
                        " samples)");

    FrameFeatures out;
    out.recording_id = recording_id;
    std::vector<dsp::MelSpectrogram> mels;
    for (std::size_t start = 0; start + win <= signal.samples.size(); start += hop) {
        Signal window;
        window.sample_rate = signal.sample_rate;
        window.samples.assign(signal.samples.begin() + static_cast<std::ptrdiff_t>(start),
                              signal.samples.begin() + static_cast<std::ptrdiff_t>(start + win));
        mels.push_back(dsp::melspectrogram(fit_to_duration(window, 2.0), dcfg));
        out.frame_times.push_back((static_cast<double>(start) + 0.5 * static_cast<double>(win)) /
                                  signal.sample_rate);
    }

    const int c = net.config.channels();
    const int l = net.config.n_layers;
    for (std::size_t begin = 0; begin < mels.size(); begin += kInferChunk) {
        const std::size_t end = std::min(mels.size(), begin + kInferChunk);
        std::vector<const dsp::MelSpectrogram*> chunk;
        for (std::size_t i = begin; i < end; ++i) chunk.push_back(&mels[i]);
        const nn::InferResult<float> r =
            nn::infer(net, nn::make_batch<float>(chunk), /*want_block_means=*/true);
        for (std::size_t i = 0; i < chunk.size(); ++i) {
            const std::size_t fbase = i * static_cast<std::size_t>(c) * l;
            out.features.emplace_back(r.block_means.begin() + static_cast<std::ptrdiff_t>(fbase),
                                      r.block_means.begin() +
                                          static_cast<std::ptrdiff_t>(fbase + c * l));
            const std::size_t gbase = i * static_cast<std::size_t>(c);
            out.gap.emplace_back(r.gap.begin() + static_cast<std::ptrdiff_t>(gbase),
                                 r.gap.begin() + static_cast<std::ptrdiff_t>(gbase + c));
            out.direct_p1.push_back(r.probs[i * 2 + 1]);
        }
    }
    return out;
}

std::string features_csv(const FrameFeatures& f, const std::vector<int>* labels) {
    if (labels && labels->size() != f.frame_times.size())
        throw DataError("features_csv: label count does not match frame count");
    std::ostringstream out;
    out << "recording_id,frame_time_s";
    const std::size_t dim = f.features.empty() ? 0 : f.features.front().size();
    for (std::size_t i = 0; i < dim; ++i) out << ",f" << i;
    if (labels) out << ",label";
    out << '\n';
    for (std::size_t i = 0; i < f.frame_times.size(); ++i) {
        out << f.recording_id << ',' << textio::fmt_double(f.frame_times[i]);
        for (double v : f.features[i]) out << ',' << textio::fmt_double(v);
        if (labels) out << ',' << (*labels)[i];
        out << '\n';
    }
    return out.str();
}

ParsedFeatures parse_features_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw DataError("features csv: empty file");
    const auto header = textio::split(line, ',');
    if (header.size() < 3 || header[0] != "recording_id" || header[1] != "frame_time_s")
        throw DataError("features csv: unexpected header: " + line);
    const bool has_label = header.back() == "label";
    const std::size_t dim = header.size() - 2 - (has_label ? 1 : 0);
    for (std::size_t i = 0; i < dim; ++i)
        if (header[2 + i] != "f" + std::to_string(i))
            throw DataError("features csv: unexpected feature column: " + header[2 + i]);

    ParsedFeatures out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = textio::split(line, ',');
        if (cells.size() != header.size())
            throw DataError("features csv: line " + std::to_string(line_no) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(header.size()));
        out.recording_ids.push_back(cells[0]);
        out.frame_times.push_back(textio::parse_double(cells[1]));
        std::vector<double> row(dim);
        for (std::size_t i = 0; i < dim; ++i) row[i] = textio::parse_double(cells[2 + i]);
        out.features.push_back(std::move(row));
        if (has_label) {
            const long v = textio::parse_long(cells.back());
            if (v != 0 && v != 1)
                throw DataError("features csv: line " + std::to_string(line_no) +
                                ": label must be 0 or 1");
            out.labels.push_back(static_cast<int>(v));
        }
    }
    return out;
}

}  // namespace pedalnet::transfer
