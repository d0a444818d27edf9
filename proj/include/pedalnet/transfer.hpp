#pragma once

#include <string>
#include <vector>

#include "pedalnet/dsp.hpp"
#include "pedalnet/network.hpp"
#include "pedalnet/signal.hpp"

namespace pedalnet::transfer {

// Average-pooled activations of every conv block (post-ReLU, post-max-pool),
// concatenated in block order: channels x n_layers values.
std::vector<double> extract_features(const nn::Network<float>& net,
                                     const dsp::MelSpectrogram& mel);

// One analysis window per 0.1 s hop. Everything the downstream methods need
// is extracted in a single pass: transfer features for the SVM, the pooled
// head input for fine-tuning, and the softmax pedal probability for direct
// detection.
struct FrameFeatures {
    std::string recording_id;
    std::vector<double> frame_times;             // window centers, t + window/2
    std::vector<std::vector<double>> features;   // [frame][channels * n_layers]
    std::vector<std::vector<float>> gap;         // [frame][channels]
    std::vector<double> direct_p1;               // pedal-class probability
};

FrameFeatures extract_frame_features(const nn::Network<float>& net, const Signal& signal,
                                     const std::string& recording_id, double window_s = 0.3,
                                     double hop_s = 0.1, const dsp::DspConfig& dcfg = {});

// CSV dump: recording_id,frame_time_s,f0..fN[,label]. Labels come from ground
// truth segments when provided (frame center inside a segment = 1).
std::string features_csv(const FrameFeatures& f, const std::vector<int>* labels = nullptr);

struct ParsedFeatures {
    std::vector<std::string> recording_ids;
    std::vector<double> frame_times;
    std::vector<std::vector<double>> features;
    std::vector<int> labels;  // empty when the file has no label column
};

ParsedFeatures parse_features_csv(const std::string& text);

}  // namespace pedalnet::transfer
