#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pedalnet/dsp.hpp"
#include "pedalnet/metrics.hpp"
#include "pedalnet/midi.hpp"
#include "pedalnet/network.hpp"
#include "pedalnet/signal.hpp"
#include "pedalnet/svm.hpp"
#include "pedalnet/train.hpp"
#include "pedalnet/transfer.hpp"

namespace pedalnet::pipeline {

enum class Method { pretrained_direct, finetuned_head, svm_transfer };

// Accepts the CLI tokens (direct, finetune, svm) and the full names.
Method method_from_string(const std::string& name);
std::string method_name(Method m);

struct DetectOptions {
    double window_s = 0.3;
    double hop_s = 0.1;
    int median_filter = 0;  // odd length >= 3 smooths the label track; 0/1 = off
    dsp::DspConfig dsp;
};

struct DetectionTimeline {
    std::string recording_id;
    std::vector<double> times;
    std::vector<int> labels;     // 1 = pedal on
    std::vector<double> scores;  // probability (direct/finetune) or decision value (svm)
};

DetectionTimeline detect(const Signal& signal, const nn::Network<float>& net,
                         const svm::SvmModel* model, Method method,
                         const std::string& recording_id = "", const DetectOptions& opt = {});

// Same on precomputed frame features. pretrained_direct reads the stored
// probabilities, so `net` only matters for finetuned_head (pass the network
// holding the retrained head there).
DetectionTimeline detect_from_features(const transfer::FrameFeatures& ff,
                                       const nn::Network<float>& net, const svm::SvmModel* model,
                                       Method method, int median_filter = 0);

struct PassageData {
    std::string id;
    Signal audio;
    std::vector<midi::PedalSegment> truth;
};

struct MethodReport {
    Method method = Method::pretrained_direct;
    std::vector<metrics::Prf> per_passage;
    metrics::Prf average;  // arithmetic mean of the per-passage columns
    double micro_f1 = 0.0;
};

struct FoldParams {
    double gamma = 0.0;
    double C = 0.0;
};

struct CvReport {
    std::vector<std::string> passage_ids;
    std::vector<long> on_frames;
    std::vector<long> off_frames;
    MethodReport direct;
    MethodReport finetune;
    MethodReport svm;
    std::vector<FoldParams> fold_params;  // grid choice per fold
};

struct CvOptions {
    svm::GridSpec grid;  // empty lists fall back to GridSpec::standard(dim)
    double inner_val_fraction = 0.2;
    nn::TrainConfig head;  // per-fold seeds are derived from `seed`, not head.seed
    std::uint64_t seed = 0;
    DetectOptions detect;
};

// Leave-one-group-out cross-validation grouped by passage. Each fold trains
// the SVM (with inner grid search) and the retrained head on the other
// passages only, then detects on the held-out one.
CvReport logo_cv(const std::vector<PassageData>& passages, const nn::Network<float>& net,
                 const CvOptions& opt = {});

std::string report_csv(const CvReport& report);

// CSV columns time_s,predicted[,truth],score; doubles round-trip exactly.
std::string timeline_csv(const DetectionTimeline& timeline,
                         const std::vector<int>* truth = nullptr);
DetectionTimeline parse_timeline_csv(const std::string& text, std::vector<int>* truth = nullptr);

// Strip chart with the ground-truth lane above the detection lane; frames
// with label 1 become highlighted spans. Without truth only one lane is drawn.
std::string timeline_svg(const DetectionTimeline& timeline,
                         const std::vector<int>* truth = nullptr);

}  // namespace pedalnet::pipeline
