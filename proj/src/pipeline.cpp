#include "pedalnet/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <set>
#include <sstream>

#include "pedalnet/errors.hpp"
#include "pedalnet/rng.hpp"
#include "pedalnet/textio.hpp"

namespace pedalnet::pipeline {

namespace {

constexpr std::uint64_t kSaltFold = 0x666f6c64;  // "fold"
constexpr std::uint64_t kSaltHead = 0x68656164;  // "head"

std::vector<int> median_filter_labels(const std::vector<int>& labels, int length) {
    if (length == 0 || length == 1) return labels;
    if (length < 0 || length % 2 == 0)
        throw ConfigError("median filter length must be odd and positive");
    const int n = static_cast<int>(labels.size());
    const int half = length / 2;
    std::vector<int> out(labels.size());
    for (int i = 0; i < n; ++i) {
        // replicate the border so every window has `length` samples
        int ones = 0;
        for (int j = i - half; j <= i + half; ++j)
            ones += labels[static_cast<std::size_t>(std::clamp(j, 0, n - 1))];
        out[static_cast<std::size_t>(i)] = ones > half ? 1 : 0;
    }
    return out;
}

// Pedal probability from the (possibly retrained) dense head, same float
// path as training-time evaluation.
std::vector<double> head_p1(const nn::Network<float>& net,
                            const std::vector<std::vector<float>>& gap) {
    const int c = net.config.channels();
    const int n = static_cast<int>(gap.size());
    std::vector<float> x(static_cast<std::size_t>(n) * static_cast<std::size_t>(c));
    for (int i = 0; i < n; ++i) {
        if (static_cast<int>(gap[static_cast<std::size_t>(i)].size()) != c)
            throw DataError("detect: pooled feature width does not match the network");
        std::copy(gap[static_cast<std::size_t>(i)].begin(), gap[static_cast<std::size_t>(i)].end(),
                  x.begin() + static_cast<std::size_t>(i) * static_cast<std::size_t>(c));
    }
    std::vector<float> probs = net.dense.forward(x, n);
    nn::softmax_rows(probs, n, 2);
    std::vector<double> p1(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        p1[static_cast<std::size_t>(i)] = probs[static_cast<std::size_t>(i) * 2 + 1];
    return p1;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        if (ch == '&') out += "&amp;";
        else if (ch == '<') out += "&lt;";
        else if (ch == '>') out += "&gt;";
        else out += ch;
    }
    return out;
}

}  // namespace

Method method_from_string(const std::string& name) {
    if (name == "direct" || name == "pretrained_direct") return Method::pretrained_direct;
    if (name == "finetune" || name == "finetuned_head") return Method::finetuned_head;
    if (name == "svm" || name == "svm_transfer") return Method::svm_transfer;
    throw ConfigError("unknown method: " + name + " (expected direct, finetune or svm)");
}

std::string method_name(Method m) {
    switch (m) {
        case Method::pretrained_direct: return "pretrained_direct";
        case Method::finetuned_head: return "finetuned_head";
        case Method::svm_transfer: return "svm_transfer";
    }
    throw ConfigError("unknown method value");
}

DetectionTimeline detect_from_features(const transfer::FrameFeatures& ff,
                                       const nn::Network<float>& net, const svm::SvmModel* model,
                                       Method method, int median_filter) {
    if (ff.frame_times.empty()) throw DataError("detect: no frames in input");
    DetectionTimeline tl;
    tl.recording_id = ff.recording_id;
    tl.times = ff.frame_times;
    tl.labels.resize(ff.frame_times.size());
    tl.scores.resize(ff.frame_times.size());

    if (method == Method::svm_transfer) {
        if (model == nullptr) throw ModelError("detect: svm method requested without an SVM model");
        for (std::size_t i = 0; i < ff.features.size(); ++i) {
            const svm::Prediction p = svm::predict(*model, ff.features[i]);
            tl.labels[i] = p.label > 0 ? 1 : 0;
            tl.scores[i] = p.decision;
        }
    } else {
        const std::vector<double> p1 =
            method == Method::pretrained_direct ? ff.direct_p1 : head_p1(net, ff.gap);
        if (p1.size() != ff.frame_times.size())
            throw DataError("detect: probability track does not match frame count");
        for (std::size_t i = 0; i < p1.size(); ++i) {
            tl.labels[i] = p1[i] >= 0.5 ? 1 : 0;
            tl.scores[i] = p1[i];
        }
    }
    tl.labels = median_filter_labels(tl.labels, median_filter);
    return tl;
}

DetectionTimeline detect(const Signal& signal, const nn::Network<float>& net,
                         const svm::SvmModel* model, Method method,
                         const std::string& recording_id, const DetectOptions& opt) {
    const transfer::FrameFeatures ff = transfer::extract_frame_features(
        net, signal, recording_id, opt.window_s, opt.hop_s, opt.dsp);
    return detect_from_features(ff, net, model, method, opt.median_filter);
}

namespace {

struct FoldInput {
    const std::vector<transfer::FrameFeatures>* feats = nullptr;
    const std::vector<std::vector<int>>* truths = nullptr;
    const nn::Network<float>* net = nullptr;
    svm::GridSpec grid;
    double inner_val_fraction = 0.2;
    nn::TrainConfig head;
    int median_filter = 0;
    std::uint64_t seed = 0;
};

struct FoldOutcome {
    metrics::Prf direct;
    metrics::Prf finetune;
    metrics::Prf svm_row;
    metrics::Fold direct_fold;
    metrics::Fold finetune_fold;
    metrics::Fold svm_fold;
    FoldParams params;
};

FoldOutcome run_fold(const FoldInput& in, std::size_t hold_out) {
    const std::vector<transfer::FrameFeatures>& feats = *in.feats;
    const std::vector<std::vector<int>>& truths = *in.truths;
    const std::string& held_id = feats[hold_out].recording_id;

    std::vector<std::vector<double>> train_x;
    std::vector<int> train_y_pm;  // +1/-1 for the SVM
    std::vector<std::vector<float>> train_gap;
    std::vector<int> train_y01;
    for (std::size_t j = 0; j < feats.size(); ++j) {
        if (j == hold_out) continue;
        // provenance guard: no frame of the held-out passage may be trained on
        if (feats[j].recording_id == held_id)
            throw DataError("logo_cv: held-out passage appears in a training fold");
        for (std::size_t i = 0; i < feats[j].features.size(); ++i) {
            train_x.push_back(feats[j].features[i]);
            train_y_pm.push_back(truths[j][i] == 1 ? 1 : -1);
            train_gap.push_back(feats[j].gap[i]);
            train_y01.push_back(truths[j][i]);
        }
    }

    const std::uint64_t fold_seed =
        Rng::mix(Rng::mix(in.seed, kSaltFold), static_cast<std::uint64_t>(hold_out));

    const svm::GridResult grid =
        svm::grid_search(train_x, train_y_pm, in.grid, in.inner_val_fraction, fold_seed);
    const svm::SvmModel model = svm::train_svm(train_x, train_y_pm, grid.best_C, grid.best_gamma);

    nn::TrainConfig head_cfg = in.head;
    head_cfg.seed = Rng::mix(fold_seed, kSaltHead);
    const nn::TrainResult head = nn::retrain_head_gap(*in.net, head_cfg, train_gap, train_y01);

    FoldOutcome out;
    out.params.gamma = grid.best_gamma;
    out.params.C = grid.best_C;

    const DetectionTimeline direct_tl = detect_from_features(
        feats[hold_out], *in.net, nullptr, Method::pretrained_direct, in.median_filter);
    const DetectionTimeline fine_tl = detect_from_features(
        feats[hold_out], head.network, nullptr, Method::finetuned_head, in.median_filter);
    const DetectionTimeline svm_tl = detect_from_features(
        feats[hold_out], *in.net, &model, Method::svm_transfer, in.median_filter);

    const std::vector<int>& truth = truths[hold_out];
    out.direct = metrics::prf(direct_tl.labels, truth);
    out.finetune = metrics::prf(fine_tl.labels, truth);
    out.svm_row = metrics::prf(svm_tl.labels, truth);
    out.direct_fold = {direct_tl.labels, truth};
    out.finetune_fold = {fine_tl.labels, truth};
    out.svm_fold = {svm_tl.labels, truth};
    return out;
}

metrics::Prf average_rows(const std::vector<metrics::Prf>& rows) {
    metrics::Prf avg;
    for (const metrics::Prf& r : rows) {
        avg.precision += r.precision;
        avg.recall += r.recall;
        avg.f1 += r.f1;
        avg.degenerate = avg.degenerate || r.degenerate;
    }
    const double n = static_cast<double>(rows.size());
    avg.precision /= n;
    avg.recall /= n;
    avg.f1 /= n;
    return avg;
}

}  // namespace

CvReport logo_cv(const std::vector<PassageData>& passages, const nn::Network<float>& net,
                 const CvOptions& opt) {
    if (passages.size() < 2) throw DataError("logo_cv: need at least 2 passages");
    {
        std::set<std::string> ids;
        for (const PassageData& p : passages)
            if (!ids.insert(p.id).second) throw DataError("logo_cv: duplicate passage id " + p.id);
    }
    opt.head.validate();

    std::vector<transfer::FrameFeatures> feats;
    std::vector<std::vector<int>> truths;
    feats.reserve(passages.size());
    for (const PassageData& p : passages) {
        feats.push_back(transfer::extract_frame_features(net, p.audio, p.id, opt.detect.window_s,
                                                         opt.detect.hop_s, opt.detect.dsp));
        truths.push_back(metrics::frame_ground_truth(p.truth, feats.back().frame_times));
    }

    FoldInput in;
    in.feats = &feats;
    in.truths = &truths;
    in.net = &net;
    in.grid = opt.grid;
    if (in.grid.gammas.empty() || in.grid.Cs.empty())
        in.grid = svm::GridSpec::standard(
            static_cast<std::size_t>(net.config.channels() * net.config.n_layers));
    in.inner_val_fraction = opt.inner_val_fraction;
    in.head = opt.head;
    in.median_filter = opt.detect.median_filter;
    in.seed = opt.seed;

    // folds only read shared immutable state, so they can run concurrently;
    // results are joined in fold order
    std::vector<std::future<FoldOutcome>> futures;
    futures.reserve(passages.size());
    for (std::size_t k = 0; k < passages.size(); ++k)
        futures.push_back(
            std::async(std::launch::async, [&in, k]() { return run_fold(in, k); }));

    CvReport report;
    report.direct.method = Method::pretrained_direct;
    report.finetune.method = Method::finetuned_head;
    report.svm.method = Method::svm_transfer;
    std::vector<metrics::Fold> direct_folds;
    std::vector<metrics::Fold> finetune_folds;
    std::vector<metrics::Fold> svm_folds;
    for (std::size_t k = 0; k < passages.size(); ++k) {
        FoldOutcome out = futures[k].get();
        report.passage_ids.push_back(passages[k].id);
        long on = 0;
        for (int t : truths[k]) on += t;
        report.on_frames.push_back(on);
        report.off_frames.push_back(static_cast<long>(truths[k].size()) - on);
        report.direct.per_passage.push_back(out.direct);
        report.finetune.per_passage.push_back(out.finetune);
        report.svm.per_passage.push_back(out.svm_row);
        report.fold_params.push_back(out.params);
        direct_folds.push_back(std::move(out.direct_fold));
        finetune_folds.push_back(std::move(out.finetune_fold));
        svm_folds.push_back(std::move(out.svm_fold));
    }
    report.direct.average = average_rows(report.direct.per_passage);
    report.finetune.average = average_rows(report.finetune.per_passage);
    report.svm.average = average_rows(report.svm.per_passage);
    report.direct.micro_f1 = metrics::micro_f1(direct_folds);
    report.finetune.micro_f1 = metrics::micro_f1(finetune_folds);
    report.svm.micro_f1 = metrics::micro_f1(svm_folds);
    return report;
}

std::string report_csv(const CvReport& report) {
    const std::size_t n = report.passage_ids.size();
    if (report.on_frames.size() != n || report.off_frames.size() != n ||
        report.direct.per_passage.size() != n || report.finetune.per_passage.size() != n ||
        report.svm.per_passage.size() != n)
        throw DataError("report_csv: inconsistent report");

    std::ostringstream out;
    out << "# leave-one-group-out cross-validation, one fold per passage\n";
    out << "passage,on,off"
           ",direct_p1,direct_r1,direct_f1"
           ",finetune_p1,finetune_r1,finetune_f1"
           ",svm_p1,svm_r1,svm_f1\n";
    auto cells = [&out](const metrics::Prf& p) {
        out << ',' << textio::fmt_fixed(p.precision, 4) << ',' << textio::fmt_fixed(p.recall, 4)
            << ',' << textio::fmt_fixed(p.f1, 4);
    };
    double on_sum = 0.0;
    double off_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out << report.passage_ids[i] << ',' << report.on_frames[i] << ',' << report.off_frames[i];
        cells(report.direct.per_passage[i]);
        cells(report.finetune.per_passage[i]);
        cells(report.svm.per_passage[i]);
        out << '\n';
        on_sum += static_cast<double>(report.on_frames[i]);
        off_sum += static_cast<double>(report.off_frames[i]);
    }
    out << "Average," << std::llround(on_sum / static_cast<double>(n)) << ','
        << std::llround(off_sum / static_cast<double>(n));
    cells(report.direct.average);
    cells(report.finetune.average);
    cells(report.svm.average);
    out << '\n';
    for (const MethodReport* m : {&report.direct, &report.finetune, &report.svm})
        out << "# micro_f1," << method_name(m->method) << ',' << textio::fmt_double(m->micro_f1)
            << '\n';
    for (std::size_t i = 0; i < report.fold_params.size(); ++i)
        out << "# fold," << report.passage_ids[i] << ",gamma,"
            << textio::fmt_double(report.fold_params[i].gamma) << ",C,"
            << textio::fmt_double(report.fold_params[i].C) << '\n';
    for (const MethodReport* m : {&report.direct, &report.finetune, &report.svm})
        for (std::size_t i = 0; i < m->per_passage.size(); ++i)
            if (m->per_passage[i].degenerate)
                out << "# warning," << report.passage_ids[i] << ',' << method_name(m->method)
                    << ",degenerate_metrics\n";
    return out.str();
}

std::string timeline_csv(const DetectionTimeline& timeline, const std::vector<int>* truth) {
    const std::size_t n = timeline.times.size();
    if (timeline.labels.size() != n || timeline.scores.size() != n)
        throw DataError("timeline_csv: inconsistent timeline");
    if (truth != nullptr && truth->size() != n)
        throw DataError("timeline_csv: truth length does not match frame count");
    std::ostringstream out;
    out << (truth != nullptr ? "time_s,predicted,truth,score\n" : "time_s,predicted,score\n");
    for (std::size_t i = 0; i < n; ++i) {
        out << textio::fmt_double(timeline.times[i]) << ',' << timeline.labels[i];
        if (truth != nullptr) out << ',' << (*truth)[i];
        out << ',' << textio::fmt_double(timeline.scores[i]) << '\n';
    }
    return out.str();
}

DetectionTimeline parse_timeline_csv(const std::string& text, std::vector<int>* truth) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw DataError("timeline csv: empty input");
    bool has_truth = false;
    if (line == "time_s,predicted,truth,score") has_truth = true;
    else if (line != "time_s,predicted,score")
        throw DataError("timeline csv: unexpected header: " + line);
    if (truth != nullptr) truth->clear();

    DetectionTimeline tl;
    std::size_t line_no = 1;
    auto parse_label = [&line_no](const std::string& cell) {
        const long v = textio::parse_long(cell);
        if (v != 0 && v != 1)
            throw DataError("timeline csv: label out of range on line " + std::to_string(line_no));
        return static_cast<int>(v);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> cells = textio::split(line, ',');
        if (cells.size() != (has_truth ? 4u : 3u))
            throw DataError("timeline csv: wrong column count on line " + std::to_string(line_no));
        tl.times.push_back(textio::parse_double(cells[0]));
        tl.labels.push_back(parse_label(cells[1]));
        if (has_truth) {
            const int t = parse_label(cells[2]);
            if (truth != nullptr) truth->push_back(t);
        }
        tl.scores.push_back(textio::parse_double(cells.back()));
    }
    if (tl.times.empty()) throw DataError("timeline csv: no frames");
    return tl;
}

namespace {

void svg_lane(std::ostringstream& out, const std::vector<int>& labels, double x0, double y0,
              double px, double lane_h, const char* fill) {
    out << "  <rect x=\"" << textio::fmt_fixed(x0, 1) << "\" y=\"" << textio::fmt_fixed(y0, 1)
        << "\" width=\"" << textio::fmt_fixed(px * static_cast<double>(labels.size()), 1)
        << "\" height=\"" << textio::fmt_fixed(lane_h, 1)
        << "\" fill=\"#f2f2f2\" stroke=\"#999\"/>\n";
    std::size_t i = 0;
    while (i < labels.size()) {
        if (labels[i] != 1) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < labels.size() && labels[j] == 1) ++j;
        out << "  <rect x=\"" << textio::fmt_fixed(x0 + px * static_cast<double>(i), 1)
            << "\" y=\"" << textio::fmt_fixed(y0, 1) << "\" width=\""
            << textio::fmt_fixed(px * static_cast<double>(j - i), 1) << "\" height=\""
            << textio::fmt_fixed(lane_h, 1) << "\" fill=\"" << fill << "\"/>\n";
        i = j;
    }
}

}  // namespace

std::string timeline_svg(const DetectionTimeline& timeline, const std::vector<int>* truth) {
    const std::size_t n = timeline.times.size();
    if (n == 0) throw DataError("timeline_svg: empty timeline");
    if (timeline.labels.size() != n) throw DataError("timeline_svg: inconsistent timeline");
    if (truth != nullptr && truth->size() != n)
        throw DataError("timeline_svg: truth length does not match frame count");

    const double margin_left = 70.0;
    const double margin_right = 12.0;
    const double margin_top = 26.0;
    const double margin_bottom = 34.0;
    const double lane_h = 36.0;
    const double lane_gap = 14.0;
    const double px = std::min(6.0, std::max(0.5, 1200.0 / static_cast<double>(n)));
    const int lanes = truth != nullptr ? 2 : 1;
    const double width = margin_left + px * static_cast<double>(n) + margin_right;
    const double height =
        margin_top + lane_h * lanes + lane_gap * (lanes - 1) + margin_bottom;

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << textio::fmt_fixed(width, 1)
        << "\" height=\"" << textio::fmt_fixed(height, 1) << "\" viewBox=\"0 0 "
        << textio::fmt_fixed(width, 1) << ' ' << textio::fmt_fixed(height, 1)
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    if (!timeline.recording_id.empty())
        out << "  <text x=\"" << textio::fmt_fixed(margin_left, 1)
            << "\" y=\"16\">" << xml_escape(timeline.recording_id) << "</text>\n";

    double y = margin_top;
    if (truth != nullptr) {
        out << "  <text x=\"8\" y=\"" << textio::fmt_fixed(y + lane_h / 2 + 4, 1)
            << "\">truth</text>\n";
        svg_lane(out, *truth, margin_left, y, px, lane_h, "#f0a050");
        y += lane_h + lane_gap;
    }
    out << "  <text x=\"8\" y=\"" << textio::fmt_fixed(y + lane_h / 2 + 4, 1)
        << "\">detected</text>\n";
    svg_lane(out, timeline.labels, margin_left, y, px, lane_h, "#54a868");
    y += lane_h;

    // time axis: frame i spans [margin_left + i*px, ... + px), centered on times[i]
    const double hop = n > 1 ? timeline.times[1] - timeline.times[0] : 0.1;
    const double t0 = timeline.times.front();
    const double t1 = timeline.times.back();
    double step = 0.1;
    for (double cand : {0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 60.0, 120.0}) {
        step = cand;
        if ((t1 - t0) / cand <= 12.0) break;
    }
    const double axis_y = y + 4.0;
    for (double t = std::ceil(t0 / step) * step; t <= t1 + 1e-9; t += step) {
        const double x = margin_left + ((t - t0) / hop + 0.5) * px;
        out << "  <line x1=\"" << textio::fmt_fixed(x, 1) << "\" y1=\""
            << textio::fmt_fixed(axis_y, 1) << "\" x2=\"" << textio::fmt_fixed(x, 1)
            << "\" y2=\"" << textio::fmt_fixed(axis_y + 5.0, 1) << "\" stroke=\"#333\"/>\n";
        out << "  <text x=\"" << textio::fmt_fixed(x, 1) << "\" y=\""
            << textio::fmt_fixed(axis_y + 18.0, 1) << "\" text-anchor=\"middle\">"
            << textio::fmt_fixed(t, step < 1.0 ? 1 : 0) << "</text>\n";
    }
    out << "  <text x=\"" << textio::fmt_fixed(width - margin_right, 1) << "\" y=\""
        << textio::fmt_fixed(axis_y + 18.0, 1) << "\" text-anchor=\"end\">s</text>\n";
    out << "</svg>\n";
    return out.str();
}

}  // namespace pedalnet::pipeline
