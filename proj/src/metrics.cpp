#include "pedalnet/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "pedalnet/errors.hpp"

namespace pedalnet::metrics {

Prf prf(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size())
        throw DataError("prf: prediction and truth lengths differ (" +
                        std::to_string(pred.size()) + " vs " + std::to_string(truth.size()) +
                        ")");
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == 1 && truth[i] == 1) ++tp;
        else if (pred[i] == 1 && truth[i] != 1) ++fp;
        else if (pred[i] != 1 && truth[i] == 1) ++fn;
    }
    Prf out;
    if (tp + fp > 0) out.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    else out.degenerate = true;
    if (tp + fn > 0) out.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    else out.degenerate = true;
    if (out.precision + out.recall > 0.0)
        out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
    else out.degenerate = true;
    return out;
}

double f_measure(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

double micro_f1(const std::vector<Fold>& folds) {
    if (folds.empty()) throw DataError("micro_f1: no folds");
    long tp = 0, fp = 0, fn = 0;
    for (const Fold& fold : folds) {
        if (fold.pred.size() != fold.truth.size())
            throw DataError("micro_f1: fold prediction and truth lengths differ");
        for (int label : {1, 0}) {
            for (std::size_t i = 0; i < fold.pred.size(); ++i) {
                const bool p = fold.pred[i] == label;
                const bool t = fold.truth[i] == label;
                if (p && t) ++tp;
                else if (p && !t) ++fp;
                else if (!p && t) ++fn;
            }
        }
    }
    if (tp + fp == 0 || tp + fn == 0) return 0.0;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    return f_measure(precision, recall);
}

double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw DataError("auc_roc: lengths differ");
    std::size_t n_pos = 0;
    for (int l : labels) n_pos += l == 1 ? 1 : 0;
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw DataError("auc_roc: need both classes present");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Average ranks over tie groups, 1-based.
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]] == 1) pos_rank_sum += avg_rank;
        i = j + 1;
    }
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

std::vector<int> frame_ground_truth(const std::vector<midi::PedalSegment>& segments,
                                    const std::vector<double>& frame_times) {
    std::vector<int> labels(frame_times.size(), 0);
    for (std::size_t i = 0; i < frame_times.size(); ++i) {
        const double t = frame_times[i];
        for (const midi::PedalSegment& seg : segments) {
            if (t >= seg.onset_s && t < seg.offset_s) {
                labels[i] = 1;
                break;
            }
        }
    }
    return labels;
}

}  // namespace pedalnet::metrics
