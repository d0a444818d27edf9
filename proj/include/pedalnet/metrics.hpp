#pragma once

#include <vector>

#include "pedalnet/midi.hpp"

namespace pedalnet::metrics {

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool degenerate = false;  // some denominator was zero and the value was forced to 0
};

// Precision/recall/F against the positive class (label 1).
Prf prf(const std::vector<int>& pred, const std::vector<int>& truth);

// 2pr/(p+r), or 0 when p + r == 0.
double f_measure(double p, double r);

struct Fold {
    std::vector<int> pred;
    std::vector<int> truth;
};

// Pools tp/fp/fn over both labels (each treated as positive in turn) across
// all folds, then computes F.
double micro_f1(const std::vector<Fold>& folds);

// Rank (Mann-Whitney) AUC with ties counted half. Label 1 is positive.
double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels);

// Frame label is 1 iff the frame time lies inside a segment; segments are
// closed on the left, open on the right.
std::vector<int> frame_ground_truth(const std::vector<midi::PedalSegment>& segments,
                                    const std::vector<double>& frame_times);

}  // namespace pedalnet::metrics
