#include "pedalnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "pedalnet/blas.hpp"
#include "pedalnet/errors.hpp"
#include "pedalnet/metrics.hpp"
#include "pedalnet/rng.hpp"
#include "pedalnet/textio.hpp"

namespace pedalnet::nn {

namespace {

constexpr std::uint64_t kSaltSplit = 0x73706c6974ULL;
constexpr std::uint64_t kSaltInit = 0x696e6974ULL;
constexpr std::uint64_t kSaltEpoch = 0x65706f6368ULL;

constexpr int kEvalChunk = 64;

void check_both_classes(const std::vector<synth::LabeledMel>& data, const char* who) {
    bool has0 = false, has1 = false;
    for (const synth::LabeledMel& s : data) {
        if (s.label == 0) has0 = true;
        else if (s.label == 1) has1 = true;
        else throw DataError(std::string(who) + ": labels must be 0 or 1");
    }
    if (!has0 || !has1) throw DataError(std::string(who) + ": dataset must contain both classes");
}

struct Split {
    std::vector<std::size_t> train, val;
};

Split stratified_split(const std::vector<int>& labels, double val_fraction, std::uint64_t seed) {
    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < labels.size(); ++i)
        by_class[labels[i] == 1 ? 1 : 0].push_back(i);
    Rng rng(Rng::mix(seed, kSaltSplit));
    Split split;
    for (auto& idx : by_class) {
        rng.shuffle(idx);
        const std::size_t n_val =
            static_cast<std::size_t>(val_fraction * static_cast<double>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < n_val ? split.val : split.train).push_back(idx[i]);
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.val.begin(), split.val.end());
    return split;
}

std::vector<int> dataset_labels(const std::vector<synth::LabeledMel>& data) {
    std::vector<int> labels;
    labels.reserve(data.size());
    for (const synth::LabeledMel& s : data) labels.push_back(s.label);
    return labels;
}

// Batch index ranges; a trailing single item joins the previous batch because
// batch-norm needs a population of at least 2.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n,
                                                              std::size_t batch_size) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t begin = 0; begin < n; begin += batch_size)
        out.emplace_back(begin, std::min(n, begin + batch_size));
    if (out.size() > 1 && out.back().second - out.back().first == 1) {
        out.pop_back();
        out.back().second = n;
    }
    return out;
}

// Pedal-class probabilities for a subset of the dataset, in chunks.
std::vector<double> infer_p1(const Network<float>& net,
                             const std::vector<synth::LabeledMel>& data,
                             const std::vector<std::size_t>& indices) {
    std::vector<double> p1;
    p1.reserve(indices.size());
    for (std::size_t begin = 0; begin < indices.size(); begin += kEvalChunk) {
        const std::size_t end = std::min(indices.size(), begin + kEvalChunk);
        std::vector<const dsp::MelSpectrogram*> mels;
        for (std::size_t i = begin; i < end; ++i) mels.push_back(&data[indices[i]].mel);
        const InferResult<float> r = infer(net, make_batch<float>(mels));
        for (std::size_t i = 0; i < mels.size(); ++i) p1.push_back(r.probs[i * 2 + 1]);
    }
    return p1;
}

struct ValScore {
    double acc = 0.0;
    double auc = 0.0;
};

ValScore score_validation(const std::vector<double>& p1, const std::vector<int>& labels) {
    ValScore s;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < p1.size(); ++i)
        if ((p1[i] >= 0.5 ? 1 : 0) == labels[i]) ++correct;
    s.acc = static_cast<double>(correct) / static_cast<double>(p1.size());
    try {
        s.auc = metrics::auc_roc(p1, labels);
    } catch (const DataError&) {
        s.auc = std::numeric_limits<double>::quiet_NaN();
    }
    return s;
}

}  // namespace

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (patience < 1) throw ConfigError("train: patience must be >= 1");
    if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
    if (lr <= 0.0) throw ConfigError("train: learning rate must be positive");
    if (val_fraction < 0.0 || val_fraction >= 1.0)
        throw ConfigError("train: val_fraction must be in [0, 1)");
}

void adam_step(std::vector<float>& param, const std::vector<float>& grad, AdamState& state,
               int t, const TrainConfig& cfg) {
    if (state.m.size() != param.size()) {
        state.m.assign(param.size(), 0.0f);
        state.v.assign(param.size(), 0.0f);
    }
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double corr1 = 1.0 - std::pow(b1, t);
    const double corr2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        const double m = b1 * state.m[i] + (1.0 - b1) * g;
        const double v = b2 * state.v[i] + (1.0 - b2) * g * g;
        state.m[i] = static_cast<float>(m);
        state.v[i] = static_cast<float>(v);
        param[i] -= static_cast<float>(cfg.lr * (m / corr1) /
                                       (std::sqrt(v / corr2) + cfg.adam_eps));
    }
}

TrainResult train(const NetworkConfig& ncfg, const TrainConfig& tcfg,
                  const std::vector<synth::LabeledMel>& dataset) {
    ncfg.validate();
    tcfg.validate();
    check_both_classes(dataset, "train");
    blas_single_thread();

    const Split split = stratified_split(dataset_labels(dataset), tcfg.val_fraction, tcfg.seed);
    std::vector<int> val_labels;
    for (std::size_t i : split.val) val_labels.push_back(dataset[i].label);

    Network<float> net = make_network<float>(ncfg, Rng::mix(tcfg.seed, kSaltInit));
    const auto params = trainable_params(net);
    std::vector<AdamState> adam(params.size());
    int t = 0;

    TrainResult result;
    result.network = net;
    double best_acc = -1.0;
    int since_best = 0;

    std::vector<std::size_t> order = split.train;
    for (int epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
        Rng shuffle_rng(Rng::mix(Rng::mix(tcfg.seed, kSaltEpoch), static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        for (const auto& [begin, end] : batch_ranges(order.size(), static_cast<std::size_t>(tcfg.batch_size))) {
            std::vector<const dsp::MelSpectrogram*> mels;
            std::vector<int> labels;
            for (std::size_t i = begin; i < end; ++i) {
                mels.push_back(&dataset[order[i]].mel);
                labels.push_back(dataset[order[i]].label);
            }
            const Tensor4<float> batch = make_batch<float>(mels);
            const ForwardCache<float> cache = forward_train(net, batch);
            loss_sum += static_cast<double>(bce_loss(cache.probs, labels)) *
                        static_cast<double>(labels.size());
            const auto grads = backward(net, batch, labels, cache);
            ++t;
            for (std::size_t p = 0; p < params.size(); ++p)
                adam_step(*params[p], grads[p], adam[p], t, tcfg);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(order.size());
        if (!split.val.empty()) {
            const ValScore vs = score_validation(infer_p1(net, dataset, split.val), val_labels);
            stats.val_acc = vs.acc;
            stats.val_auc = vs.auc;
        } else {
            stats.val_acc = std::numeric_limits<double>::quiet_NaN();
            stats.val_auc = std::numeric_limits<double>::quiet_NaN();
        }
        result.history.push_back(stats);

        if (split.val.empty()) {
            result.network = net;
            result.best_epoch = epoch;
            continue;
        }
        if (stats.val_acc > best_acc) {
            best_acc = stats.val_acc;
            result.network = net;
            result.best_epoch = epoch;
            result.best_val_acc = stats.val_acc;
            result.best_val_auc = stats.val_auc;
            since_best = 0;
        } else if (++since_best >= tcfg.patience) {
            break;
        }
    }
    return result;
}

namespace {

TrainResult head_train_core(const Network<float>& base, const TrainConfig& tcfg,
                            const std::vector<float>& gap, const std::vector<int>& all_labels) {
    const int c = base.config.channels();
    const Split split = stratified_split(all_labels, tcfg.val_fraction, tcfg.seed);
    std::vector<int> val_labels;
    for (std::size_t i : split.val) val_labels.push_back(all_labels[i]);

    Network<float> net = base;
    const auto params = head_params(net);
    std::vector<AdamState> adam(params.size());
    int t = 0;

    auto head_p1 = [&](const std::vector<std::size_t>& indices) {
        std::vector<float> x(indices.size() * static_cast<std::size_t>(c));
        for (std::size_t i = 0; i < indices.size(); ++i)
            std::copy_n(gap.begin() + indices[i] * c, c, x.begin() + i * c);
        std::vector<float> probs = net.dense.forward(x, static_cast<int>(indices.size()));
        softmax_rows(probs, static_cast<int>(indices.size()), 2);
        std::vector<double> p1(indices.size());
        for (std::size_t i = 0; i < indices.size(); ++i) p1[i] = probs[i * 2 + 1];
        return p1;
    };

    TrainResult result;
    result.network = net;
    double best_acc = -1.0;
    int since_best = 0;

    std::vector<std::size_t> order = split.train;
    for (int epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
        Rng shuffle_rng(Rng::mix(Rng::mix(tcfg.seed, kSaltEpoch), static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        for (std::size_t begin = 0; begin < order.size();
             begin += static_cast<std::size_t>(tcfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(tcfg.batch_size));
            const std::size_t bs = end - begin;
            std::vector<float> x(bs * static_cast<std::size_t>(c));
            std::vector<int> labels(bs);
            for (std::size_t i = 0; i < bs; ++i) {
                std::copy_n(gap.begin() + order[begin + i] * c, c, x.begin() + i * c);
                labels[i] = all_labels[order[begin + i]];
            }
            std::vector<float> probs = net.dense.forward(x, static_cast<int>(bs));
            softmax_rows(probs, static_cast<int>(bs), 2);
            loss_sum += static_cast<double>(bce_loss(probs, labels)) * static_cast<double>(bs);
            const std::vector<float> dlogits = bce_softmax_grad(probs, labels);
            std::vector<float> dw(net.dense.weight.size(), 0.0f);
            std::vector<float> db(net.dense.bias.size(), 0.0f);
            net.dense.backward(x, static_cast<int>(bs), dlogits, dw, db, nullptr);
            ++t;
            adam_step(*params[0], dw, adam[0], t, tcfg);
            adam_step(*params[1], db, adam[1], t, tcfg);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(order.size());
        if (!split.val.empty()) {
            const ValScore vs = score_validation(head_p1(split.val), val_labels);
            stats.val_acc = vs.acc;
            stats.val_auc = vs.auc;
        } else {
            stats.val_acc = std::numeric_limits<double>::quiet_NaN();
            stats.val_auc = std::numeric_limits<double>::quiet_NaN();
        }
        result.history.push_back(stats);

        if (split.val.empty()) {
            result.network = net;
            result.best_epoch = epoch;
            continue;
        }
        if (stats.val_acc > best_acc) {
            best_acc = stats.val_acc;
            result.network = net;
            result.best_epoch = epoch;
            result.best_val_acc = stats.val_acc;
            result.best_val_auc = stats.val_auc;
            since_best = 0;
        } else if (++since_best >= tcfg.patience) {
            break;
        }
    }
    return result;
}

}  // namespace

TrainResult retrain_head(const Network<float>& base, const TrainConfig& tcfg,
                         const std::vector<synth::LabeledMel>& dataset) {
    tcfg.validate();
    check_both_classes(dataset, "retrain_head");
    blas_single_thread();

    // The frozen stack is deterministic, so cache its pooled output once.
    const int c = base.config.channels();
    std::vector<float> gap(dataset.size() * static_cast<std::size_t>(c));
    for (std::size_t begin = 0; begin < dataset.size(); begin += kEvalChunk) {
        const std::size_t end = std::min(dataset.size(), begin + kEvalChunk);
        std::vector<const dsp::MelSpectrogram*> mels;
        for (std::size_t i = begin; i < end; ++i) mels.push_back(&dataset[i].mel);
        const InferResult<float> r = infer(base, make_batch<float>(mels));
        std::copy(r.gap.begin(), r.gap.end(), gap.begin() + begin * static_cast<std::size_t>(c));
    }
    return head_train_core(base, tcfg, gap, dataset_labels(dataset));
}

TrainResult retrain_head_gap(const Network<float>& base, const TrainConfig& tcfg,
                             const std::vector<std::vector<float>>& gaps,
                             const std::vector<int>& labels) {
    tcfg.validate();
    if (gaps.empty()) throw DataError("retrain_head_gap: empty dataset");
    if (gaps.size() != labels.size())
        throw DataError("retrain_head_gap: feature and label counts differ");
    bool has0 = false;
    bool has1 = false;
    for (int l : labels) {
        if (l == 0) has0 = true;
        else if (l == 1) has1 = true;
        else throw DataError("retrain_head_gap: labels must be 0 or 1");
    }
    if (!has0 || !has1) throw DataError("retrain_head_gap: need both classes present");
    blas_single_thread();

    const int c = base.config.channels();
    std::vector<float> gap(gaps.size() * static_cast<std::size_t>(c));
    for (std::size_t i = 0; i < gaps.size(); ++i) {
        if (static_cast<int>(gaps[i].size()) != c)
            throw DataError("retrain_head_gap: feature row size does not match network channels");
        std::copy(gaps[i].begin(), gaps[i].end(), gap.begin() + i * static_cast<std::size_t>(c));
    }
    return head_train_core(base, tcfg, gap, labels);
}

std::pair<double, double> evaluate(const Network<float>& net,
                                   const std::vector<synth::LabeledMel>& dataset) {
    if (dataset.empty()) throw DataError("evaluate: empty dataset");
    blas_single_thread();
    std::vector<std::size_t> indices(dataset.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    const std::vector<double> p1 = infer_p1(net, dataset, indices);
    std::vector<int> labels;
    for (const synth::LabeledMel& s : dataset) labels.push_back(s.label);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < p1.size(); ++i)
        if ((p1[i] >= 0.5 ? 1 : 0) == labels[i]) ++correct;
    const double acc = static_cast<double>(correct) / static_cast<double>(p1.size());
    return {acc, metrics::auc_roc(p1, labels)};
}

std::string history_csv(const std::vector<EpochStats>& history) {
    std::ostringstream out;
    out << "epoch,train_loss,val_acc,val_auc\n";
    for (const EpochStats& s : history)
        out << s.epoch << ',' << textio::fmt_double(s.train_loss) << ','
            << textio::fmt_double(s.val_acc) << ',' << textio::fmt_double(s.val_auc) << '\n';
    return out.str();
}

}  // namespace pedalnet::nn
