#include "pedalnet/svm.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <sstream>

#include "pedalnet/binfile.hpp"
#include "pedalnet/errors.hpp"
#include "pedalnet/metrics.hpp"
#include "pedalnet/rng.hpp"
#include "pedalnet/textio.hpp"

namespace pedalnet::svm {

namespace {

// The guaranteed KKT tolerance is 1e-3, but stopping right at that gap can
// leave the dual objective around 1e-6 short of the optimum at large C. The
// loop therefore refines to kTol or until an update makes no floating-point
// progress, whichever comes first.
constexpr double kTol = 1e-7;
constexpr double kTau = 1e-12;

void standardize_stats(const std::vector<std::vector<double>>& x, std::vector<double>& mean,
                       std::vector<double>& std_dev) {
    const std::size_t n = x.size();
    const std::size_t dim = x.front().size();
    mean.assign(dim, 0.0);
    std_dev.assign(dim, 0.0);
    for (const auto& row : x)
        for (std::size_t d = 0; d < dim; ++d) mean[d] += row[d];
    for (std::size_t d = 0; d < dim; ++d) mean[d] /= static_cast<double>(n);
    for (const auto& row : x)
        for (std::size_t d = 0; d < dim; ++d) {
            const double diff = row[d] - mean[d];
            std_dev[d] += diff * diff;
        }
    for (std::size_t d = 0; d < dim; ++d) {
        std_dev[d] = std::sqrt(std_dev[d] / static_cast<double>(n));
        if (std_dev[d] == 0.0) std_dev[d] = 1.0;  // constant feature carries no signal
    }
}

std::vector<double> standardized(const std::vector<double>& x, const std::vector<double>& mean,
                                 const std::vector<double>& std_dev) {
    std::vector<double> out(x.size());
    for (std::size_t d = 0; d < x.size(); ++d) out[d] = (x[d] - mean[d]) / std_dev[d];
    return out;
}

}  // namespace

double rbf_kernel(const std::vector<double>& x, const std::vector<double>& y, double gamma) {
    if (x.size() != y.size())
        throw DataError("rbf_kernel: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                        std::to_string(y.size()) + ")");
    if (gamma <= 0.0) throw ConfigError("rbf_kernel: gamma must be positive");
    double sq = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
        const double diff = x[d] - y[d];
        sq += diff * diff;
    }
    return std::exp(-gamma * sq);
}

SvmModel train_svm(const std::vector<std::vector<double>>& features,
                   const std::vector<int>& labels, double C, double gamma, TrainInfo* info) {
    if (features.empty()) throw DataError("train_svm: empty training set");
    if (features.size() != labels.size())
        throw DataError("train_svm: feature and label counts differ");
    if (C <= 0.0) throw ConfigError("train_svm: C must be positive");
    if (gamma <= 0.0) throw ConfigError("train_svm: gamma must be positive");
    const std::size_t n = features.size();
    const std::size_t dim = features.front().size();
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
        if (features[i].size() != dim)
            throw DataError("train_svm: inconsistent feature dimensions");
        if (labels[i] == 1) has_pos = true;
        else if (labels[i] == -1) has_neg = true;
        else throw DataError("train_svm: labels must be -1 or +1");
    }
    if (!has_pos || !has_neg) throw DataError("train_svm: both classes must be present");

    SvmModel model;
    model.gamma = gamma;
    model.C = C;
    standardize_stats(features, model.feature_mean, model.feature_std);
    std::vector<std::vector<double>> x(n);
    for (std::size_t i = 0; i < n; ++i)
        x[i] = standardized(features[i], model.feature_mean, model.feature_std);

    // Full Gram matrix of Q = y y' .* K; the datasets here stay small enough.
    std::vector<double> q(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        q[i * n + i] = 1.0;  // RBF diagonal
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = labels[i] * labels[j] * rbf_kernel(x[i], x[j], gamma);
            q[i * n + j] = v;
            q[j * n + i] = v;
        }
    }

    std::vector<double> alpha(n, 0.0);
    std::vector<double> grad(n, -1.0);
    const long max_iter = std::max<long>(10000000L, 100L * static_cast<long>(n));
    long iter = 0;
    for (; iter < max_iter; ++iter) {
        // Maximal violating pair.
        double m_up = -std::numeric_limits<double>::infinity();
        double m_low = std::numeric_limits<double>::infinity();
        std::size_t i = n, j = n;
        for (std::size_t t = 0; t < n; ++t) {
            const double v = -labels[t] * grad[t];
            const bool in_up = (labels[t] == 1 && alpha[t] < C) || (labels[t] == -1 && alpha[t] > 0.0);
            const bool in_low = (labels[t] == 1 && alpha[t] > 0.0) || (labels[t] == -1 && alpha[t] < C);
            if (in_up && v > m_up) {
                m_up = v;
                i = t;
            }
            if (in_low && v < m_low) {
                m_low = v;
                j = t;
            }
        }
        if (i == n || j == n || m_up - m_low <= kTol) break;

        const double old_i = alpha[i], old_j = alpha[j];
        if (labels[i] != labels[j]) {
            double quad = q[i * n + i] + q[j * n + j] + 2.0 * q[i * n + j];
            if (quad <= 0.0) quad = kTau;
            const double delta = (-grad[i] - grad[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0.0) {
                if (alpha[j] < 0.0) {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else {
                if (alpha[i] < 0.0) {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
            }
            if (diff > 0.0) {
                if (alpha[i] > C) {
                    alpha[i] = C;
                    alpha[j] = C - diff;
                }
            } else {
                if (alpha[j] > C) {
                    alpha[j] = C;
                    alpha[i] = C + diff;
                }
            }
        } else {
            double quad = q[i * n + i] + q[j * n + j] - 2.0 * q[i * n + j];
            if (quad <= 0.0) quad = kTau;
            const double delta = (grad[i] - grad[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > C) {
                if (alpha[i] > C) {
                    alpha[i] = C;
                    alpha[j] = sum - C;
                }
            } else {
                if (alpha[j] < 0.0) {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
            }
            if (sum > C) {
                if (alpha[j] > C) {
                    alpha[j] = C;
                    alpha[i] = sum - C;
                }
            } else {
                if (alpha[i] < 0.0) {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
        }
        const double d_i = alpha[i] - old_i;
        const double d_j = alpha[j] - old_j;
        if (d_i == 0.0 && d_j == 0.0) break;  // rounding floor reached
        for (std::size_t t = 0; t < n; ++t)
            grad[t] += q[t * n + i] * d_i + q[t * n + j] * d_j;
    }

    // Bias from the KKT conditions on free multipliers.
    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    std::size_t n_free = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yg = labels[t] * grad[t];
        if (alpha[t] >= C) {
            if (labels[t] == 1) lb = std::max(lb, yg);
            else ub = std::min(ub, yg);
        } else if (alpha[t] <= 0.0) {
            if (labels[t] == 1) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    const double rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;
    model.bias = -rho;

    double objective = 0.0;
    for (std::size_t t = 0; t < n; ++t) objective += 0.5 * alpha[t] * (1.0 - grad[t]);
    for (std::size_t t = 0; t < n; ++t) {
        if (alpha[t] > 1e-12) {
            model.support_vectors.push_back(x[t]);
            model.dual_coeffs.push_back(alpha[t] * labels[t]);
        }
    }
    if (info) {
        info->dual_objective = objective;
        info->iterations = iter;
        info->n_support = static_cast<int>(model.support_vectors.size());
        info->alphas = alpha;
    }
    return model;
}

Prediction predict(const SvmModel& model, const std::vector<double>& feature) {
    if (feature.size() != model.dim())
        throw DataError("predict: feature dimension " + std::to_string(feature.size()) +
                        " does not match model dimension " + std::to_string(model.dim()));
    const std::vector<double> x = standardized(feature, model.feature_mean, model.feature_std);
    double decision = model.bias;
    for (std::size_t s = 0; s < model.support_vectors.size(); ++s)
        decision += model.dual_coeffs[s] * rbf_kernel(model.support_vectors[s], x, model.gamma);
    Prediction p;
    p.decision = decision;
    p.label = decision >= 0.0 ? 1 : -1;
    return p;
}

GridSpec GridSpec::standard(std::size_t dim) {
    if (dim == 0) throw ConfigError("GridSpec: feature dimension must be positive");
    GridSpec g;
    g.gammas = {std::pow(2.0, -3), std::pow(2.0, -5), std::pow(2.0, -7), std::pow(2.0, -9),
                std::pow(2.0, -11), std::pow(2.0, -13), 1.0 / static_cast<double>(dim)};
    g.Cs = {0.1, 2.0, 8.0, 32.0};
    return g;
}

GridResult grid_search(const std::vector<std::vector<double>>& features,
                       const std::vector<int>& labels, const GridSpec& grid,
                       double inner_val_fraction, std::uint64_t seed) {
    if (features.size() != labels.size())
        throw DataError("grid_search: feature and label counts differ");
    if (grid.gammas.empty() || grid.Cs.empty())
        throw ConfigError("grid_search: empty grid");
    if (inner_val_fraction <= 0.0 || inner_val_fraction >= 1.0)
        throw ConfigError("grid_search: inner split fraction must be in (0, 1)");
    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 1) by_class[1].push_back(i);
        else if (labels[i] == -1) by_class[0].push_back(i);
        else throw DataError("grid_search: labels must be -1 or +1");
    }
    if (by_class[0].size() < 10 || by_class[1].size() < 10)
        throw DataError("grid_search: need at least 10 examples per class for the inner split");

    Rng rng(Rng::mix(seed, 0x67726964ULL));
    std::vector<std::size_t> train_idx, val_idx;
    for (auto& idx : by_class) {
        rng.shuffle(idx);
        const std::size_t n_val = std::max<std::size_t>(
            1, static_cast<std::size_t>(inner_val_fraction * static_cast<double>(idx.size())));
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < n_val ? val_idx : train_idx).push_back(idx[i]);
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());

    std::vector<std::vector<double>> train_x;
    std::vector<int> train_y;
    for (std::size_t i : train_idx) {
        train_x.push_back(features[i]);
        train_y.push_back(labels[i]);
    }
    std::vector<int> val_truth01;
    for (std::size_t i : val_idx) val_truth01.push_back(labels[i] == 1 ? 1 : 0);

    // candidates are independent; train one gamma group per task and keep
    // the table (and therefore tie-breaking) in grid order
    std::vector<std::future<std::vector<GridRow>>> groups;
    groups.reserve(grid.gammas.size());
    for (double gamma : grid.gammas)
        groups.push_back(std::async(std::launch::async, [&, gamma] {
            std::vector<GridRow> rows;
            for (double C : grid.Cs) {
                const SvmModel model = train_svm(train_x, train_y, C, gamma);
                std::vector<int> pred01;
                for (std::size_t i : val_idx)
                    pred01.push_back(predict(model, features[i]).label == 1 ? 1 : 0);
                rows.push_back({gamma, C, metrics::micro_f1({{pred01, val_truth01}})});
            }
            return rows;
        }));

    GridResult result;
    bool have_best = false;
    for (auto& group : groups) {
        for (const GridRow& row : group.get()) {
            result.table.push_back(row);
            const bool better =
                !have_best || row.score > result.best_score ||
                (row.score == result.best_score &&
                 (row.C < result.best_C ||
                  (row.C == result.best_C && row.gamma < result.best_gamma)));
            if (better) {
                have_best = true;
                result.best_gamma = row.gamma;
                result.best_C = row.C;
                result.best_score = row.score;
            }
        }
    }
    return result;
}

std::string grid_csv(const GridResult& r) {
    std::ostringstream out;
    out << "gamma,C,micro_f1\n";
    for (const GridRow& row : r.table)
        out << textio::fmt_double(row.gamma) << ',' << textio::fmt_double(row.C) << ','
            << textio::fmt_double(row.score) << '\n';
    out << "# best gamma=" << textio::fmt_double(r.best_gamma)
        << " C=" << textio::fmt_double(r.best_C)
        << " micro_f1=" << textio::fmt_double(r.best_score) << '\n';
    return out.str();
}

void save_svm(const std::string& path, const SvmModel& model) {
    binfile::Container box;
    box.kind = binfile::kKindSvm;
    std::ostringstream cfg;
    cfg << "gamma=" << textio::fmt_double(model.gamma) << "\nC=" << textio::fmt_double(model.C)
        << "\ndim=" << model.dim() << "\nn_sv=" << model.support_vectors.size() << '\n';
    box.config_text = cfg.str();
    box.add_f64(model.feature_mean);
    box.add_f64(model.feature_std);
    box.add_f64({model.bias});
    box.add_f64(model.dual_coeffs);
    std::vector<double> flat;
    flat.reserve(model.support_vectors.size() * model.dim());
    for (const auto& sv : model.support_vectors) flat.insert(flat.end(), sv.begin(), sv.end());
    box.add_f64(flat);
    binfile::write_file(path, box);
}

SvmModel load_svm(const std::string& path) {
    const binfile::Container box = binfile::read_file(path);
    if (box.kind != binfile::kKindSvm)
        throw ModelError("load_svm: " + path + " is not an svm model");
    SvmModel model;
    std::size_t dim = 0, n_sv = 0;
    std::istringstream in(box.config_text);
    std::string line;
    bool seen_gamma = false, seen_c = false, seen_dim = false, seen_nsv = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ModelError("svm config: expected key=value: " + line);
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        try {
            if (key == "gamma") {
                model.gamma = textio::parse_double(value);
                seen_gamma = true;
            } else if (key == "C") {
                model.C = textio::parse_double(value);
                seen_c = true;
            } else if (key == "dim") {
                dim = static_cast<std::size_t>(textio::parse_long(value));
                seen_dim = true;
            } else if (key == "n_sv") {
                n_sv = static_cast<std::size_t>(textio::parse_long(value));
                seen_nsv = true;
            } else {
                throw ModelError("svm config: unrecognized key: " + key);
            }
        } catch (const DataError&) {
            throw ModelError("svm config: malformed value for " + key);
        }
    }
    if (!(seen_gamma && seen_c && seen_dim && seen_nsv))
        throw ModelError("svm config: missing keys");
    if (model.gamma <= 0.0 || model.C <= 0.0)
        throw ModelError("svm config: gamma and C must be positive");
    if (box.blocks.size() != 5)
        throw ShapeError("load_svm: expected 5 blocks, got " + std::to_string(box.blocks.size()));
    for (const binfile::Block& b : box.blocks)
        if (b.dtype != binfile::Dtype::f64) throw ModelError("load_svm: blocks must be f64");
    if (box.blocks[0].f64.size() != dim || box.blocks[1].f64.size() != dim)
        throw ShapeError("load_svm: standardization vectors do not match dim");
    if (box.blocks[2].f64.size() != 1) throw ShapeError("load_svm: bias block must hold 1 value");
    if (box.blocks[3].f64.size() != n_sv)
        throw ShapeError("load_svm: dual coefficient count does not match n_sv");
    if (box.blocks[4].f64.size() != n_sv * dim)
        throw ShapeError("load_svm: support vector block does not match n_sv x dim");
    model.feature_mean = box.blocks[0].f64;
    model.feature_std = box.blocks[1].f64;
    model.bias = box.blocks[2].f64[0];
    model.dual_coeffs = box.blocks[3].f64;
    model.support_vectors.resize(n_sv);
    for (std::size_t s = 0; s < n_sv; ++s)
        model.support_vectors[s] =
            std::vector<double>(box.blocks[4].f64.begin() + static_cast<std::ptrdiff_t>(s * dim),
                                box.blocks[4].f64.begin() + static_cast<std::ptrdiff_t>((s + 1) * dim));
    return model;
}

}  // namespace pedalnet::svm
