#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pedalnet::svm {

double rbf_kernel(const std::vector<double>& x, const std::vector<double>& y, double gamma);

struct SvmModel {
    std::vector<std::vector<double>> support_vectors;  // stored standardized
    std::vector<double> dual_coeffs;                   // alpha_i * y_i
    double bias = 0.0;
    double gamma = 0.0;
    double C = 0.0;
    std::vector<double> feature_mean, feature_std;

    std::size_t dim() const { return feature_mean.size(); }
};

struct TrainInfo {
    double dual_objective = 0.0;  // maximized W(alpha) = sum(a) - 1/2 a'Qa
    long iterations = 0;
    int n_support = 0;
    // Full multiplier vector in training order, for invariant checks.
    std::vector<double> alphas;
};

// Soft-margin SMO with maximal-violating-pair selection, stopping tolerance
// 1e-3 on the KKT gap. Features are standardized internally. Labels must be
// -1 or +1 and both present.
SvmModel train_svm(const std::vector<std::vector<double>>& features,
                   const std::vector<int>& labels, double C, double gamma,
                   TrainInfo* info = nullptr);

struct Prediction {
    int label = 0;        // +1 (on) or -1 (off); decision 0 maps to +1
    double decision = 0.0;
};

Prediction predict(const SvmModel& model, const std::vector<double>& feature);

struct GridSpec {
    std::vector<double> gammas;
    std::vector<double> Cs;

    // Bandwidths {2^-3, 2^-5, 2^-7, 2^-9, 2^-11, 2^-13, 1/dim} and penalties
    // {0.1, 2.0, 8.0, 32.0}.
    static GridSpec standard(std::size_t dim);
};

struct GridRow {
    double gamma = 0.0;
    double C = 0.0;
    double score = 0.0;  // micro-F1 on the inner validation slice
};

struct GridResult {
    double best_gamma = 0.0;
    double best_C = 0.0;
    double best_score = 0.0;
    std::vector<GridRow> table;
};

// Stratified inner split carved from the given training data (never from any
// held-out fold); ties break toward smaller C, then smaller gamma.
GridResult grid_search(const std::vector<std::vector<double>>& features,
                       const std::vector<int>& labels, const GridSpec& grid,
                       double inner_val_fraction, std::uint64_t seed);

std::string grid_csv(const GridResult& r);

void save_svm(const std::string& path, const SvmModel& model);
SvmModel load_svm(const std::string& path);

}  // namespace pedalnet::svm
