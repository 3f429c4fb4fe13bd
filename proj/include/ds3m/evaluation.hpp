#pragma once

#include <algorithm>
#include <map>

#include "ds3m/tensor.hpp"

namespace ds3m {

/// Root mean squared error pooled over all entries.
inline double rmse(const Tensor& y_true, const Tensor& y_pred) {
    check_same_shape(y_true, y_pred, "rmse");
    if (y_true.size() == 0) throw std::invalid_argument("rmse: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        double d = y_true[i] - y_pred[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(y_true.size()));
}

/// Mean absolute percentage error; zero denominators are guarded by epsilon
/// rather than dropped.
inline double mape(const Tensor& y_true, const Tensor& y_pred, double epsilon = 1e-8) {
    check_same_shape(y_true, y_pred, "mape");
    if (y_true.size() == 0) throw std::invalid_argument("mape: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i)
        acc += std::abs(y_true[i] - y_pred[i]) / std::max(std::abs(y_true[i]), epsilon);
    return 100.0 * acc / static_cast<double>(y_true.size());
}

/// Exhaustive search over label permutations maximizing accuracy. Regime
/// labels are identifiable only up to permutation, so predictions are aligned
/// before scoring. Ties break toward the lexicographically smallest
/// permutation.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> align_labels(
    const std::vector<std::size_t>& d_pred, const std::vector<std::size_t>& d_true,
    std::size_t K) {
    if (d_pred.size() != d_true.size())
        throw std::invalid_argument("align_labels: length mismatch");
    if (K > 8)
        throw std::invalid_argument("align_labels: exhaustive search refused for K > 8");
    for (std::size_t v : d_pred)
        if (v >= K) throw std::out_of_range("align_labels: predicted label out of range");
    for (std::size_t v : d_true)
        if (v >= K) throw std::out_of_range("align_labels: true label out of range");

    std::vector<std::size_t> perm(K), best_perm(K);
    for (std::size_t i = 0; i < K; ++i) perm[i] = i;
    best_perm = perm;
    std::size_t best_hits = 0;
    bool first = true;
    do {
        std::size_t hits = 0;
        for (std::size_t t = 0; t < d_pred.size(); ++t)
            if (perm[d_pred[t]] == d_true[t]) ++hits;
        if (first || hits > best_hits) {
            best_hits = hits;
            best_perm = perm;
            first = false;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    std::vector<std::size_t> aligned(d_pred.size());
    for (std::size_t t = 0; t < d_pred.size(); ++t) aligned[t] = best_perm[d_pred[t]];
    return {best_perm, aligned};
}

inline double accuracy(const std::vector<std::size_t>& d_pred,
                       const std::vector<std::size_t>& d_true) {
    if (d_pred.size() != d_true.size())
        throw std::invalid_argument("accuracy: length mismatch");
    if (d_pred.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t t = 0; t < d_pred.size(); ++t)
        if (d_pred[t] == d_true[t]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(d_pred.size());
}

/// Binary F1 with label 1 as positive for K = 2; macro-average otherwise.
/// Per-class 0/0 counts as 0.
inline double f1_score(const std::vector<std::size_t>& d_pred,
                       const std::vector<std::size_t>& d_true, std::size_t K) {
    if (d_pred.size() != d_true.size())
        throw std::invalid_argument("f1_score: length mismatch");
    auto class_f1 = [&](std::size_t c) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t t = 0; t < d_pred.size(); ++t) {
            if (d_pred[t] == c && d_true[t] == c) ++tp;
            else if (d_pred[t] == c) ++fp;
            else if (d_true[t] == c) ++fn;
        }
        double denom = static_cast<double>(2 * tp + fp + fn);
        return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
    };
    if (K == 2) return class_f1(1);
    double acc = 0.0;
    for (std::size_t c = 0; c < K; ++c) acc += class_f1(c);
    return acc / static_cast<double>(K);
}

/// Mean length of maximal constant runs, per regime; absent regimes report 0.
inline std::vector<double> mean_durations(const std::vector<std::size_t>& d_path,
                                          std::size_t K) {
    std::vector<double> total(K, 0.0);
    std::vector<std::size_t> runs(K, 0);
    std::size_t t = 0;
    while (t < d_path.size()) {
        std::size_t k = d_path[t];
        if (k >= K) throw std::out_of_range("mean_durations: label out of range");
        std::size_t len = 1;
        while (t + len < d_path.size() && d_path[t + len] == k) ++len;
        total[k] += static_cast<double>(len);
        ++runs[k];
        t += len;
    }
    std::vector<double> out(K, 0.0);
    for (std::size_t k = 0; k < K; ++k)
        if (runs[k]) out[k] = total[k] / static_cast<double>(runs[k]);
    return out;
}

/// One row of a results table, serializable as flat key = value text.
struct MetricsRecord {
    double rmse = std::numeric_limits<double>::quiet_NaN();  // NaN when not applicable
    double mape = std::numeric_limits<double>::quiet_NaN();
    double accuracy = -1.0;  // negative when no labels were available
    double f1 = -1.0;
    std::vector<double> duration_per_regime;
    std::vector<std::size_t> label_permutation;

    std::string serialize() const {
        std::ostringstream os;
        os.precision(17);
        if (std::isfinite(rmse)) os << "rmse = " << rmse << "\n";
        if (std::isfinite(mape)) os << "mape = " << mape << "\n";
        if (accuracy >= 0.0) os << "accuracy = " << accuracy << "\n";
        if (f1 >= 0.0) os << "f1 = " << f1 << "\n";
        for (std::size_t k = 0; k < duration_per_regime.size(); ++k)
            os << "duration_regime" << k << " = " << duration_per_regime[k] << "\n";
        if (!label_permutation.empty()) {
            os << "label_permutation =";
            for (std::size_t v : label_permutation) os << " " << v;
            os << "\n";
        }
        return os.str();
    }
};

}  // namespace ds3m
