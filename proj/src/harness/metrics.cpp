#include <algorithm>

#include "popmon/harness.hpp"

namespace popmon {

F1Score f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
    F1Score s;
    s.tp = tp;
    s.fp = fp;
    s.fn = fn;
    // with nothing predicted (or nothing to find) the ratio is vacuously 1
    s.precision = tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    s.recall = tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    s.f1 = s.precision + s.recall == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

F1Score f1_score(const std::vector<double>& predicted_keys, const std::vector<std::vector<PartitionIndex>>& predicted,
                 const std::vector<double>& truth_keys, const std::vector<std::vector<PartitionIndex>>& truth) {
    if (predicted_keys.size() != predicted.size() || truth_keys.size() != truth.size()) {
        throw std::invalid_argument("keys and sets differ in length");
    }
    if (predicted_keys != truth_keys) throw std::invalid_argument("prediction and truth keys do not match");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        std::vector<PartitionIndex> p = predicted[i], g = truth[i];
        std::sort(p.begin(), p.end());
        std::sort(g.begin(), g.end());
        p.erase(std::unique(p.begin(), p.end()), p.end());
        g.erase(std::unique(g.begin(), g.end()), g.end());
        std::vector<PartitionIndex> both;
        std::set_intersection(p.begin(), p.end(), g.begin(), g.end(), std::back_inserter(both));
        tp += both.size();
        fp += p.size() - both.size();
        fn += g.size() - both.size();
    }
    return f1_from_counts(tp, fp, fn);
}

std::vector<PartitionIndex> true_populated(std::span<const DenseTrace> traces, std::span<const PartitionIndex> among,
                                           double threshold, double t) {
    std::vector<PartitionIndex> out;
    for (PartitionIndex v : among) {
        if (static_cast<double>(true_population(traces, v, t)) > threshold) out.push_back(v);
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace popmon
