#pragma once

#include <cstdint>
#include <vector>

#include "pskd/data.hpp"
#include "pskd/model.hpp"

namespace pskd {

// Rows are true classes, columns predicted.
struct ConfusionMatrix {
    int num_classes = 0;
    std::vector<std::int64_t> counts;

    explicit ConfusionMatrix(int c) : num_classes(c), counts(static_cast<std::size_t>(c) * c, 0) {}
    std::int64_t& at(int truth, int pred) { return counts[static_cast<std::size_t>(truth) * num_classes + pred]; }
    std::int64_t at(int truth, int pred) const { return counts[static_cast<std::size_t>(truth) * num_classes + pred]; }
    std::int64_t total() const;
    std::int64_t trace() const;
};

struct Metrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<double> precision, recall, f1;  // per class
};

struct Evaluation {
    Metrics metrics;
    ConfusionMatrix confusion;
};

// argmax prediction per sample, ties broken by lowest class index.
std::vector<int> predict(const Model& m, const Dataset& ds, const std::vector<int>& indices);

// Accuracy = trace/total; per-class F1 = 2PR/(P+R) with 0/0 -> 0;
// macro-F1 is the unweighted mean over all classes.
Evaluation evaluate_predictions(const std::vector<int>& labels, const std::vector<int>& preds,
                                int num_classes);

Evaluation evaluate(const Model& m, const Dataset& ds, Split split);

}  // namespace pskd
