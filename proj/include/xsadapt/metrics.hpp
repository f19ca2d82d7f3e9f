#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "xsadapt/classifier.hpp"

namespace xsa {

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
    std::size_t classes = 0;
    std::vector<std::size_t> counts;  // classes * classes

    explicit ConfusionMatrix(std::size_t k = 0) : classes(k), counts(k * k, 0) {}
    std::size_t& at(std::size_t truth, std::size_t predicted) { return counts[truth * classes + predicted]; }
    std::size_t at(std::size_t truth, std::size_t predicted) const { return counts[truth * classes + predicted]; }
    std::size_t total() const;
    void add(int truth, int predicted);
};

ConfusionMatrix confusion(std::span<const Prediction> predictions, std::span<const Window> windows,
                          std::size_t classes);

struct ClassMetrics {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    double precision = 0.0;  // percent
    double recall = 0.0;     // percent
    bool precision_undefined = false;
    bool recall_undefined = false;
};

struct Metrics {
    std::vector<ClassMetrics> per_class;
    double accuracy = 0.0;  // percent
    double macro_precision = 0.0;
    double macro_recall = 0.0;
};

/// One-vs-rest counts per class; undefined ratios are reported as 0 and flagged.
Metrics metrics(const ConfusionMatrix& cm);

/// 100 * unique queried windows / all target windows (train and test).
double labeled_percentage(std::size_t unique_queries, std::size_t total_windows);

}  // namespace xsa
