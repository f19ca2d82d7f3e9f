#include "xsadapt/metrics.hpp"

#include <numeric>

#include "xsadapt/errors.hpp"

namespace xsa {

std::size_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

void ConfusionMatrix::add(int truth, int predicted) {
    if (truth < 0 || predicted < 0 || static_cast<std::size_t>(truth) >= classes ||
        static_cast<std::size_t>(predicted) >= classes) {
        throw DataError("confusion: class index out of range");
    }
    ++at(static_cast<std::size_t>(truth), static_cast<std::size_t>(predicted));
}

ConfusionMatrix confusion(std::span<const Prediction> predictions, std::span<const Window> windows,
                          std::size_t classes) {
    if (predictions.size() != windows.size()) throw DimensionError("confusion: size mismatch");
    ConfusionMatrix cm(classes);
    for (std::size_t i = 0; i < windows.size(); ++i) cm.add(windows[i].label, predictions[i].label);
    return cm;
}

Metrics metrics(const ConfusionMatrix& cm) {
    const std::size_t total = cm.total();
    if (total == 0) throw DataError("metrics: empty confusion matrix");
    const std::size_t k = cm.classes;
    Metrics m;
    std::size_t correct = 0;
    for (std::size_t c = 0; c < k; ++c) {
        ClassMetrics cmx;
        cmx.tp = cm.at(c, c);
        for (std::size_t o = 0; o < k; ++o) {
            if (o == c) continue;
            cmx.fp += cm.at(o, c);
            cmx.fn += cm.at(c, o);
        }
        cmx.tn = total - cmx.tp - cmx.fp - cmx.fn;
        if (cmx.tp + cmx.fp == 0) {
            cmx.precision_undefined = true;
        } else {
            cmx.precision = 100.0 * static_cast<double>(cmx.tp) / static_cast<double>(cmx.tp + cmx.fp);
        }
        if (cmx.tp + cmx.fn == 0) {
            cmx.recall_undefined = true;
        } else {
            cmx.recall = 100.0 * static_cast<double>(cmx.tp) / static_cast<double>(cmx.tp + cmx.fn);
        }
        correct += cmx.tp;
        m.macro_precision += cmx.precision;
        m.macro_recall += cmx.recall;
        m.per_class.push_back(cmx);
    }
    m.macro_precision /= static_cast<double>(k);
    m.macro_recall /= static_cast<double>(k);
    m.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(total);
    return m;
}

double labeled_percentage(std::size_t unique_queries, std::size_t total_windows) {
    if (total_windows == 0) throw DataError("labeled_percentage: empty target set");
    return 100.0 * static_cast<double>(unique_queries) / static_cast<double>(total_windows);
}

}  // namespace xsa
