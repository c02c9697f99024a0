#pragma once

// Naive per-sample reference for the metric suite (test-only).

#include <cstddef>
#include <vector>

namespace oracle {

struct NaiveMetrics {
    std::vector<std::vector<std::size_t>> counts;  // [truth][pred]
    std::vector<double> precision, recall, f1;
    std::vector<std::size_t> support;
    double accuracy = 0, macro_p = 0, macro_r = 0, macro_f1 = 0, weighted_p = 0, weighted_r = 0, weighted_f1 = 0;
};

inline double ratio(double a, double b) { return b == 0 ? 0.0 : a / b; }

inline NaiveMetrics naive_metrics(const std::vector<int>& y, const std::vector<int>& p, std::size_t k) {
    NaiveMetrics m;
    m.counts.assign(k, std::vector<std::size_t>(k, 0));
    for (std::size_t i = 0; i < y.size(); ++i) m.counts[static_cast<std::size_t>(y[i])][static_cast<std::size_t>(p[i])]++;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < y.size(); ++i) correct += y[i] == p[i];
    m.accuracy = ratio(static_cast<double>(correct), static_cast<double>(y.size()));
    for (std::size_t c = 0; c < k; ++c) {
        double tp = 0, fp = 0, fn = 0;
        std::size_t sup = 0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const bool is_c = static_cast<std::size_t>(y[i]) == c, said_c = static_cast<std::size_t>(p[i]) == c;
            tp += is_c && said_c;
            fp += !is_c && said_c;
            fn += is_c && !said_c;
            sup += is_c;
        }
        const double pr = ratio(tp, tp + fp), rc = ratio(tp, tp + fn);
        m.precision.push_back(pr);
        m.recall.push_back(rc);
        m.f1.push_back(ratio(2 * pr * rc, pr + rc));
        m.support.push_back(sup);
    }
    const double n = static_cast<double>(y.size());
    for (std::size_t c = 0; c < k; ++c) {
        m.macro_p += m.precision[c] / static_cast<double>(k);
        m.macro_r += m.recall[c] / static_cast<double>(k);
        m.macro_f1 += m.f1[c] / static_cast<double>(k);
        const double w = ratio(static_cast<double>(m.support[c]), n);
        m.weighted_p += w * m.precision[c];
        m.weighted_r += w * m.recall[c];
        m.weighted_f1 += w * m.f1[c];
    }
    return m;
}

}  // namespace oracle
