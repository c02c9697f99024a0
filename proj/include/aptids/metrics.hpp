#pragma once

#include "aptids/flow_ingest.hpp"
#include "aptids/gbt.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace aptids::metrics {

// Rows are the true class, columns the prediction.
struct ConfusionMatrix {
    std::size_t n_classes = 0;
    std::vector<std::uint64_t> counts;
    std::vector<std::string> class_names;

    std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts[truth * n_classes + pred]; }
    std::uint64_t total() const;
};

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::uint64_t support = 0;
};

struct Averages {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct Aggregate {
    double accuracy = 0.0;
    Averages macro;
    Averages weighted;
};

struct Timing {
    double train_seconds = 0.0;
    double predict_seconds = 0.0;
};

struct EvalReport {
    std::vector<std::string> class_names;
    ConfusionMatrix confusion;
    double accuracy = 0.0;
    std::vector<ClassMetrics> per_class;
    Averages macro;
    Averages weighted;
    Timing timing;
    std::size_t n_features = 0;
};

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred, std::size_t n_classes);

// One-vs-rest per class. Any 0/0 ratio is defined as 0.
std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& cm);

Aggregate aggregate(const ConfusionMatrix& cm, std::span<const ClassMetrics> per_class);

EvalReport evaluate(std::span<const int> y_true, std::span<const int> y_pred, std::size_t n_classes,
                    std::vector<std::string> class_names = {});

// Predicts every row of `test`, timing the prediction pass.
EvalReport timed_evaluate(const gbt::TreeEnsemble& ens, const FlowTable& test, double train_seconds);

// include_timing=false gives a document that is stable across reruns.
std::string report_to_json(const EvalReport& report, bool include_timing = true);
std::string report_to_csv(const EvalReport& report);

}  // namespace aptids::metrics
