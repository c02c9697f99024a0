#include "aptids/metrics.hpp"

#include "aptids/error.hpp"
#include "aptids/text_util.hpp"

#include <json.hpp>

#include <chrono>
#include <numeric>

namespace aptids::metrics {

namespace {

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace

std::uint64_t ConfusionMatrix::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred, std::size_t n_classes) {
    if (y_true.size() != y_pred.size())
        throw Error(ErrorKind::data, "label sequences differ in length (" + std::to_string(y_true.size()) +
                                         " vs " + std::to_string(y_pred.size()) + ")");
    ConfusionMatrix cm;
    cm.n_classes = n_classes;
    cm.counts.assign(n_classes * n_classes, 0);
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i];
        const int p = y_pred[i];
        if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= n_classes || static_cast<std::size_t>(p) >= n_classes)
            throw Error(ErrorKind::data, "class index out of range at position " + std::to_string(i));
        ++cm.counts[static_cast<std::size_t>(t) * n_classes + static_cast<std::size_t>(p)];
    }
    return cm;
}

std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& cm) {
    const std::size_t k = cm.n_classes;
    std::vector<ClassMetrics> out(k);
    for (std::size_t c = 0; c < k; ++c) {
        std::uint64_t row = 0;
        std::uint64_t col = 0;
        for (std::size_t j = 0; j < k; ++j) {
            row += cm.at(c, j);
            col += cm.at(j, c);
        }
        const auto tp = static_cast<double>(cm.at(c, c));
        const double fp = static_cast<double>(col) - tp;
        const double fn = static_cast<double>(row) - tp;
        auto& m = out[c];
        m.precision = ratio(tp, tp + fp);
        m.recall = ratio(tp, tp + fn);
        m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
        m.support = row;
    }
    return out;
}

Aggregate aggregate(const ConfusionMatrix& cm, std::span<const ClassMetrics> per_class) {
    if (per_class.empty()) throw Error(ErrorKind::data, "no classes to aggregate");
    const std::uint64_t n = cm.total();
    if (n == 0) throw Error(ErrorKind::data, "cannot aggregate metrics over zero samples");

    Aggregate agg;
    std::uint64_t correct = 0;
    for (std::size_t c = 0; c < cm.n_classes; ++c) correct += cm.at(c, c);
    agg.accuracy = static_cast<double>(correct) / static_cast<double>(n);

    const auto k = static_cast<double>(per_class.size());
    for (const auto& m : per_class) {
        agg.macro.precision += m.precision;
        agg.macro.recall += m.recall;
        agg.macro.f1 += m.f1;
        const double w = static_cast<double>(m.support) / static_cast<double>(n);
        agg.weighted.precision += w * m.precision;
        agg.weighted.recall += w * m.recall;
        agg.weighted.f1 += w * m.f1;
    }
    agg.macro.precision /= k;
    agg.macro.recall /= k;
    agg.macro.f1 /= k;
    return agg;
}

EvalReport evaluate(std::span<const int> y_true, std::span<const int> y_pred, std::size_t n_classes,
                    std::vector<std::string> class_names) {
    EvalReport report;
    report.confusion = confusion(y_true, y_pred, n_classes);
    report.confusion.class_names = class_names;
    report.class_names = std::move(class_names);
    report.per_class = per_class_metrics(report.confusion);
    const auto agg = aggregate(report.confusion, report.per_class);
    report.accuracy = agg.accuracy;
    report.macro = agg.macro;
    report.weighted = agg.weighted;
    return report;
}

EvalReport timed_evaluate(const gbt::TreeEnsemble& ens, const FlowTable& test, double train_seconds) {
    if (test.feature_names != ens.feature_names)
        throw Error(ErrorKind::schema, "test table features do not match the model's features");
    if (test.n_classes() != ens.n_classes)
        throw Error(ErrorKind::schema, "test table class count does not match the model");

    std::vector<int> predicted(test.rows());
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t r = 0; r < test.rows(); ++r) predicted[r] = gbt::predict_class(ens, test.row(r));
    const auto stop = std::chrono::steady_clock::now();

    EvalReport report = evaluate(test.labels, predicted, ens.n_classes, ens.class_names);
    report.n_features = ens.n_features();
    report.timing.train_seconds = train_seconds;
    // Clock granularity floor so the field is always strictly positive.
    report.timing.predict_seconds = std::max(std::chrono::duration<double>(stop - start).count(), 1e-9);
    return report;
}

std::string report_to_json(const EvalReport& report, bool include_timing) {
    using nlohmann::json;
    auto averages = [](const Averages& a) {
        return json{{"precision", a.precision}, {"recall", a.recall}, {"f1", a.f1}};
    };
    json classes = json::array();
    for (std::size_t c = 0; c < report.per_class.size(); ++c) {
        const auto& m = report.per_class[c];
        classes.push_back({
            {"class", c < report.class_names.size() ? report.class_names[c] : std::to_string(c)},
            {"precision", m.precision},
            {"recall", m.recall},
            {"f1", m.f1},
            {"support", m.support},
        });
    }
    json matrix = json::array();
    for (std::size_t t = 0; t < report.confusion.n_classes; ++t) {
        json row = json::array();
        for (std::size_t p = 0; p < report.confusion.n_classes; ++p) row.push_back(report.confusion.at(t, p));
        matrix.push_back(std::move(row));
    }
    json doc = {
        {"n_features", report.n_features},
        {"n_samples", report.confusion.total()},
        {"accuracy", report.accuracy},
        {"per_class", std::move(classes)},
        {"macro", averages(report.macro)},
        {"weighted", averages(report.weighted)},
        {"confusion_matrix", std::move(matrix)},
    };
    if (include_timing)
        doc["timing"] = {{"train_seconds", report.timing.train_seconds},
                         {"predict_seconds", report.timing.predict_seconds}};
    return doc.dump(2) + "\n";
}

std::string report_to_csv(const EvalReport& report) {
    std::string out = "class,precision,recall,f1,support\n";
    for (std::size_t c = 0; c < report.per_class.size(); ++c) {
        const auto& m = report.per_class[c];
        out += csv_escape(c < report.class_names.size() ? report.class_names[c] : std::to_string(c)) + "," +
               format_double(m.precision) + "," + format_double(m.recall) + "," + format_double(m.f1) + "," +
               std::to_string(m.support) + "\n";
    }
    out += "macro," + format_double(report.macro.precision) + "," + format_double(report.macro.recall) + "," +
           format_double(report.macro.f1) + "," + std::to_string(report.confusion.total()) + "\n";
    out += "weighted," + format_double(report.weighted.precision) + "," + format_double(report.weighted.recall) +
           "," + format_double(report.weighted.f1) + "," + std::to_string(report.confusion.total()) + "\n";
    return out;
}

}  // namespace aptids::metrics
