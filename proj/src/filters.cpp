#include "aptids/selection.hpp"

#include "aptids/error.hpp"

#include <algorithm>
#include <cmath>

namespace aptids::selection {

std::string_view to_string(FilterMethod method) {
    switch (method) {
    case FilterMethod::correlation: return "correlation";
    case FilterMethod::chi_square: return "chi_square";
    case FilterMethod::anova: return "anova";
    }
    return "unknown";
}

namespace {

void require_rows(const FlowTable& table, std::size_t n) {
    if (table.rows() < n)
        throw Error(ErrorKind::data, "filter scoring needs at least " + std::to_string(n) + " rows");
}

std::vector<std::size_t> class_counts(const FlowTable& table) {
    std::vector<std::size_t> counts(table.n_classes(), 0);
    for (int y : table.labels) ++counts[static_cast<std::size_t>(y)];
    return counts;
}

}  // namespace

FilterScores correlation_scores(const FlowTable& table) {
    require_rows(table, 2);
    const std::size_t n = table.rows();
    const auto nd = static_cast<double>(n);

    double label_mean = 0.0;
    for (int y : table.labels) label_mean += y;
    label_mean /= nd;
    double label_ss = 0.0;
    for (int y : table.labels) label_ss += (y - label_mean) * (y - label_mean);

    FilterScores out{FilterMethod::correlation, table.feature_names, {}};
    out.scores.resize(table.n_features());
    for (std::size_t f = 0; f < table.n_features(); ++f) {
        double mean = 0.0;
        for (std::size_t r = 0; r < n; ++r) mean += table.at(r, f);
        mean /= nd;
        double ss = 0.0;
        double cross = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            const double d = table.at(r, f) - mean;
            ss += d * d;
            cross += d * (table.labels[r] - label_mean);
        }
        // Zero-variance feature or label: no linear association.
        out.scores[f] = (ss > 0.0 && label_ss > 0.0) ? std::abs(cross / std::sqrt(ss * label_ss)) : 0.0;
    }
    return out;
}

FilterScores chi_square_scores(const FlowTable& table) {
    require_rows(table, 2);
    const std::size_t n = table.rows();
    const std::size_t k = table.n_classes();
    const auto counts = class_counts(table);

    FilterScores out{FilterMethod::chi_square, table.feature_names, {}};
    out.scores.resize(table.n_features());
    std::vector<double> observed(k);
    for (std::size_t f = 0; f < table.n_features(); ++f) {
        double lo = table.at(0, f);
        double hi = lo;
        for (std::size_t r = 1; r < n; ++r) {
            lo = std::min(lo, table.at(r, f));
            hi = std::max(hi, table.at(r, f));
        }
        const double range = hi - lo;
        std::fill(observed.begin(), observed.end(), 0.0);
        double total = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            const double scaled = range > 0.0 ? (table.at(r, f) - lo) / range : 0.0;
            observed[static_cast<std::size_t>(table.labels[r])] += scaled;
            total += scaled;
        }
        double chi2 = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            const double expected = static_cast<double>(counts[c]) / static_cast<double>(n) * total;
            if (expected > 0.0) chi2 += (observed[c] - expected) * (observed[c] - expected) / expected;
        }
        out.scores[f] = chi2;
    }
    return out;
}

FilterScores anova_scores(const FlowTable& table) {
    const std::size_t n = table.rows();
    const std::size_t k = table.n_classes();
    const auto counts = class_counts(table);
    std::vector<std::size_t> present;
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 1)
            throw Error(ErrorKind::data, "class '" + table.class_names[c] + "' has a single sample; ANOVA needs two");
        if (counts[c] > 0) present.push_back(c);
    }
    const std::size_t groups = present.size();
    if (groups < 2 || n <= groups) throw Error(ErrorKind::data, "ANOVA needs at least two classes with samples");

    FilterScores out{FilterMethod::anova, table.feature_names, {}};
    out.scores.resize(table.n_features());
    std::vector<double> sum(k), lo(k), hi(k);
    for (std::size_t f = 0; f < table.n_features(); ++f) {
        std::fill(sum.begin(), sum.end(), 0.0);
        std::fill(lo.begin(), lo.end(), std::numeric_limits<double>::infinity());
        std::fill(hi.begin(), hi.end(), -std::numeric_limits<double>::infinity());
        double grand = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            const auto c = static_cast<std::size_t>(table.labels[r]);
            const double v = table.at(r, f);
            sum[c] += v;
            grand += v;
            lo[c] = std::min(lo[c], v);
            hi[c] = std::max(hi[c], v);
        }
        grand /= static_cast<double>(n);
        std::vector<double> mean(k, 0.0);
        for (std::size_t c : present) mean[c] = sum[c] / static_cast<double>(counts[c]);

        double between = 0.0;
        for (std::size_t c : present) between += static_cast<double>(counts[c]) * (mean[c] - grand) * (mean[c] - grand);
        double within = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            const auto c = static_cast<std::size_t>(table.labels[r]);
            if (lo[c] == hi[c]) continue;  // constant within the class
            const double d = table.at(r, f) - mean[c];
            within += d * d;
        }
        // Classes whose values coincide everywhere: no between-class spread.
        bool all_constant_same = true;
        for (std::size_t c : present)
            if (lo[c] != hi[c] || lo[c] != lo[present.front()]) all_constant_same = false;
        if (all_constant_same) between = 0.0;

        if (within == 0.0) {
            out.scores[f] = between > 0.0 ? kAnovaSeparationSentinel : 0.0;
        } else {
            out.scores[f] = (between / static_cast<double>(groups - 1)) /
                            (within / static_cast<double>(n - groups));
        }
    }
    return out;
}

std::vector<std::string> filter_select(const FilterScores& scores, std::size_t k) {
    if (k == 0 || k > scores.scores.size())
        throw Error(ErrorKind::config, "k=" + std::to_string(k) + " outside 1.." + std::to_string(scores.scores.size()));
    std::vector<std::pair<std::string, double>> entries;
    for (std::size_t i = 0; i < scores.scores.size(); ++i) entries.emplace_back(scores.feature_names[i], scores.scores[i]);
    shap::sort_ranking(entries);
    std::vector<std::string> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(entries[i].first);
    return out;
}

}  // namespace aptids::selection
