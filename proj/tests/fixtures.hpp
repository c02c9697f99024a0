#pragma once

// Synthetic tables shared by the unit and acceptance suites.

#include "aptids/flow_ingest.hpp"
#include "aptids/gbt.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace fixtures {

using aptids::FlowTable;
using aptids::SplitMix64;

inline double gaussian(SplitMix64& rng) {
    // Box-Muller; u1 is kept away from zero.
    const double u1 = (static_cast<double>(rng.next() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

inline FlowTable make_table(std::vector<std::string> feature_names, std::vector<std::string> class_names,
                            std::vector<std::vector<double>> rows, std::vector<int> labels) {
    FlowTable t;
    t.feature_names = std::move(feature_names);
    t.class_names = std::move(class_names);
    for (const auto& r : rows) t.features.insert(t.features.end(), r.begin(), r.end());
    t.labels = std::move(labels);
    t.sample_weights.assign(t.labels.size(), 1.0);
    return t;
}

inline std::vector<std::string> numbered(const std::string& prefix, std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

// 100 rows, two features; class = (x0 + x1 > 1), margin kept away from the boundary.
inline FlowTable separable_two_class(std::uint64_t seed = 7) {
    SplitMix64 rng(seed);
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    while (rows.size() < 100) {
        const double a = rng.uniform() * 2.0;
        const double b = rng.uniform() * 2.0;
        if (std::abs(a + b - 2.0) < 0.2) continue;
        rows.push_back({a, b});
        labels.push_back(a + b > 2.0 ? 1 : 0);
    }
    return make_table({"f0", "f1"}, {"neg", "pos"}, rows, labels);
}

// Gaussian blobs: class k centred at a per-class random point, plus noise dims.
inline FlowTable blobs(std::size_t n, std::size_t n_features, std::size_t n_classes, std::uint64_t seed,
                       double spread = 1.0) {
    SplitMix64 rng(seed);
    std::vector<std::vector<double>> centres(n_classes, std::vector<double>(n_features));
    for (auto& c : centres)
        for (auto& v : c) v = (rng.uniform() - 0.5) * 6.0;
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<int>(i % n_classes);
        std::vector<double> r(n_features);
        for (std::size_t f = 0; f < n_features; ++f)
            r[f] = centres[static_cast<std::size_t>(k)][f] + spread * gaussian(rng);
        // A few repeated values exercise the distinct-boundary logic.
        if (n_features > 1 && i % 5 == 0) r[1] = std::round(r[1]);
        rows.push_back(std::move(r));
        labels.push_back(k);
    }
    return make_table(numbered("f", n_features), numbered("class", n_classes), rows, labels);
}

// Six imbalanced classes (largest:smallest = 500:1). The first five features
// carry the class signal; the remaining ones are pure noise.
struct Planted {
    FlowTable table;
    std::vector<std::string> informative;
};

inline Planted planted(std::uint64_t seed, std::size_t n_noise = 15) {
    const std::vector<std::size_t> counts = {10000, 800, 300, 120, 50, 20};
    // Class codes over the five informative features; every pair of classes
    // differs in at least two coordinates.
    const std::vector<std::vector<double>> codes = {
        {0, 0, 0, 0, 0}, {4, 4, 0, 0, 0}, {0, 4, 4, 0, 0},
        {0, 0, 4, 4, 0}, {0, 0, 0, 4, 4}, {4, 0, 0, 0, 4},
    };
    SplitMix64 rng(seed);
    std::vector<std::string> names;
    Planted p;
    for (std::size_t i = 0; i < 5; ++i) {
        names.push_back("signal_" + std::to_string(i));
        p.informative.push_back(names.back());
    }
    for (std::size_t i = 0; i < n_noise; ++i) names.push_back("noise_" + std::to_string(i));

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        for (std::size_t i = 0; i < counts[k]; ++i) {
            std::vector<double> r;
            for (std::size_t f = 0; f < 5; ++f) r.push_back(codes[k][f] + 0.4 * gaussian(rng));
            for (std::size_t f = 0; f < n_noise; ++f) r.push_back(gaussian(rng));
            rows.push_back(std::move(r));
            labels.push_back(static_cast<int>(k));
        }
    }
    p.table = make_table(names, {"c0_normal", "c1", "c2", "c3", "c4", "c5"}, rows, labels);
    return p;
}

// Writes `table` as a CICFlowMeter-shaped CSV: the six identifier columns,
// the features, then a Label column holding class names.
inline void write_flow_csv(const FlowTable& table, const std::filesystem::path& path) {
    std::ofstream out(path);
    out << "Flow ID,Src IP,Src Port,Dst IP,Dst Port,Timestamp";
    for (const auto& f : table.feature_names) out << "," << f;
    out << ",Label\n";
    out.precision(17);
    for (std::size_t r = 0; r < table.rows(); ++r) {
        out << "flow" << r << ",10.0.0." << r % 250 << "," << 1000 + r % 5000 << ",192.168.1.1,443,"
            << "2021-01-01 00:00:" << r % 60;
        for (std::size_t f = 0; f < table.n_features(); ++f) out << "," << table.at(r, f);
        out << "," << table.class_names[static_cast<std::size_t>(table.labels[r])] << "\n";
    }
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("aptids_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace fixtures
