#pragma once

#include "aptids/flow_ingest.hpp"
#include "aptids/gbt.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace aptids::shap {

// Attributions of the per-class margin: values is [sample][class][feature].
struct ShapMatrix {
    std::size_t n_samples = 0;
    std::size_t n_classes = 0;
    std::size_t n_features = 0;
    std::vector<double> values;
    std::vector<double> base_values;
    std::vector<std::string> feature_names;
    std::vector<std::string> class_names;

    double at(std::size_t s, std::size_t k, std::size_t i) const {
        return values[(s * n_classes + k) * n_features + i];
    }
    double& at(std::size_t s, std::size_t k, std::size_t i) {
        return values[(s * n_classes + k) * n_features + i];
    }
};

struct ImportanceRanking {
    enum class Scope { global, per_class };

    std::vector<std::pair<std::string, double>> entries;
    Scope scope = Scope::global;
    int class_index = -1;
};

// Tree value when only the features flagged in `known` are observed; unknown
// splits average their children by cover.
double conditional_expectation(const gbt::Tree& tree, std::span<const double> x,
                               const std::vector<bool>& known);

// Cover-weighted mean over the leaves: the no-feature expectation.
double expected_value(const gbt::Tree& tree);

struct ShapleyValues {
    std::vector<double> phi;
    double base_value = 0.0;
};

inline constexpr std::size_t kMaxBruteForceFeatures = 20;

// Exhaustive subset enumeration over every class-k tree. Exponential in the
// feature count; refuses more than kMaxBruteForceFeatures.
ShapleyValues brute_force_shapley(const gbt::TreeEnsemble& ens, std::span<const double> x, int class_index);

// Polynomial-time path-dependent TreeSHAP for one tree; adds into phi.
void tree_shap_single(const gbt::Tree& tree, std::span<const double> x, std::span<double> phi);

ShapMatrix tree_shap(const gbt::TreeEnsemble& ens, const FlowTable& table);

// Sum over classes of each class's mean |phi|.
ImportanceRanking global_importance(const ShapMatrix& shap);

ImportanceRanking per_class_importance(const ShapMatrix& shap, int class_index);

// Descending score, ties by feature name.
void sort_ranking(std::vector<std::pair<std::string, double>>& entries);

// Long-format export: sample_index,class,feature,phi
void write_shap_csv(const ShapMatrix& shap, const std::filesystem::path& path);
void write_base_values_json(const ShapMatrix& shap, const std::filesystem::path& path);

// rank,feature,score
void write_ranking_csv(const ImportanceRanking& ranking, const std::filesystem::path& path);
ImportanceRanking read_ranking_csv(const std::filesystem::path& path);

}  // namespace aptids::shap
