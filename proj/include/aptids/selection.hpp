#pragma once

#include "aptids/flow_ingest.hpp"
#include "aptids/gbt.hpp"
#include "aptids/shap.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace aptids::selection {

enum class EvalScope { validation, test };

std::string_view to_string(EvalScope scope);
EvalScope eval_scope_from_string(std::string_view text);

struct TrialRecord {
    std::string feature;
    double f1 = 0.0;
    bool accepted = false;
};

struct SelectionResult {
    std::string method = "shap";
    EvalScope evaluation_scope = EvalScope::validation;
    std::vector<TrialRecord> trace;
    std::vector<std::string> selected;
    double f1_best = 0.0;
};

struct ForwardOptions {
    // Only the first max_candidates ranked features are tried.
    std::optional<std::size_t> max_candidates;
    // Stop after this many consecutive rejections. Unset visits every candidate.
    std::optional<std::size_t> patience;
};

// Scores a candidate feature subset (listed in acceptance order).
using SubsetScorer = std::function<double(const std::vector<std::string>&)>;

// SHAP-ranked forward selection: a candidate joins the subset only if the
// subset's macro-F1 strictly beats the best seen so far.
SelectionResult forward_select(const std::vector<std::string>& ranked_features, const SubsetScorer& score,
                               const ForwardOptions& options = {});

// Retrains a fresh ensemble per candidate (with per-class balancing weights
// computed on `train`) and scores macro-F1 on `eval`.
SelectionResult forward_select(const shap::ImportanceRanking& ranking, const FlowTable& train,
                               const FlowTable& eval, const gbt::Hyperparams& hp,
                               const ForwardOptions& options = {},
                               EvalScope scope = EvalScope::validation);

// Fresh model on `train` restricted to `features`, balanced by class weights.
gbt::TreeEnsemble train_on_subset(const FlowTable& train, const std::vector<std::string>& features,
                                  const gbt::Hyperparams& hp);

enum class FilterMethod { correlation, chi_square, anova };

std::string_view to_string(FilterMethod method);

struct FilterScores {
    FilterMethod method = FilterMethod::correlation;
    std::vector<std::string> feature_names;
    std::vector<double> scores;
};

// Score given to a perfectly separating feature under ANOVA.
inline constexpr double kAnovaSeparationSentinel = std::numeric_limits<double>::max();

FilterScores correlation_scores(const FlowTable& table);
FilterScores chi_square_scores(const FlowTable& table);
FilterScores anova_scores(const FlowTable& table);

std::vector<std::string> filter_select(const FilterScores& scores, std::size_t k);

std::string selection_to_json(const SelectionResult& result);
SelectionResult selection_from_json(std::string_view text);

}  // namespace aptids::selection
