#include "aptids/selection.hpp"

#include "aptids/error.hpp"
#include "aptids/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <set>

namespace aptids::selection {

std::string_view to_string(EvalScope scope) {
    return scope == EvalScope::validation ? "validation" : "test";
}

EvalScope eval_scope_from_string(std::string_view text) {
    if (text == "validation") return EvalScope::validation;
    if (text == "test") return EvalScope::test;
    throw Error(ErrorKind::config, "unknown evaluation scope '" + std::string(text) + "'");
}

SelectionResult forward_select(const std::vector<std::string>& ranked_features, const SubsetScorer& score,
                               const ForwardOptions& options) {
    if (ranked_features.empty()) throw Error(ErrorKind::data, "empty feature ranking");
    if (std::set<std::string>(ranked_features.begin(), ranked_features.end()).size() != ranked_features.size())
        throw Error(ErrorKind::data, "feature ranking lists a feature twice");
    const std::size_t n = std::min(ranked_features.size(), options.max_candidates.value_or(ranked_features.size()));

    SelectionResult result;
    std::size_t rejections_in_a_row = 0;
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<std::string> candidate = result.selected;
        candidate.push_back(ranked_features[j]);
        const double f1 = score(candidate);
        const bool accepted = f1 > result.f1_best;
        result.trace.push_back({ranked_features[j], f1, accepted});
        if (accepted) {
            result.f1_best = f1;
            result.selected = std::move(candidate);
            rejections_in_a_row = 0;
        } else if (options.patience && ++rejections_in_a_row >= *options.patience) {
            break;
        }
    }
    return result;
}

gbt::TreeEnsemble train_on_subset(const FlowTable& train, const std::vector<std::string>& features,
                                  const gbt::Hyperparams& hp) {
    FlowTable reduced = train.select_features(features);
    reduced = apply_sample_weights(reduced, class_weights(reduced.labels, reduced.n_classes()));
    return gbt::train(reduced, hp);
}

SelectionResult forward_select(const shap::ImportanceRanking& ranking, const FlowTable& train,
                               const FlowTable& eval, const gbt::Hyperparams& hp,
                               const ForwardOptions& options, EvalScope scope) {
    if (ranking.entries.empty()) throw Error(ErrorKind::data, "empty feature ranking");
    if (train.feature_names != eval.feature_names || train.class_names != eval.class_names)
        throw Error(ErrorKind::schema, "train and evaluation tables have different schemas");
    std::vector<std::string> ranked;
    for (const auto& [name, score] : ranking.entries) {
        if (!train.feature_index(name))
            throw Error(ErrorKind::schema, "ranked feature '" + name + "' is not in the training table");
        ranked.push_back(name);
    }
    if (ranked.size() != train.n_features())
        throw Error(ErrorKind::schema, "ranking covers " + std::to_string(ranked.size()) + " of " +
                                           std::to_string(train.n_features()) + " features");

    auto score = [&](const std::vector<std::string>& subset) {
        const auto model = train_on_subset(train, subset, hp);
        const FlowTable eval_reduced = eval.select_features(subset);
        return metrics::timed_evaluate(model, eval_reduced, 0.0).macro.f1;
    };
    SelectionResult result = forward_select(ranked, score, options);
    result.evaluation_scope = scope;
    return result;
}

std::string selection_to_json(const SelectionResult& result) {
    using nlohmann::json;
    json trace = json::array();
    for (const auto& t : result.trace)
        trace.push_back({{"feature", t.feature}, {"f1", t.f1}, {"accepted", t.accepted}});
    json doc = {
        {"method", result.method},
        {"evaluation_scope", std::string(to_string(result.evaluation_scope))},
        {"trace", std::move(trace)},
        {"selected", result.selected},
        {"f1_best", result.f1_best},
    };
    return doc.dump(2) + "\n";
}

SelectionResult selection_from_json(std::string_view text) {
    using nlohmann::json;
    try {
        const json doc = json::parse(text);
        SelectionResult result;
        result.method = doc.at("method").get<std::string>();
        result.evaluation_scope = eval_scope_from_string(doc.at("evaluation_scope").get<std::string>());
        for (const auto& t : doc.at("trace"))
            result.trace.push_back(
                {t.at("feature").get<std::string>(), t.at("f1").get<double>(), t.at("accepted").get<bool>()});
        result.selected = doc.at("selected").get<std::vector<std::string>>();
        result.f1_best = doc.at("f1_best").get<double>();
        return result;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::parse, std::string("malformed selection document: ") + e.what());
    }
}

}  // namespace aptids::selection
