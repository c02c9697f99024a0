#pragma once

#include "aptids/flow_ingest.hpp"
#include "aptids/gbt.hpp"
#include "aptids/metrics.hpp"
#include "aptids/selection.hpp"
#include "aptids/shap.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace aptids::pipeline {

enum class SelectionMethod { shap, correlation, chi_square, anova };

std::string_view to_string(SelectionMethod method);
SelectionMethod selection_method_from_string(std::string_view text);

struct SelectionConfig {
    SelectionMethod method = SelectionMethod::shap;
    std::optional<std::size_t> max_candidates;
    std::optional<std::size_t> patience;
    selection::EvalScope evaluation_scope = selection::EvalScope::validation;
    // Share of the training split held out when evaluation_scope is validation.
    double validation_fraction = 0.25;
    std::size_t k_for_filters = 12;
    // Run all four methods and write the comparison table.
    bool compare = false;
};

struct RunConfig {
    std::filesystem::path input_csv;
    std::vector<std::string> drop_columns = default_drop_columns();
    std::string label_column = "Label";
    double train_fraction = 0.8;
    bool stratified = true;
    // Master seed; each stage derives its own by a fixed offset.
    std::uint64_t seed = 42;
    gbt::Hyperparams hyperparams;
    SelectionConfig selection;
    // Which split the explain stage attributes: "test" or "train".
    std::string explain_rows = "test";
    std::filesystem::path output_dir = "aptids_out";

    SplitSpec split_spec() const { return {train_fraction, seed, stratified}; }
    SplitSpec validation_split_spec() const { return {1.0 - selection.validation_fraction, seed + 1, true}; }
    gbt::Hyperparams model_params() const {
        auto hp = hyperparams;
        hp.seed = seed + 2;
        return hp;
    }
};

// INI text with [run], [input], [split], [model], [selection], [explain].
// Keys absent from the text keep their value from `base`.
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
std::string config_to_ini(const RunConfig& config);

// Artifact names inside output_dir.
namespace files {
inline constexpr const char* effective_config = "effective_config.ini";
inline constexpr const char* train_table = "train.flows";
inline constexpr const char* test_table = "test.flows";
inline constexpr const char* prepare_report = "prepare_report.json";
inline constexpr const char* model = "model.json";
inline constexpr const char* eval_report = "eval_report.json";
inline constexpr const char* eval_report_csv = "eval_report.csv";
inline constexpr const char* shap_values = "shap_values.csv";
inline constexpr const char* shap_base_values = "shap_base_values.json";
inline constexpr const char* global_ranking = "importance_global.csv";
inline constexpr const char* comparison = "comparison.csv";
std::string class_ranking(std::size_t class_index);
std::string selection_result(SelectionMethod method);
std::string selected_model(SelectionMethod method);
std::string selected_eval(SelectionMethod method);
}  // namespace files

struct PrepareReport {
    std::size_t rows_in = 0;
    std::size_t rows_dropped = 0;
    std::size_t features_kept = 0;
    std::vector<std::string> class_names;
    std::vector<std::size_t> class_histogram;
    std::vector<std::size_t> train_class_histogram;
    std::vector<std::size_t> test_class_histogram;
    std::vector<double> class_weights;
};

struct ExplainSummary {
    shap::ImportanceRanking global;
    std::vector<shap::ImportanceRanking> per_class;
    double max_additivity_error = 0.0;
};

struct SelectOutcome {
    SelectionMethod method = SelectionMethod::shap;
    std::vector<std::string> selected;
    std::optional<selection::SelectionResult> trace;
    metrics::EvalReport report;
};

struct SelectSummary {
    std::vector<SelectOutcome> outcomes;
};

std::string prepare_report_to_json(const PrepareReport& report);

PrepareReport cmd_prepare(const RunConfig& config);
metrics::EvalReport cmd_train(const RunConfig& config);
ExplainSummary cmd_explain(const RunConfig& config);
SelectSummary cmd_select(const RunConfig& config);

// prepare -> train -> explain -> select. With resume, a stage whose completion
// marker records the same effective config is skipped.
void cmd_pipeline(const RunConfig& config, bool resume = false);

}  // namespace aptids::pipeline
