#include "aptids/pipeline.hpp"

#include "aptids/error.hpp"
#include "aptids/text_util.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>

namespace aptids::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace files {
std::string class_ranking(std::size_t class_index) {
    return "importance_class_" + std::to_string(class_index) + ".csv";
}
std::string selection_result(SelectionMethod method) {
    return "selection_" + std::string(to_string(method)) + ".json";
}
std::string selected_model(SelectionMethod method) {
    return "model_selected_" + std::string(to_string(method)) + ".json";
}
std::string selected_eval(SelectionMethod method) {
    return "eval_selected_" + std::string(to_string(method)) + ".json";
}
}  // namespace files

namespace {

fs::path artifact(const RunConfig& config, std::string_view name) { return config.output_dir / name; }

void ensure_output_dir(const RunConfig& config) {
    std::error_code ec;
    fs::create_directories(config.output_dir, ec);
    if (ec) throw Error(ErrorKind::io, "cannot create '" + config.output_dir.string() + "': " + ec.message());
    write_text_atomic(artifact(config, files::effective_config), config_to_ini(config));
}

FlowTable load_table(const RunConfig& config, const char* name, const char* producer) {
    const auto path = artifact(config, name);
    if (!fs::exists(path))
        throw Error(ErrorKind::io, "missing '" + path.string() + "'; run '" + producer + "' first");
    return read_flow_table(path);
}

std::vector<std::size_t> histogram(const FlowTable& table) {
    std::vector<std::size_t> counts(table.n_classes(), 0);
    for (int y : table.labels) ++counts[static_cast<std::size_t>(y)];
    return counts;
}

FlowTable weighted(const FlowTable& table) {
    return apply_sample_weights(table, class_weights(table.labels, table.n_classes()));
}

// Trains on the full training split restricted to `features`, scores on test.
metrics::EvalReport fit_and_evaluate(const RunConfig& config, const FlowTable& train, const FlowTable& test,
                                     const std::vector<std::string>& features, const fs::path& model_path) {
    const auto start = std::chrono::steady_clock::now();
    const auto model = selection::train_on_subset(train, features, config.model_params());
    const double train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    gbt::save_model(model, model_path);
    return metrics::timed_evaluate(model, test.select_features(features), train_seconds);
}

SelectOutcome run_shap_selection(const RunConfig& config, const FlowTable& train, const FlowTable& test) {
    const auto ranking_path = artifact(config, files::global_ranking);
    if (!fs::exists(ranking_path))
        throw Error(ErrorKind::io, "missing '" + ranking_path.string() + "'; run 'explain' first");
    const auto ranking = shap::read_ranking_csv(ranking_path);

    FlowTable fit = train;
    FlowTable eval = test;
    if (config.selection.evaluation_scope == selection::EvalScope::validation) {
        auto [inner, held_out] = stratified_split(train, config.validation_split_spec());
        fit = std::move(inner);
        eval = std::move(held_out);
    }
    selection::ForwardOptions options{config.selection.max_candidates, config.selection.patience};
    auto result = selection::forward_select(ranking, fit, eval, config.model_params(), options,
                                            config.selection.evaluation_scope);
    result.method = "shap";
    write_text_atomic(artifact(config, files::selection_result(SelectionMethod::shap)),
                      selection::selection_to_json(result));

    SelectOutcome outcome;
    outcome.method = SelectionMethod::shap;
    outcome.selected = result.selected;
    outcome.trace = std::move(result);
    outcome.report = fit_and_evaluate(config, train, test, outcome.selected,
                                      artifact(config, files::selected_model(SelectionMethod::shap)));
    return outcome;
}

SelectOutcome run_filter_selection(const RunConfig& config, SelectionMethod method, const FlowTable& train,
                                   const FlowTable& test) {
    selection::FilterScores scores;
    switch (method) {
    case SelectionMethod::correlation: scores = selection::correlation_scores(train); break;
    case SelectionMethod::chi_square: scores = selection::chi_square_scores(train); break;
    case SelectionMethod::anova: scores = selection::anova_scores(train); break;
    case SelectionMethod::shap: throw Error(ErrorKind::config, "shap is not a filter method");
    }
    const std::size_t k = std::min(config.selection.k_for_filters, train.n_features());

    SelectOutcome outcome;
    outcome.method = method;
    outcome.selected = selection::filter_select(scores, k);

    json ranked = json::array();
    for (std::size_t i = 0; i < scores.scores.size(); ++i)
        ranked.push_back({{"feature", scores.feature_names[i]}, {"score", scores.scores[i]}});
    json doc = {
        {"method", std::string(to_string(method))},
        {"k", k},
        {"scores", std::move(ranked)},
        {"selected", outcome.selected},
    };
    write_text_atomic(artifact(config, files::selection_result(method)), doc.dump(2) + "\n");

    outcome.report = fit_and_evaluate(config, train, test, outcome.selected,
                                      artifact(config, files::selected_model(method)));
    return outcome;
}

std::string join_features(const std::vector<std::string>& names) {
    std::string out;
    for (std::size_t i = 0; i < names.size(); ++i) out += (i ? ";" : "") + names[i];
    return out;
}

}  // namespace

std::string prepare_report_to_json(const PrepareReport& r) {
    auto by_name = [&r](const auto& values) {
        json obj = json::object();
        for (std::size_t k = 0; k < r.class_names.size(); ++k) obj[r.class_names[k]] = values[k];
        return obj;
    };
    json doc = {
        {"rows_in", r.rows_in},
        {"rows_dropped", r.rows_dropped},
        {"features_kept", r.features_kept},
        {"classes", r.class_names},
        {"class_histogram", by_name(r.class_histogram)},
        {"train_class_histogram", by_name(r.train_class_histogram)},
        {"test_class_histogram", by_name(r.test_class_histogram)},
        {"class_weights", by_name(r.class_weights)},
    };
    return doc.dump(2) + "\n";
}

PrepareReport cmd_prepare(const RunConfig& config) {
    if (config.input_csv.empty()) throw Error(ErrorKind::config, "no input CSV configured");
    ensure_output_dir(config);

    const RawTable raw = load_csv(config.input_csv);
    const FlowTable table = preprocess(raw, config.drop_columns, config.label_column);
    auto [train, test] = stratified_split(table, config.split_spec());
    const ClassWeights cw = class_weights(train.labels, train.n_classes());

    PrepareReport report;
    report.rows_in = raw.row_count();
    report.rows_dropped = raw.row_count() - table.rows();
    report.features_kept = table.n_features();
    report.class_names = table.class_names;
    report.class_histogram = histogram(table);
    report.train_class_histogram = histogram(train);
    report.test_class_histogram = histogram(test);
    report.class_weights = cw.weights;

    write_flow_table(train, artifact(config, files::train_table));
    write_flow_table(test, artifact(config, files::test_table));
    write_text_atomic(artifact(config, files::prepare_report), prepare_report_to_json(report));
    return report;
}

metrics::EvalReport cmd_train(const RunConfig& config) {
    ensure_output_dir(config);
    const FlowTable train = load_table(config, files::train_table, "prepare");
    const FlowTable test = load_table(config, files::test_table, "prepare");

    const auto start = std::chrono::steady_clock::now();
    const auto model = gbt::train(weighted(train), config.model_params());
    const double train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    gbt::save_model(model, artifact(config, files::model));

    auto report = metrics::timed_evaluate(model, test, train_seconds);
    write_text_atomic(artifact(config, files::eval_report), metrics::report_to_json(report));
    write_text_atomic(artifact(config, files::eval_report_csv), metrics::report_to_csv(report));
    return report;
}

ExplainSummary cmd_explain(const RunConfig& config) {
    ensure_output_dir(config);
    const auto model_path = artifact(config, files::model);
    if (!fs::exists(model_path)) throw Error(ErrorKind::io, "missing '" + model_path.string() + "'; run 'train' first");
    const auto model = gbt::load_model(model_path);
    const FlowTable rows = config.explain_rows == "train" ? load_table(config, files::train_table, "prepare")
                                                          : load_table(config, files::test_table, "prepare");
    if (rows.rows() == 0) throw Error(ErrorKind::data, "no rows to explain");

    const auto matrix = shap::tree_shap(model, rows);

    ExplainSummary summary;
    for (std::size_t s = 0; s < matrix.n_samples; ++s) {
        const auto margin = gbt::predict_margin(model, rows.row(s));
        for (std::size_t k = 0; k < matrix.n_classes; ++k) {
            double total = matrix.base_values[k];
            for (std::size_t i = 0; i < matrix.n_features; ++i) total += matrix.at(s, k, i);
            summary.max_additivity_error = std::max(summary.max_additivity_error, std::abs(total - margin[k]));
        }
    }

    shap::write_shap_csv(matrix, artifact(config, files::shap_values));
    shap::write_base_values_json(matrix, artifact(config, files::shap_base_values));
    summary.global = shap::global_importance(matrix);
    shap::write_ranking_csv(summary.global, artifact(config, files::global_ranking));
    for (std::size_t k = 0; k < matrix.n_classes; ++k) {
        summary.per_class.push_back(shap::per_class_importance(matrix, static_cast<int>(k)));
        shap::write_ranking_csv(summary.per_class.back(), artifact(config, files::class_ranking(k)));
    }
    return summary;
}

SelectSummary cmd_select(const RunConfig& config) {
    ensure_output_dir(config);
    const FlowTable train = load_table(config, files::train_table, "prepare");
    const FlowTable test = load_table(config, files::test_table, "prepare");

    std::vector<SelectionMethod> methods = {config.selection.method};
    if (config.selection.compare)
        methods = {SelectionMethod::shap, SelectionMethod::correlation, SelectionMethod::chi_square,
                   SelectionMethod::anova};

    SelectSummary summary;
    for (auto method : methods) {
        auto outcome = method == SelectionMethod::shap ? run_shap_selection(config, train, test)
                                                       : run_filter_selection(config, method, train, test);
        write_text_atomic(artifact(config, files::selected_eval(method)), metrics::report_to_json(outcome.report));
        summary.outcomes.push_back(std::move(outcome));
    }

    if (config.selection.compare) {
        std::string csv = "method,n_features,macro_precision,macro_recall,macro_f1,features\n";
        for (const auto& o : summary.outcomes) {
            csv += std::string(to_string(o.method)) + "," + std::to_string(o.selected.size()) + "," +
                   format_double(o.report.macro.precision) + "," + format_double(o.report.macro.recall) + "," +
                   format_double(o.report.macro.f1) + "," + csv_escape(join_features(o.selected)) + "\n";
        }
        write_text_atomic(artifact(config, files::comparison), csv);
    }
    return summary;
}

void cmd_pipeline(const RunConfig& config, bool resume) {
    ensure_output_dir(config);
    const std::string fingerprint = config_to_ini(config);

    auto run_stage = [&](const char* name, auto&& body) {
        const auto marker = artifact(config, std::string(".stage_") + name + ".done");
        if (resume && fs::exists(marker) && read_text(marker) == fingerprint) return;
        std::error_code ec;
        fs::remove(marker, ec);
        body();
        write_text_atomic(marker, fingerprint);
    };
    run_stage("prepare", [&] { cmd_prepare(config); });
    run_stage("train", [&] { cmd_train(config); });
    run_stage("explain", [&] { cmd_explain(config); });
    run_stage("select", [&] { cmd_select(config); });
}

}  // namespace aptids::pipeline
