// aptids: flow-feature APT phase classifier with SHAP-ranked feature selection.
//
//   aptids prepare  --config run.ini
//   aptids train    --config run.ini
//   aptids explain  --config run.ini
//   aptids select   --config run.ini [--method anova --k 12]
//   aptids pipeline --input flows.csv --output-dir out [--paper-faithful]

#include "aptids/error.hpp"
#include "aptids/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

std::string one_line(std::string text) {
    for (char& c : text)
        if (c == '\n' || c == '\r') c = ' ';
    std::string out;
    for (char c : text) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

void report_error(std::string_view stage, std::string_view kind, const std::string& message) {
    std::cerr << "error stage=" << stage << " kind=" << kind << " message=\"" << one_line(message) << "\"\n";
}

}  // namespace

int main(int argc, char** argv) {
    namespace pl = aptids::pipeline;

    CLI::App app{"Gradient-boosted APT phase classifier with SHAP-ranked feature selection"};
    app.require_subcommand(1, 1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::string> input;
    std::optional<std::string> output_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> method;
    std::optional<std::size_t> k;
    std::optional<std::size_t> max_candidates;
    std::optional<std::string> eval_scope;
    std::optional<std::string> label_column;
    bool paper_faithful = false;
    bool compare = false;
    bool resume = false;

    app.add_option("--config", config_path, "INI run configuration")->check(CLI::ExistingFile);
    app.add_option("--input", input, "flow CSV to prepare");
    app.add_option("--output-dir", output_dir, "artifact directory");
    app.add_option("--seed", seed, "master seed");
    app.add_option("--label-column", label_column, "name of the class label column");
    app.add_option("--method", method, "selection method")
        ->check(CLI::IsMember({"shap", "correlation", "chi_square", "anova"}));
    app.add_option("--k", k, "feature count for filter methods");
    app.add_option("--max-candidates", max_candidates, "only try the first N ranked features");
    app.add_option("--eval-scope", eval_scope, "where forward selection scores subsets")
        ->check(CLI::IsMember({"validation", "test"}));
    app.add_flag("--paper-faithful", paper_faithful, "score forward selection on the test split");
    app.add_flag("--compare", compare, "run every selection method and write comparison.csv");

    auto* prepare = app.add_subcommand("prepare", "clean, encode and split the flow CSV");
    auto* train = app.add_subcommand("train", "train the booster and evaluate on the test split");
    auto* explain = app.add_subcommand("explain", "SHAP attributions and importance rankings");
    auto* select = app.add_subcommand("select", "feature selection and reduced-model evaluation");
    auto* pipeline = app.add_subcommand("pipeline", "all stages in sequence");
    pipeline->add_flag("--resume", resume, "skip stages already completed with the same config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        report_error("cli", "usage", e.what());
        return 2;
    }

    std::string stage = "config";
    try {
        pl::RunConfig config;
        if (!config_path.empty()) config = pl::load_config(config_path);
        if (input) config.input_csv = *input;
        if (output_dir) config.output_dir = *output_dir;
        if (seed) config.seed = *seed;
        if (label_column) config.label_column = *label_column;
        if (method) config.selection.method = pl::selection_method_from_string(*method);
        if (k) config.selection.k_for_filters = *k;
        if (max_candidates) config.selection.max_candidates = *max_candidates;
        if (eval_scope) config.selection.evaluation_scope = aptids::selection::eval_scope_from_string(*eval_scope);
        if (paper_faithful) config.selection.evaluation_scope = aptids::selection::EvalScope::test;
        if (compare) config.selection.compare = true;

        if (prepare->parsed()) {
            stage = "prepare";
            const auto r = pl::cmd_prepare(config);
            std::cout << "prepared " << r.rows_in - r.rows_dropped << " of " << r.rows_in << " rows, "
                      << r.features_kept << " features, " << r.class_names.size() << " classes\n";
        } else if (train->parsed()) {
            stage = "train";
            const auto r = pl::cmd_train(config);
            std::cout << "accuracy " << r.accuracy << " macro-F1 " << r.macro.f1 << " weighted-F1 "
                      << r.weighted.f1 << "\n";
        } else if (explain->parsed()) {
            stage = "explain";
            const auto s = pl::cmd_explain(config);
            std::cout << "max additivity error " << s.max_additivity_error << "\n";
            for (std::size_t i = 0; i < std::min<std::size_t>(10, s.global.entries.size()); ++i)
                std::cout << i + 1 << ". " << s.global.entries[i].first << " " << s.global.entries[i].second << "\n";
        } else if (select->parsed()) {
            stage = "select";
            const auto s = pl::cmd_select(config);
            for (const auto& o : s.outcomes)
                std::cout << pl::to_string(o.method) << ": " << o.selected.size() << " features, macro-F1 "
                          << o.report.macro.f1 << "\n";
        } else if (pipeline->parsed()) {
            stage = "pipeline";
            pl::cmd_pipeline(config, resume);
            std::cout << "pipeline complete: " << config.output_dir.string() << "\n";
        }
    } catch (const aptids::Error& e) {
        report_error(stage, aptids::to_string(e.kind()), e.what());
        return 1;
    } catch (const std::exception& e) {
        report_error(stage, "internal", e.what());
        return 1;
    }
    return 0;
}
