#include "aptids/pipeline.hpp"

#include "aptids/error.hpp"
#include "aptids/text_util.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace aptids::pipeline {

namespace pt = boost::property_tree;

std::string_view to_string(SelectionMethod method) {
    switch (method) {
    case SelectionMethod::shap: return "shap";
    case SelectionMethod::correlation: return "correlation";
    case SelectionMethod::chi_square: return "chi_square";
    case SelectionMethod::anova: return "anova";
    }
    return "unknown";
}

SelectionMethod selection_method_from_string(std::string_view text) {
    for (auto m : {SelectionMethod::shap, SelectionMethod::correlation, SelectionMethod::chi_square,
                   SelectionMethod::anova})
        if (to_string(m) == text) return m;
    throw Error(ErrorKind::config, "unknown selection method '" + std::string(text) + "'");
}

namespace {

std::string trim(std::string_view s) {
    constexpr std::string_view ws = " \t\r\n";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    return std::string(s.substr(b, s.find_last_not_of(ws) - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
    throw Error(ErrorKind::config, "invalid value '" + value + "' for " + key);
}

template <typename T>
T parse_as(const std::string& key, const std::string& value) {
    T out{};
    const auto v = trim(value);
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty()) bad_value(key, value);
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    const auto v = trim(value);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    bad_value(key, value);
}

std::optional<std::size_t> parse_optional_count(const std::string& key, const std::string& value) {
    if (trim(value).empty()) return std::nullopt;
    return parse_as<std::size_t>(key, value);
}

std::vector<std::string> parse_list(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto t = trim(item);
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
    return out;
}

}  // namespace

RunConfig parse_config(std::string_view text, RunConfig base) {
    pt::ptree tree;
    try {
        std::istringstream in{std::string(text)};
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw Error(ErrorKind::config, std::string("config parse error: ") + e.what());
    }

    RunConfig cfg = std::move(base);
    auto& hp = cfg.hyperparams;
    auto& sel = cfg.selection;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty())
            throw Error(ErrorKind::config, "key '" + section + "' must live inside a section");
        for (const auto& [name, node] : body) {
            const std::string key = section + "." + name;
            const std::string value = node.data();
            if (key == "run.seed") cfg.seed = parse_as<std::uint64_t>(key, value);
            else if (key == "run.output_dir") cfg.output_dir = trim(value);
            else if (key == "input.csv") cfg.input_csv = trim(value);
            else if (key == "input.label_column") cfg.label_column = trim(value);
            else if (key == "input.drop_columns") cfg.drop_columns = parse_list(value);
            else if (key == "split.train_fraction") cfg.train_fraction = parse_as<double>(key, value);
            else if (key == "split.stratified") cfg.stratified = parse_bool(key, value);
            else if (key == "model.n_estimators") hp.n_estimators = parse_as<int>(key, value);
            else if (key == "model.learning_rate") hp.learning_rate = parse_as<double>(key, value);
            else if (key == "model.max_depth") hp.max_depth = parse_as<int>(key, value);
            else if (key == "model.min_child_weight") hp.min_child_weight = parse_as<double>(key, value);
            else if (key == "model.gamma") hp.gamma = parse_as<double>(key, value);
            else if (key == "model.lambda") hp.lambda = parse_as<double>(key, value);
            else if (key == "model.alpha") hp.alpha = parse_as<double>(key, value);
            else if (key == "model.base_score") hp.base_score = parse_as<double>(key, value);
            else if (key == "model.objective") {
                if (trim(value) != "multiclass_softmax") bad_value(key, value);
            }
            else if (key == "selection.method") sel.method = selection_method_from_string(trim(value));
            else if (key == "selection.max_candidates") sel.max_candidates = parse_optional_count(key, value);
            else if (key == "selection.patience") sel.patience = parse_optional_count(key, value);
            else if (key == "selection.evaluation_scope") sel.evaluation_scope = selection::eval_scope_from_string(trim(value));
            else if (key == "selection.validation_fraction") sel.validation_fraction = parse_as<double>(key, value);
            else if (key == "selection.k") sel.k_for_filters = parse_as<std::size_t>(key, value);
            else if (key == "selection.compare") sel.compare = parse_bool(key, value);
            else if (key == "explain.rows") {
                cfg.explain_rows = trim(value);
                if (cfg.explain_rows != "test" && cfg.explain_rows != "train") bad_value(key, value);
            }
            else throw Error(ErrorKind::config, "unknown config key '" + key + "'");
        }
    }
    hp.validate();
    if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
        throw Error(ErrorKind::config, "split.train_fraction must lie in (0, 1)");
    if (!(sel.validation_fraction > 0.0 && sel.validation_fraction < 1.0))
        throw Error(ErrorKind::config, "selection.validation_fraction must lie in (0, 1)");
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
    return parse_config(read_text(path), std::move(base));
}

std::string config_to_ini(const RunConfig& c) {
    const auto& hp = c.hyperparams;
    const auto& sel = c.selection;
    auto opt = [](const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : std::string(); };
    std::ostringstream out;
    out << "[run]\n"
        << "seed = " << c.seed << "\n"
        << "output_dir = " << c.output_dir.string() << "\n\n"
        << "[input]\n"
        << "csv = " << c.input_csv.string() << "\n"
        << "label_column = " << c.label_column << "\n"
        << "drop_columns = " << join(c.drop_columns) << "\n\n"
        << "[split]\n"
        << "train_fraction = " << format_double(c.train_fraction) << "\n"
        << "stratified = " << (c.stratified ? "true" : "false") << "\n\n"
        << "[model]\n"
        << "objective = multiclass_softmax\n"
        << "n_estimators = " << hp.n_estimators << "\n"
        << "learning_rate = " << format_double(hp.learning_rate) << "\n"
        << "max_depth = " << hp.max_depth << "\n"
        << "min_child_weight = " << format_double(hp.min_child_weight) << "\n"
        << "gamma = " << format_double(hp.gamma) << "\n"
        << "lambda = " << format_double(hp.lambda) << "\n"
        << "alpha = " << format_double(hp.alpha) << "\n"
        << "base_score = " << format_double(hp.base_score) << "\n\n"
        << "[selection]\n"
        << "method = " << to_string(sel.method) << "\n"
        << "max_candidates = " << opt(sel.max_candidates) << "\n"
        << "patience = " << opt(sel.patience) << "\n"
        << "evaluation_scope = " << selection::to_string(sel.evaluation_scope) << "\n"
        << "validation_fraction = " << format_double(sel.validation_fraction) << "\n"
        << "k = " << sel.k_for_filters << "\n"
        << "compare = " << (sel.compare ? "true" : "false") << "\n\n"
        << "[explain]\n"
        << "rows = " << c.explain_rows << "\n";
    return out.str();
}

}  // namespace aptids::pipeline
