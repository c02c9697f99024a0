#include "aptids/flow_ingest.hpp"

#include "aptids/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

namespace aptids {

namespace {

std::string_view trim(std::string_view s) {
    constexpr std::string_view ws = " \t\r\n";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) ==
                      std::tolower(static_cast<unsigned char>(y));
           });
}

std::optional<double> parse_number(std::string_view cell) {
    cell = trim(cell);
    if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc{} || ptr != cell.data() + cell.size() || cell.empty()) return std::nullopt;
    return value;
}

}  // namespace

std::optional<std::size_t> RawTable::column_index(std::string_view name) const {
    for (std::size_t i = 0; i < column_names.size(); ++i)
        if (column_names[i] == name) return i;
    return std::nullopt;
}

std::optional<std::size_t> FlowTable::feature_index(std::string_view name) const {
    for (std::size_t i = 0; i < feature_names.size(); ++i)
        if (feature_names[i] == name) return i;
    return std::nullopt;
}

std::optional<int> FlowTable::class_index(std::string_view name) const {
    for (std::size_t i = 0; i < class_names.size(); ++i)
        if (class_names[i] == name) return static_cast<int>(i);
    return std::nullopt;
}

FlowTable FlowTable::subset_rows(std::span<const std::size_t> row_indices) const {
    FlowTable out;
    out.feature_names = feature_names;
    out.class_names = class_names;
    const std::size_t m = n_features();
    out.features.reserve(row_indices.size() * m);
    out.labels.reserve(row_indices.size());
    out.sample_weights.reserve(row_indices.size());
    for (std::size_t r : row_indices) {
        auto src = row(r);
        out.features.insert(out.features.end(), src.begin(), src.end());
        out.labels.push_back(labels[r]);
        out.sample_weights.push_back(sample_weights[r]);
    }
    return out;
}

FlowTable FlowTable::select_features(std::span<const std::string> names) const {
    std::vector<bool> keep(n_features(), false);
    for (const auto& name : names) {
        auto idx = feature_index(name);
        if (!idx) throw Error(ErrorKind::schema, "unknown feature '" + name + "'");
        keep[*idx] = true;
    }
    std::vector<std::size_t> cols;
    for (std::size_t f = 0; f < n_features(); ++f)
        if (keep[f]) cols.push_back(f);

    FlowTable out;
    out.class_names = class_names;
    out.labels = labels;
    out.sample_weights = sample_weights;
    for (std::size_t c : cols) out.feature_names.push_back(feature_names[c]);
    out.features.reserve(rows() * cols.size());
    for (std::size_t r = 0; r < rows(); ++r)
        for (std::size_t c : cols) out.features.push_back(at(r, c));
    return out;
}

void FlowTable::validate() const {
    const std::size_t n = labels.size();
    if (features.size() != n * n_features())
        throw Error(ErrorKind::schema, "feature matrix size does not match rows x features");
    if (sample_weights.size() != n)
        throw Error(ErrorKind::schema, "sample weight count does not match row count");
    for (double v : features)
        if (!std::isfinite(v)) throw Error(ErrorKind::data, "non-finite feature cell");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= class_names.size())
            throw Error(ErrorKind::data, "label index out of range: " + std::to_string(y));
    for (double w : sample_weights)
        if (!(w > 0.0) || !std::isfinite(w)) throw Error(ErrorKind::data, "sample weight must be positive");
}

const std::vector<std::string>& default_drop_columns() {
    static const std::vector<std::string> cols = {"Flow ID", "Src IP",  "Src Port",
                                                  "Dst IP",  "Dst Port", "Timestamp"};
    return cols;
}

bool is_missing_cell(std::string_view cell) {
    cell = trim(cell);
    if (cell.empty()) return true;
    for (std::string_view token : {"nan", "infinity", "-infinity", "+infinity", "inf", "-inf", "+inf",
                                   "-nan", "null"}) {
        if (iequals(cell, token)) return true;
    }
    if (auto v = parse_number(cell)) return !std::isfinite(*v);
    return false;
}

RawTable parse_csv(std::string_view text) {
    if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);

    // Records with the 1-based line number where each one starts.
    std::vector<std::pair<std::size_t, std::vector<std::string>>> records;
    std::vector<std::string> current;
    std::string cell;
    bool in_quotes = false;
    bool record_has_content = false;
    std::size_t line = 1;
    std::size_t record_line = 1;

    auto end_record = [&] {
        if (record_has_content || !current.empty()) {
            current.push_back(std::move(cell));
            records.emplace_back(record_line, std::move(current));
        }
        current.clear();
        cell.clear();
        record_has_content = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cell.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                cell.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"':
            in_quotes = true;
            record_has_content = true;
            break;
        case ',':
            current.push_back(std::move(cell));
            cell.clear();
            record_has_content = true;
            break;
        case '\r':
            break;
        case '\n':
            end_record();
            ++line;
            record_line = line;
            break;
        default:
            cell.push_back(c);
            record_has_content = true;
        }
    }
    if (in_quotes) throw Error(ErrorKind::parse, "unterminated quoted field starting at line " +
                                                     std::to_string(record_line));
    end_record();

    if (records.empty()) throw Error(ErrorKind::parse, "missing header");

    RawTable table;
    std::unordered_set<std::string> seen;
    for (auto& name : records.front().second) {
        std::string trimmed(trim(name));
        if (!seen.insert(trimmed).second)
            throw Error(ErrorKind::schema, "duplicate header name '" + trimmed + "'");
        table.column_names.push_back(std::move(trimmed));
    }
    const std::size_t width = table.column_names.size();
    table.rows.reserve(records.size() - 1);
    for (std::size_t r = 1; r < records.size(); ++r) {
        auto& [rec_line, cells] = records[r];
        if (cells.size() != width)
            throw Error(ErrorKind::parse, "line " + std::to_string(rec_line) + ": expected " +
                                              std::to_string(width) + " cells, found " +
                                              std::to_string(cells.size()));
        table.rows.push_back(std::move(cells));
    }
    return table;
}

RawTable load_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open '" + path.string() + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    if (in.bad()) throw Error(ErrorKind::io, "read failure on '" + path.string() + "'");
    return parse_csv(buffer.str());
}

FlowTable preprocess(const RawTable& raw,
                     std::span<const std::string> drop_columns,
                     std::string_view label_column) {
    auto label_idx = raw.column_index(label_column);
    if (!label_idx) throw Error(ErrorKind::schema, "label column '" + std::string(label_column) + "' not found");

    std::vector<bool> dropped(raw.column_names.size(), false);
    for (const auto& name : drop_columns) {
        auto idx = raw.column_index(name);
        if (!idx) throw Error(ErrorKind::schema, "drop column '" + name + "' not found");
        if (*idx == *label_idx) throw Error(ErrorKind::schema, "cannot drop the label column");
        dropped[*idx] = true;
    }

    std::vector<std::size_t> kept;
    for (std::size_t c = 0; c < raw.column_names.size(); ++c)
        if (!dropped[c] && c != *label_idx) kept.push_back(c);

    // Row filter: any missing / non-finite cell in a retained column or the label.
    std::vector<std::size_t> good_rows;
    good_rows.reserve(raw.row_count());
    for (std::size_t r = 0; r < raw.row_count(); ++r) {
        const auto& row = raw.rows[r];
        bool ok = !trim(row[*label_idx]).empty();
        for (std::size_t k = 0; ok && k < kept.size(); ++k)
            if (is_missing_cell(row[kept[k]])) ok = false;
        if (ok) good_rows.push_back(r);
    }
    if (good_rows.empty()) throw Error(ErrorKind::data, "empty table after preprocessing");

    // A retained column is categorical when any surviving cell is not numeric.
    std::vector<std::optional<std::map<std::string, double>>> encoders(kept.size());
    for (std::size_t k = 0; k < kept.size(); ++k) {
        bool numeric = true;
        for (std::size_t r : good_rows) {
            if (!parse_number(raw.rows[r][kept[k]])) {
                numeric = false;
                break;
            }
        }
        if (numeric) continue;
        std::map<std::string, double> codes;
        for (std::size_t r : good_rows) codes.emplace(std::string(trim(raw.rows[r][kept[k]])), 0.0);
        double next = 0.0;
        for (auto& [value, code] : codes) code = next++;
        encoders[k] = std::move(codes);
    }

    std::set<std::string> label_set;
    for (std::size_t r : good_rows) label_set.emplace(trim(raw.rows[r][*label_idx]));

    FlowTable table;
    table.class_names.assign(label_set.begin(), label_set.end());
    for (std::size_t c : kept) table.feature_names.push_back(raw.column_names[c]);
    table.features.reserve(good_rows.size() * kept.size());
    table.labels.reserve(good_rows.size());
    for (std::size_t r : good_rows) {
        const auto& row = raw.rows[r];
        for (std::size_t k = 0; k < kept.size(); ++k) {
            const auto& cell = row[kept[k]];
            if (encoders[k])
                table.features.push_back(encoders[k]->at(std::string(trim(cell))));
            else
                table.features.push_back(*parse_number(cell));
        }
        auto label = std::string(trim(row[*label_idx]));
        table.labels.push_back(*table.class_index(label));
    }
    table.sample_weights.assign(good_rows.size(), 1.0);
    return table;
}

std::pair<FlowTable, FlowTable> stratified_split(const FlowTable& table, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
        throw Error(ErrorKind::config, "train_fraction must lie in (0, 1)");

    SplitMix64 rng(spec.seed);
    auto shuffle = [&rng](std::vector<std::size_t>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
    };
    // floor(fraction * n), kept inside [1, n-1] so both sides see every group.
    auto train_count = [&](std::size_t n) {
        auto k = static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(n)));
        if (n >= 2) k = std::clamp<std::size_t>(k, 1, n - 1);
        return k;
    };

    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> test_rows;
    auto take = [&](std::vector<std::size_t>& group) {
        shuffle(group);
        std::size_t k = train_count(group.size());
        train_rows.insert(train_rows.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(k));
        test_rows.insert(test_rows.end(), group.begin() + static_cast<std::ptrdiff_t>(k), group.end());
    };

    if (spec.stratified) {
        std::vector<std::vector<std::size_t>> by_class(table.n_classes());
        for (std::size_t r = 0; r < table.rows(); ++r) by_class[table.labels[r]].push_back(r);
        for (std::size_t k = 0; k < by_class.size(); ++k) {
            if (by_class[k].size() == 1)
                throw Error(ErrorKind::data, "class '" + table.class_names[k] +
                                                 "' has a single sample; cannot stratify");
        }
        for (auto& group : by_class)
            if (!group.empty()) take(group);
    } else {
        std::vector<std::size_t> all(table.rows());
        std::iota(all.begin(), all.end(), std::size_t{0});
        take(all);
    }

    std::sort(train_rows.begin(), train_rows.end());
    std::sort(test_rows.begin(), test_rows.end());
    return {table.subset_rows(train_rows), table.subset_rows(test_rows)};
}

ClassWeights class_weights(std::span<const int> labels, std::size_t n_classes) {
    if (n_classes == 0) throw Error(ErrorKind::data, "class count must be positive");
    ClassWeights cw;
    cw.class_counts.assign(n_classes, 0);
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= n_classes)
            throw Error(ErrorKind::data, "label index out of range: " + std::to_string(y));
        ++cw.class_counts[static_cast<std::size_t>(y)];
    }
    cw.total = labels.size();
    cw.weights.resize(n_classes);
    for (std::size_t k = 0; k < n_classes; ++k) {
        if (cw.class_counts[k] == 0)
            throw Error(ErrorKind::data, "class index " + std::to_string(k) + " has no samples");
        cw.weights[k] = static_cast<double>(cw.total) /
                        (static_cast<double>(n_classes) * static_cast<double>(cw.class_counts[k]));
    }
    return cw;
}

FlowTable apply_sample_weights(const FlowTable& table, const ClassWeights& cw) {
    if (cw.weights.size() != table.n_classes())
        throw Error(ErrorKind::schema, "class weight count " + std::to_string(cw.weights.size()) +
                                           " does not match class count " +
                                           std::to_string(table.n_classes()));
    FlowTable out = table;
    for (std::size_t r = 0; r < out.rows(); ++r) out.sample_weights[r] = cw.weights[out.labels[r]];
    return out;
}

}  // namespace aptids
