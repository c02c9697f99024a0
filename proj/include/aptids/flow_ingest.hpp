#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace aptids {

// Header plus text cells, exactly as read from a flow CSV.
struct RawTable {
    std::vector<std::string> column_names;
    std::vector<std::vector<std::string>> rows;

    std::size_t row_count() const { return rows.size(); }
    std::optional<std::size_t> column_index(std::string_view name) const;
};

// Dense numeric flow matrix (row-major) with encoded labels and per-row weights.
struct FlowTable {
    std::vector<std::string> feature_names;
    std::vector<double> features;
    std::vector<int> labels;
    std::vector<std::string> class_names;
    std::vector<double> sample_weights;

    std::size_t rows() const { return labels.size(); }
    std::size_t n_features() const { return feature_names.size(); }
    std::size_t n_classes() const { return class_names.size(); }

    std::span<const double> row(std::size_t r) const {
        return {features.data() + r * n_features(), n_features()};
    }
    double at(std::size_t r, std::size_t f) const { return features[r * n_features() + f]; }

    std::optional<std::size_t> feature_index(std::string_view name) const;
    std::optional<int> class_index(std::string_view name) const;

    // Rows in the order given.
    FlowTable subset_rows(std::span<const std::size_t> row_indices) const;

    // Keeps the named features in this table's column order, whatever order
    // `names` lists them in. Unknown names raise a schema error.
    FlowTable select_features(std::span<const std::string> names) const;

    // Throws on any invariant breach: shape mismatch, non-finite cell,
    // out-of-range label, non-positive weight.
    void validate() const;
};

struct ClassWeights {
    std::vector<double> weights;
    std::vector<std::size_t> class_counts;
    std::size_t total = 0;
};

struct SplitSpec {
    double train_fraction = 0.8;
    std::uint64_t seed = 42;
    bool stratified = true;
};

// Identifier columns removed before training; they label the traffic and
// would leak the answer.
const std::vector<std::string>& default_drop_columns();

// RFC-4180 reader. Header names are trimmed of surrounding whitespace.
RawTable load_csv(const std::filesystem::path& path);
RawTable parse_csv(std::string_view text);

// True for "", NaN and +/-Infinity spellings (case-insensitive) and anything
// else that parses to a non-finite double.
bool is_missing_cell(std::string_view cell);

FlowTable preprocess(const RawTable& raw,
                     std::span<const std::string> drop_columns,
                     std::string_view label_column);

std::pair<FlowTable, FlowTable> stratified_split(const FlowTable& table, const SplitSpec& spec);

ClassWeights class_weights(std::span<const int> labels, std::size_t n_classes);

FlowTable apply_sample_weights(const FlowTable& table, const ClassWeights& cw);

// Lossless binary round-trip of a FlowTable.
void write_flow_table(const FlowTable& table, const std::filesystem::path& path);
FlowTable read_flow_table(const std::filesystem::path& path);

// splitmix64; the only random source used by the toolkit.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound) {
        std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            std::uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    // Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

}  // namespace aptids
