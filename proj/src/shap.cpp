#include "aptids/shap.hpp"

#include "aptids/error.hpp"
#include "aptids/parallel.hpp"
#include "aptids/text_util.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <sstream>

namespace aptids::shap {

namespace {

template <typename Known>
double expectation_at(const gbt::Tree& tree, std::size_t node, std::span<const double> x, const Known& known) {
    const auto& n = tree.nodes[node];
    if (n.is_leaf()) return n.value;
    const auto f = static_cast<std::size_t>(n.feature);
    if (known(f)) {
        const int next = x[f] < n.threshold ? n.left : n.right;
        return expectation_at(tree, static_cast<std::size_t>(next), x, known);
    }
    if (!(n.cover > 0.0))
        throw Error(ErrorKind::model, "zero cover at split node " + std::to_string(node));
    const auto l = static_cast<std::size_t>(n.left);
    const auto r = static_cast<std::size_t>(n.right);
    return (tree.nodes[l].cover * expectation_at(tree, l, x, known) +
            tree.nodes[r].cover * expectation_at(tree, r, x, known)) /
           n.cover;
}

// Path element of the TreeSHAP recursion: the feature that split here, the
// fraction of "zero" (feature unknown) and "one" (feature known) paths that
// flow through, and the permutation weight of subsets of each size.
struct PathElement {
    int feature = -1;
    double zero_fraction = 0.0;
    double one_fraction = 0.0;
    double pweight = 0.0;
};

void extend_path(PathElement* path, int depth, double zero_fraction, double one_fraction, int feature) {
    path[depth] = {feature, zero_fraction, one_fraction, depth == 0 ? 1.0 : 0.0};
    for (int i = depth - 1; i >= 0; --i) {
        path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) / static_cast<double>(depth + 1);
        path[i].pweight = zero_fraction * path[i].pweight * (depth - i) / static_cast<double>(depth + 1);
    }
}

void unwind_path(PathElement* path, int depth, int index) {
    const double one = path[index].one_fraction;
    const double zero = path[index].zero_fraction;
    double next_one = path[depth].pweight;
    for (int i = depth - 1; i >= 0; --i) {
        if (one != 0.0) {
            const double tmp = path[i].pweight;
            path[i].pweight = next_one * (depth + 1) / ((i + 1) * one);
            next_one = tmp - path[i].pweight * zero * (depth - i) / static_cast<double>(depth + 1);
        } else {
            path[i].pweight = path[i].pweight * (depth + 1) / (zero * (depth - i));
        }
    }
    for (int i = index; i < depth; ++i) {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
}

// Total permutation weight the path would have with element `index` removed.
double unwound_path_sum(const PathElement* path, int depth, int index) {
    const double one = path[index].one_fraction;
    const double zero = path[index].zero_fraction;
    double next_one = path[depth].pweight;
    double total = 0.0;
    for (int i = depth - 1; i >= 0; --i) {
        if (one != 0.0) {
            const double tmp = next_one * (depth + 1) / ((i + 1) * one);
            total += tmp;
            next_one = path[i].pweight - tmp * zero * (depth - i) / static_cast<double>(depth + 1);
        } else if (zero != 0.0) {
            total += path[i].pweight / zero / ((depth - i) / static_cast<double>(depth + 1));
        }
    }
    return total;
}

class TreeShapRecursion {
public:
    TreeShapRecursion(const gbt::Tree& tree, std::span<const double> x, std::span<double> phi)
        : tree_(tree), x_(x), phi_(phi) {
        const auto d = static_cast<std::size_t>(tree.depth()) + 2;
        buffer_.resize(d * (d + 1) / 2);
    }

    void run() { recurse(0, buffer_.data(), 0, 1.0, 1.0, -1); }

private:
    void recurse(std::size_t node, PathElement* parent_path, int depth, double zero_fraction,
                 double one_fraction, int feature) {
        // Each level gets its own copy of the path, placed after the parent's.
        PathElement* path = parent_path + depth;
        std::copy(parent_path, parent_path + depth, path);
        extend_path(path, depth, zero_fraction, one_fraction, feature);

        const auto& n = tree_.nodes[node];
        if (n.is_leaf()) {
            for (int i = 1; i <= depth; ++i) {
                const double w = unwound_path_sum(path, depth, i);
                const auto& el = path[i];
                phi_[static_cast<std::size_t>(el.feature)] += w * (el.one_fraction - el.zero_fraction) * n.value;
            }
            return;
        }

        const auto split = static_cast<std::size_t>(n.feature);
        const bool go_left = x_[split] < n.threshold;
        const auto hot = static_cast<std::size_t>(go_left ? n.left : n.right);
        const auto cold = static_cast<std::size_t>(go_left ? n.right : n.left);
        if (!(n.cover > 0.0))
            throw Error(ErrorKind::model, "zero cover at split node " + std::to_string(node));
        const double hot_zero = tree_.nodes[hot].cover / n.cover;
        const double cold_zero = tree_.nodes[cold].cover / n.cover;
        double incoming_zero = 1.0;
        double incoming_one = 1.0;

        // A feature seen earlier on the path is merged rather than repeated.
        int k = 1;
        for (; k <= depth; ++k)
            if (path[k].feature == n.feature) break;
        if (k <= depth) {
            incoming_zero = path[k].zero_fraction;
            incoming_one = path[k].one_fraction;
            unwind_path(path, depth, k);
            --depth;
        }

        recurse(hot, path, depth + 1, hot_zero * incoming_zero, incoming_one, n.feature);
        recurse(cold, path, depth + 1, cold_zero * incoming_zero, 0.0, n.feature);
    }

    const gbt::Tree& tree_;
    std::span<const double> x_;
    std::span<double> phi_;
    std::vector<PathElement> buffer_;
};

std::vector<std::pair<std::string, double>> named_scores(const ShapMatrix& shap,
                                                         const std::vector<double>& scores) {
    std::vector<std::pair<std::string, double>> entries;
    for (std::size_t i = 0; i < scores.size(); ++i) entries.emplace_back(shap.feature_names[i], scores[i]);
    sort_ranking(entries);
    return entries;
}

std::vector<double> mean_abs(const ShapMatrix& shap, std::size_t k) {
    std::vector<double> scores(shap.n_features, 0.0);
    for (std::size_t s = 0; s < shap.n_samples; ++s)
        for (std::size_t i = 0; i < shap.n_features; ++i) scores[i] += std::abs(shap.at(s, k, i));
    for (double& v : scores) v /= static_cast<double>(shap.n_samples);
    return scores;
}

}  // namespace

double conditional_expectation(const gbt::Tree& tree, std::span<const double> x, const std::vector<bool>& known) {
    return expectation_at(tree, 0, x, [&known](std::size_t f) { return f < known.size() && known[f]; });
}

double expected_value(const gbt::Tree& tree) {
    return expectation_at(tree, 0, std::span<const double>{}, [](std::size_t) { return false; });
}

ShapleyValues brute_force_shapley(const gbt::TreeEnsemble& ens, std::span<const double> x, int class_index) {
    const std::size_t m = ens.n_features();
    if (m > kMaxBruteForceFeatures)
        throw Error(ErrorKind::data, "brute-force Shapley refuses " + std::to_string(m) + " features (limit " +
                                         std::to_string(kMaxBruteForceFeatures) + ")");
    if (x.size() != m) throw Error(ErrorKind::schema, "feature vector dimension mismatch");
    if (class_index < 0 || static_cast<std::size_t>(class_index) >= ens.n_classes)
        throw Error(ErrorKind::data, "class index out of range");

    // f(S) for every subset S, summed over the class's trees.
    const std::size_t subsets = std::size_t{1} << m;
    std::vector<double> value(subsets, 0.0);
    for (std::size_t t = 0; t < ens.trees.size(); ++t) {
        if (ens.class_of_tree(t) != static_cast<std::size_t>(class_index)) continue;
        for (std::size_t mask = 0; mask < subsets; ++mask) {
            value[mask] += expectation_at(ens.trees[t], 0, x,
                                          [mask](std::size_t f) { return ((mask >> f) & 1u) != 0; });
        }
    }

    // |S|! (M - |S| - 1)! / M!
    std::vector<double> weight(m, 0.0);
    for (std::size_t s = 0; s < m; ++s) {
        double w = 1.0 / static_cast<double>(m);
        for (std::size_t j = 1; j <= s; ++j)
            w *= static_cast<double>(j) / static_cast<double>(m - j);
        weight[s] = w;
    }

    ShapleyValues out;
    out.phi.assign(m, 0.0);
    out.base_value = ens.base_score + value[0];
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t bit = std::size_t{1} << i;
        for (std::size_t mask = 0; mask < subsets; ++mask) {
            if (mask & bit) continue;
            const auto size = static_cast<std::size_t>(std::popcount(mask));
            out.phi[i] += weight[size] * (value[mask | bit] - value[mask]);
        }
    }
    return out;
}

void tree_shap_single(const gbt::Tree& tree, std::span<const double> x, std::span<double> phi) {
    if (tree.nodes.empty() || tree.nodes[0].is_leaf()) return;
    TreeShapRecursion(tree, x, phi).run();
}

ShapMatrix tree_shap(const gbt::TreeEnsemble& ens, const FlowTable& table) {
    if (table.n_features() != ens.n_features())
        throw Error(ErrorKind::schema, "table has " + std::to_string(table.n_features()) +
                                           " features, model expects " + std::to_string(ens.n_features()));
    ShapMatrix out;
    out.n_samples = table.rows();
    out.n_classes = ens.n_classes;
    out.n_features = ens.n_features();
    out.feature_names = ens.feature_names;
    out.class_names = ens.class_names;
    out.values.assign(out.n_samples * out.n_classes * out.n_features, 0.0);
    out.base_values.assign(out.n_classes, ens.base_score);
    for (std::size_t t = 0; t < ens.trees.size(); ++t)
        out.base_values[ens.class_of_tree(t)] += expected_value(ens.trees[t]);

    parallel_for(out.n_samples, [&](std::size_t s) {
        const auto x = table.row(s);
        for (std::size_t t = 0; t < ens.trees.size(); ++t) {
            const std::size_t k = ens.class_of_tree(t);
            std::span<double> phi(out.values.data() + (s * out.n_classes + k) * out.n_features, out.n_features);
            tree_shap_single(ens.trees[t], x, phi);
        }
    });
    return out;
}

void sort_ranking(std::vector<std::pair<std::string, double>>& entries) {
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
}

ImportanceRanking global_importance(const ShapMatrix& shap) {
    if (shap.n_samples == 0) throw Error(ErrorKind::data, "empty SHAP matrix");
    std::vector<double> total(shap.n_features, 0.0);
    for (std::size_t k = 0; k < shap.n_classes; ++k) {
        const auto per_class = mean_abs(shap, k);
        for (std::size_t i = 0; i < shap.n_features; ++i) total[i] += per_class[i];
    }
    return {named_scores(shap, total), ImportanceRanking::Scope::global, -1};
}

ImportanceRanking per_class_importance(const ShapMatrix& shap, int class_index) {
    if (class_index < 0 || static_cast<std::size_t>(class_index) >= shap.n_classes)
        throw Error(ErrorKind::data, "class index " + std::to_string(class_index) + " out of range");
    if (shap.n_samples == 0) throw Error(ErrorKind::data, "empty SHAP matrix");
    return {named_scores(shap, mean_abs(shap, static_cast<std::size_t>(class_index))),
            ImportanceRanking::Scope::per_class, class_index};
}

void write_shap_csv(const ShapMatrix& shap, const std::filesystem::path& path) {
    std::string out = "sample_index,class,feature,phi\n";
    for (std::size_t s = 0; s < shap.n_samples; ++s) {
        for (std::size_t k = 0; k < shap.n_classes; ++k) {
            const std::string cls = csv_escape(shap.class_names.empty() ? std::to_string(k) : shap.class_names[k]);
            for (std::size_t i = 0; i < shap.n_features; ++i) {
                out += std::to_string(s);
                out += ',';
                out += cls;
                out += ',';
                out += csv_escape(shap.feature_names[i]);
                out += ',';
                out += format_double(shap.at(s, k, i));
                out += '\n';
            }
        }
    }
    write_text_atomic(path, out);
}

void write_base_values_json(const ShapMatrix& shap, const std::filesystem::path& path) {
    nlohmann::json doc = {
        {"classes", shap.class_names},
        {"base_values", shap.base_values},
        {"n_samples", shap.n_samples},
    };
    write_text_atomic(path, doc.dump(2) + "\n");
}

void write_ranking_csv(const ImportanceRanking& ranking, const std::filesystem::path& path) {
    std::string out = "rank,feature,score\n";
    for (std::size_t r = 0; r < ranking.entries.size(); ++r) {
        out += std::to_string(r + 1) + "," + csv_escape(ranking.entries[r].first) + "," +
               format_double(ranking.entries[r].second) + "\n";
    }
    write_text_atomic(path, out);
}

ImportanceRanking read_ranking_csv(const std::filesystem::path& path) {
    RawTable raw = load_csv(path);
    auto feature = raw.column_index("feature");
    auto score = raw.column_index("score");
    if (!feature || !score) throw Error(ErrorKind::schema, "ranking file needs feature and score columns");
    ImportanceRanking ranking;
    for (const auto& row : raw.rows) {
        double v = 0.0;
        const auto& cell = row[*score];
        auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc{}) throw Error(ErrorKind::parse, "bad score '" + cell + "' in ranking file");
        ranking.entries.emplace_back(row[*feature], v);
    }
    return ranking;
}

}  // namespace aptids::shap
