#include "aptids/gbt.hpp"

#include "aptids/error.hpp"
#include "aptids/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace aptids::gbt {

void Hyperparams::validate() const {
    if (n_estimators < 0) throw Error(ErrorKind::config, "n_estimators must be >= 0");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0))
        throw Error(ErrorKind::config, "learning_rate must lie in (0, 1]");
    if (max_depth < 1) throw Error(ErrorKind::config, "max_depth must be >= 1");
    if (!(min_child_weight >= 0.0)) throw Error(ErrorKind::config, "min_child_weight must be >= 0");
    if (!(gamma >= 0.0)) throw Error(ErrorKind::config, "gamma must be >= 0");
    if (!(lambda >= 0.0)) throw Error(ErrorKind::config, "lambda must be >= 0");
    if (!(alpha >= 0.0)) throw Error(ErrorKind::config, "alpha must be >= 0");
    if (!std::isfinite(base_score)) throw Error(ErrorKind::config, "base_score must be finite");
}

double Tree::predict(std::span<const double> x) const {
    return nodes[static_cast<std::size_t>(leaf_index(x))].value;
}

int Tree::leaf_index(std::span<const double> x) const {
    int i = 0;
    while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
        const auto& n = nodes[static_cast<std::size_t>(i)];
        i = x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
    }
    return i;
}

std::size_t Tree::internal_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return !n.is_leaf(); }));
}

int Tree::depth() const {
    // Children always follow their parent in storage order.
    std::vector<int> d(nodes.size(), 0);
    int best = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        best = std::max(best, d[i]);
        if (!nodes[i].is_leaf()) {
            d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
            d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
        }
    }
    return best;
}

void TreeEnsemble::validate() const {
    if (n_classes == 0) throw Error(ErrorKind::model, "ensemble has no classes");
    if (!class_names.empty() && class_names.size() != n_classes)
        throw Error(ErrorKind::model, "class name count does not match class count");
    if (trees.size() % n_classes != 0)
        throw Error(ErrorKind::model, "tree count is not a multiple of the class count");
    if (!std::isfinite(base_score)) throw Error(ErrorKind::model, "base_score is not finite");
    for (std::size_t t = 0; t < trees.size(); ++t) {
        const auto& nodes = trees[t].nodes;
        const std::string where = "tree " + std::to_string(t);
        if (nodes.empty()) throw Error(ErrorKind::model, where + " has no nodes");
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const auto& n = nodes[i];
            if (!std::isfinite(n.cover) || n.cover < 0.0)
                throw Error(ErrorKind::model, where + ": bad cover at node " + std::to_string(i));
            if (n.is_leaf()) {
                if (!std::isfinite(n.value))
                    throw Error(ErrorKind::model, where + ": non-finite leaf value");
                continue;
            }
            if (n.feature < 0 || static_cast<std::size_t>(n.feature) >= n_features())
                throw Error(ErrorKind::model, where + ": feature index " + std::to_string(n.feature) +
                                                  " outside feature count " +
                                                  std::to_string(n_features()));
            if (!std::isfinite(n.threshold))
                throw Error(ErrorKind::model, where + ": non-finite threshold");
            auto child_ok = [&](int c) {
                return c > static_cast<int>(i) && static_cast<std::size_t>(c) < nodes.size();
            };
            if (!child_ok(n.left) || !child_ok(n.right) || n.left == n.right)
                throw Error(ErrorKind::model, where + ": bad child index at node " + std::to_string(i));
        }
    }
}

namespace {

// Writes weight * (p - onehot) and weight * p * (1 - p) into g and h.
void grad_hess_into(std::span<const double> margins, int true_class, double weight,
                    std::span<double> g, std::span<double> h) {
    const double top = *std::max_element(margins.begin(), margins.end());
    double sum = 0.0;
    for (std::size_t k = 0; k < margins.size(); ++k) {
        g[k] = std::exp(margins[k] - top);
        sum += g[k];
    }
    for (std::size_t k = 0; k < margins.size(); ++k) {
        const double p = g[k] / sum;
        g[k] = weight * (p - (static_cast<int>(k) == true_class ? 1.0 : 0.0));
        h[k] = weight * p * (1.0 - p);
    }
}

// Threshold between two distinct adjacent values a < b such that a < t <= b.
double midpoint(double a, double b) {
    double mid = a * 0.5 + b * 0.5;
    if (!(mid > a)) mid = b;
    return mid;
}

// One ascending pass over a feature's node samples, keeping the first
// strictly-better boundary so the lowest threshold wins ties.
template <typename RowIt, typename ValueOf>
void scan_feature(int feature, RowIt first, RowIt last, ValueOf value_of,
                  std::span<const double> g, std::span<const double> h,
                  double grad_total, double hess_total, const Hyperparams& hp,
                  std::optional<SplitCandidate>& best) {
    double gl = 0.0;
    double hl = 0.0;
    for (RowIt it = first; it != last; ++it) {
        auto next = std::next(it);
        if (next == last) break;
        const auto row = *it;
        gl += g[row];
        hl += h[row];
        const double v = value_of(row);
        const double v_next = value_of(*next);
        if (!(v < v_next)) continue;
        const double gr = grad_total - gl;
        const double hr = hess_total - hl;
        if (hl < hp.min_child_weight || hr < hp.min_child_weight) continue;
        if (!(hl > 0.0) || !(hr > 0.0)) continue;
        const double gain = split_gain(gl, hl, gr, hr, hp);
        if (gain > 0.0 && (!best || gain > best->gain))
            best = SplitCandidate{feature, midpoint(v, v_next), gain};
    }
}

// Fixed reduction order: lower feature index wins equal gains.
std::optional<SplitCandidate> reduce_candidates(const std::vector<std::optional<SplitCandidate>>& per_feature) {
    std::optional<SplitCandidate> best;
    for (const auto& c : per_feature)
        if (c && (!best || c->gain > best->gain)) best = c;
    return best;
}

using Columns = std::vector<std::vector<double>>;

Columns to_columns(const FlowTable& table) {
    Columns cols(table.n_features(), std::vector<double>(table.rows()));
    for (std::size_t r = 0; r < table.rows(); ++r)
        for (std::size_t f = 0; f < table.n_features(); ++f) cols[f][r] = table.at(r, f);
    return cols;
}

// Grows one regression tree over presorted per-feature row orders. Every node
// owns the same [begin, end) segment in each feature's order; splitting a node
// stable-partitions all segments so they stay value-sorted.
class TreeGrower {
public:
    TreeGrower(const Columns& cols, const std::vector<std::vector<std::uint32_t>>& presorted,
               const Hyperparams& hp)
        : cols_(cols), presorted_(presorted), hp_(hp), goes_left_(cols.empty() ? 0 : cols[0].size()) {}

    Tree grow(std::span<const double> g, std::span<const double> h, std::span<double> row_values) {
        g_ = g;
        h_ = h;
        row_values_ = row_values;
        order_ = presorted_;
        tree_ = Tree{};
        const std::size_t n = g.size();
        double grad_total = 0.0;
        double hess_total = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            grad_total += g[r];
            hess_total += h[r];
        }
        build(0, n, 0, grad_total, hess_total);
        return std::move(tree_);
    }

private:
    bool parallel_worthy(std::size_t rows) const { return rows * cols_.size() >= (1u << 16); }

    int build(std::size_t begin, std::size_t end, int depth, double grad_total, double hess_total) {
        const int index = static_cast<int>(tree_.nodes.size());
        tree_.nodes.push_back(TreeNode::make_leaf(0.0, hess_total));

        std::optional<SplitCandidate> split;
        if (depth < hp_.max_depth && !cols_.empty() && end - begin >= 2)
            split = best_split(begin, end, grad_total, hess_total);

        if (!split) {
            const double value = leaf_weight(grad_total, hess_total, hp_) * hp_.learning_rate;
            tree_.nodes[static_cast<std::size_t>(index)].value = value;
            for (std::size_t i = begin; i < end; ++i) row_values_[order_[0][i]] = value;
            return index;
        }

        const std::size_t mid = partition(begin, end, *split);
        double gl = 0.0, hl = 0.0, gr = 0.0, hr = 0.0;
        for (std::size_t i = begin; i < mid; ++i) {
            gl += g_[order_[0][i]];
            hl += h_[order_[0][i]];
        }
        for (std::size_t i = mid; i < end; ++i) {
            gr += g_[order_[0][i]];
            hr += h_[order_[0][i]];
        }
        const int left = build(begin, mid, depth + 1, gl, hl);
        const int right = build(mid, end, depth + 1, gr, hr);
        tree_.nodes[static_cast<std::size_t>(index)] =
            TreeNode::make_split(split->feature, split->threshold, left, right, hess_total);
        return index;
    }

    std::optional<SplitCandidate> best_split(std::size_t begin, std::size_t end, double grad_total,
                                             double hess_total) {
        std::vector<std::optional<SplitCandidate>> per_feature(cols_.size());
        auto scan = [&](std::size_t f) {
            const auto& col = cols_[f];
            const auto& ord = order_[f];
            scan_feature(static_cast<int>(f), ord.begin() + static_cast<std::ptrdiff_t>(begin),
                         ord.begin() + static_cast<std::ptrdiff_t>(end),
                         [&col](std::uint32_t r) { return col[r]; }, g_, h_, grad_total, hess_total, hp_,
                         per_feature[f]);
        };
        parallel_for(cols_.size(), scan, parallel_worthy(end - begin) ? 0 : 1);
        return reduce_candidates(per_feature);
    }

    std::size_t partition(std::size_t begin, std::size_t end, const SplitCandidate& split) {
        const auto& col = cols_[static_cast<std::size_t>(split.feature)];
        std::size_t n_left = 0;
        for (std::size_t i = begin; i < end; ++i) {
            const std::uint32_t r = order_[0][i];
            const bool left = col[r] < split.threshold;
            goes_left_[r] = left ? 1 : 0;
            n_left += left ? 1 : 0;
        }
        auto part = [&](std::size_t f) {
            auto& ord = order_[f];
            std::stable_partition(ord.begin() + static_cast<std::ptrdiff_t>(begin),
                                  ord.begin() + static_cast<std::ptrdiff_t>(end),
                                  [this](std::uint32_t r) { return goes_left_[r] != 0; });
        };
        parallel_for(cols_.size(), part, parallel_worthy(end - begin) ? 0 : 1);
        return begin + n_left;
    }

    const Columns& cols_;
    const std::vector<std::vector<std::uint32_t>>& presorted_;
    const Hyperparams& hp_;
    std::vector<std::uint8_t> goes_left_;
    std::vector<std::vector<std::uint32_t>> order_;
    std::span<const double> g_;
    std::span<const double> h_;
    std::span<double> row_values_;
    Tree tree_;
};

}  // namespace

GradHess softmax_grad_hess(std::span<const double> margins, int true_class, double weight) {
    if (margins.size() < 2) throw Error(ErrorKind::data, "softmax needs at least two classes");
    if (true_class < 0 || static_cast<std::size_t>(true_class) >= margins.size())
        throw Error(ErrorKind::data, "true class out of range");
    if (!(weight > 0.0)) throw Error(ErrorKind::data, "sample weight must be positive");
    GradHess out{std::vector<double>(margins.size()), std::vector<double>(margins.size())};
    grad_hess_into(margins, true_class, weight, out.g, out.h);
    return out;
}

double soft_threshold(double g, double alpha) {
    if (alpha <= 0.0) return g;
    const double mag = std::max(std::abs(g) - alpha, 0.0);
    return g < 0.0 ? -mag : mag;
}

double split_gain(double grad_left, double hess_left, double grad_right, double hess_right,
                  const Hyperparams& hp) {
    auto score = [&](double grad, double hess) {
        const double t = soft_threshold(grad, hp.alpha);
        const double denom = hess + hp.lambda;
        return denom > 0.0 ? t * t / denom : 0.0;
    };
    return 0.5 * (score(grad_left, hess_left) + score(grad_right, hess_right) -
                  score(grad_left + grad_right, hess_left + hess_right)) -
           hp.gamma;
}

double leaf_weight(double grad_sum, double hess_sum, const Hyperparams& hp) {
    const double denom = hess_sum + hp.lambda;
    if (!(denom > 0.0)) return 0.0;
    return -soft_threshold(grad_sum, hp.alpha) / denom;
}

std::optional<SplitCandidate> find_best_split(std::span<const std::size_t> node_rows,
                                              std::span<const double> g,
                                              std::span<const double> h,
                                              const FlowTable& table,
                                              const Hyperparams& hp) {
    double grad_total = 0.0;
    double hess_total = 0.0;
    for (std::size_t r : node_rows) {
        grad_total += g[r];
        hess_total += h[r];
    }
    std::vector<std::optional<SplitCandidate>> per_feature(table.n_features());
    std::vector<std::size_t> sorted(node_rows.begin(), node_rows.end());
    for (std::size_t f = 0; f < table.n_features(); ++f) {
        auto value_of = [&](std::size_t r) { return table.at(r, f); };
        std::sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
            const double va = value_of(a), vb = value_of(b);
            return va < vb || (va == vb && a < b);
        });
        scan_feature(static_cast<int>(f), sorted.begin(), sorted.end(), value_of, g, h, grad_total,
                     hess_total, hp, per_feature[f]);
    }
    return reduce_candidates(per_feature);
}

TreeEnsemble train(const FlowTable& train_table, const Hyperparams& hp) {
    hp.validate();
    train_table.validate();
    const std::size_t n = train_table.rows();
    const std::size_t n_classes = train_table.n_classes();
    if (n == 0) throw Error(ErrorKind::data, "cannot train on an empty table");
    {
        std::vector<bool> present(n_classes, false);
        for (int y : train_table.labels) present[static_cast<std::size_t>(y)] = true;
        if (n_classes < 2 || std::count(present.begin(), present.end(), true) < 2)
            throw Error(ErrorKind::data, "training needs at least two classes present");
    }
    if (n > std::numeric_limits<std::uint32_t>::max())
        throw Error(ErrorKind::data, "too many rows for the tree builder");

    TreeEnsemble ens;
    ens.n_classes = n_classes;
    ens.base_score = hp.base_score;
    ens.feature_names = train_table.feature_names;
    ens.class_names = train_table.class_names;
    ens.hyperparams = hp;
    ens.trees.reserve(static_cast<std::size_t>(hp.n_estimators) * n_classes);
    if (hp.n_estimators == 0) return ens;

    const Columns cols = to_columns(train_table);
    std::vector<std::vector<std::uint32_t>> presorted(cols.size(), std::vector<std::uint32_t>(n));
    parallel_for(cols.size(), [&](std::size_t f) {
        auto& ord = presorted[f];
        std::iota(ord.begin(), ord.end(), 0u);
        std::stable_sort(ord.begin(), ord.end(),
                         [&col = cols[f]](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
    });

    // Row-major margins; class-major gradient buffers.
    std::vector<double> margins(n * n_classes, hp.base_score);
    std::vector<std::vector<double>> grad(n_classes, std::vector<double>(n));
    std::vector<std::vector<double>> hess(n_classes, std::vector<double>(n));
    std::vector<std::vector<double>> delta(n_classes, std::vector<double>(n));
    std::vector<double> g_row(n_classes), h_row(n_classes);

    TreeGrower grower(cols, presorted, hp);
    for (int round = 0; round < hp.n_estimators; ++round) {
        for (std::size_t r = 0; r < n; ++r) {
            std::span<const double> m(margins.data() + r * n_classes, n_classes);
            grad_hess_into(m, train_table.labels[r], train_table.sample_weights[r], g_row, h_row);
            for (std::size_t k = 0; k < n_classes; ++k) {
                grad[k][r] = g_row[k];
                hess[k][r] = h_row[k];
            }
        }
        for (std::size_t k = 0; k < n_classes; ++k)
            ens.trees.push_back(grower.grow(grad[k], hess[k], delta[k]));
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t k = 0; k < n_classes; ++k) margins[r * n_classes + k] += delta[k][r];
    }
    return ens;
}

std::vector<double> predict_margin(const TreeEnsemble& ens, std::span<const double> x) {
    if (x.size() != ens.n_features())
        throw Error(ErrorKind::schema, "feature vector has " + std::to_string(x.size()) +
                                           " values, model expects " + std::to_string(ens.n_features()));
    std::vector<double> margin(ens.n_classes, ens.base_score);
    for (std::size_t t = 0; t < ens.trees.size(); ++t) margin[ens.class_of_tree(t)] += ens.trees[t].predict(x);
    return margin;
}

int argmax(std::span<const double> margins) {
    // max_element returns the first maximum, i.e. the lowest class index.
    return static_cast<int>(std::max_element(margins.begin(), margins.end()) - margins.begin());
}

int predict_class(const TreeEnsemble& ens, std::span<const double> x) {
    return argmax(predict_margin(ens, x));
}

}  // namespace aptids::gbt
