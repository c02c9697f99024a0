#pragma once

#include "aptids/flow_ingest.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace aptids::gbt {

enum class Objective { multiclass_softmax };

// Booster settings. Defaults are the tuned values used for the APT model.
struct Hyperparams {
    int n_estimators = 100;
    double learning_rate = 0.3;
    int max_depth = 6;
    double min_child_weight = 1.0;
    double gamma = 0.0;
    double lambda = 1.0;
    double alpha = 0.0;
    Objective objective = Objective::multiclass_softmax;
    double base_score = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const Hyperparams&) const = default;
};

enum class NodeKind { split, leaf };

// Split nodes send x left iff x[feature] < threshold.
struct TreeNode {
    NodeKind kind = NodeKind::leaf;
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
    double cover = 0.0;

    bool is_leaf() const { return kind == NodeKind::leaf; }

    static TreeNode make_leaf(double value, double cover) {
        TreeNode n;
        n.value = value;
        n.cover = cover;
        return n;
    }
    static TreeNode make_split(int feature, double threshold, int left, int right, double cover) {
        TreeNode n;
        n.kind = NodeKind::split;
        n.feature = feature;
        n.threshold = threshold;
        n.left = left;
        n.right = right;
        n.cover = cover;
        return n;
    }
};

// Node 0 is the root. Nodes are stored in depth-first, left-first order.
struct Tree {
    std::vector<TreeNode> nodes;

    double predict(std::span<const double> x) const;
    int leaf_index(std::span<const double> x) const;
    std::size_t internal_count() const;
    int depth() const;
};

// Trees are round-major, class-minor: round r, class k lives at r * n_classes + k.
struct TreeEnsemble {
    std::vector<Tree> trees;
    std::size_t n_classes = 0;
    double base_score = 0.5;
    std::vector<std::string> feature_names;
    std::vector<std::string> class_names;
    Hyperparams hyperparams;

    std::size_t n_features() const { return feature_names.size(); }
    std::size_t class_of_tree(std::size_t t) const { return t % n_classes; }

    // Throws when a node references a missing feature/child or carries a
    // non-finite value.
    void validate() const;
};

struct GradHess {
    std::vector<double> g;
    std::vector<double> h;
};

// Softmax cross-entropy derivatives w.r.t. each margin, scaled by weight.
GradHess softmax_grad_hess(std::span<const double> margins, int true_class, double weight);

// T_alpha(G) = sign(G) * max(|G| - alpha, 0).
double soft_threshold(double g, double alpha);

double split_gain(double grad_left, double hess_left, double grad_right, double hess_right,
                  const Hyperparams& hp);

// -T_alpha(G) / (H + lambda); the caller applies the learning rate.
double leaf_weight(double grad_sum, double hess_sum, const Hyperparams& hp);

struct SplitCandidate {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

// Exact greedy search. g and h are indexed by table row.
std::optional<SplitCandidate> find_best_split(std::span<const std::size_t> node_rows,
                                              std::span<const double> g,
                                              std::span<const double> h,
                                              const FlowTable& table,
                                              const Hyperparams& hp);

TreeEnsemble train(const FlowTable& train_table, const Hyperparams& hp);

std::vector<double> predict_margin(const TreeEnsemble& ens, std::span<const double> x);
int predict_class(const TreeEnsemble& ens, std::span<const double> x);
int argmax(std::span<const double> margins);

std::string serialize(const TreeEnsemble& ens);
TreeEnsemble deserialize(std::string_view text);

void save_model(const TreeEnsemble& ens, const std::filesystem::path& path);
TreeEnsemble load_model(const std::filesystem::path& path);

inline constexpr int kFormatVersion = 1;

}  // namespace aptids::gbt
