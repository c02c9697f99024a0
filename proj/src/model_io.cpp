#include "aptids/gbt.hpp"

#include "aptids/error.hpp"
#include "aptids/text_util.hpp"

#include <json.hpp>

namespace aptids::gbt {

using nlohmann::json;

namespace {

json hyperparams_to_json(const Hyperparams& hp) {
    return {
        {"n_estimators", hp.n_estimators},
        {"learning_rate", hp.learning_rate},
        {"max_depth", hp.max_depth},
        {"min_child_weight", hp.min_child_weight},
        {"gamma", hp.gamma},
        {"lambda", hp.lambda},
        {"alpha", hp.alpha},
        {"objective", "multiclass_softmax"},
        {"base_score", hp.base_score},
        {"seed", hp.seed},
    };
}

Hyperparams hyperparams_from_json(const json& j) {
    Hyperparams hp;
    hp.n_estimators = j.at("n_estimators").get<int>();
    hp.learning_rate = j.at("learning_rate").get<double>();
    hp.max_depth = j.at("max_depth").get<int>();
    hp.min_child_weight = j.at("min_child_weight").get<double>();
    hp.gamma = j.at("gamma").get<double>();
    hp.lambda = j.at("lambda").get<double>();
    hp.alpha = j.at("alpha").get<double>();
    if (j.at("objective").get<std::string>() != "multiclass_softmax")
        throw Error(ErrorKind::model, "unsupported objective '" + j.at("objective").get<std::string>() + "'");
    hp.base_score = j.at("base_score").get<double>();
    hp.seed = j.at("seed").get<std::uint64_t>();
    return hp;
}

json node_to_json(const TreeNode& n) {
    return {
        {"kind", n.is_leaf() ? "leaf" : "split"},
        {"feature", n.feature},
        {"threshold", n.threshold},
        {"left", n.left},
        {"right", n.right},
        {"value", n.value},
        {"cover", n.cover},
    };
}

TreeNode node_from_json(const json& j) {
    const auto kind = j.at("kind").get<std::string>();
    TreeNode n;
    n.cover = j.at("cover").get<double>();
    if (kind == "leaf") {
        n.value = j.at("value").get<double>();
    } else if (kind == "split") {
        n.kind = NodeKind::split;
        n.feature = j.at("feature").get<int>();
        n.threshold = j.at("threshold").get<double>();
        n.left = j.at("left").get<int>();
        n.right = j.at("right").get<int>();
    } else {
        throw Error(ErrorKind::model, "unknown node kind '" + kind + "'");
    }
    return n;
}

}  // namespace

std::string serialize(const TreeEnsemble& ens) {
    json trees = json::array();
    for (const auto& tree : ens.trees) {
        json nodes = json::array();
        for (const auto& n : tree.nodes) nodes.push_back(node_to_json(n));
        trees.push_back({{"nodes", std::move(nodes)}});
    }
    json doc = {
        {"format_version", kFormatVersion},
        {"hyperparams", hyperparams_to_json(ens.hyperparams)},
        {"classes", ens.class_names},
        {"features", ens.feature_names},
        {"base_score", ens.base_score},
        {"trees", std::move(trees)},
    };
    return doc.dump(1) + "\n";
}

TreeEnsemble deserialize(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::model, std::string("malformed model document: ") + e.what());
    }
    try {
        if (!doc.is_object() || !doc.contains("format_version"))
            throw Error(ErrorKind::model, "model document has no format_version");
        const auto& version = doc.at("format_version");
        if (!version.is_number_integer() || version.get<int>() != kFormatVersion)
            throw Error(ErrorKind::model, "unsupported model format_version " + version.dump() +
                                              " (expected " + std::to_string(kFormatVersion) + ")");
        TreeEnsemble ens;
        ens.hyperparams = hyperparams_from_json(doc.at("hyperparams"));
        ens.class_names = doc.at("classes").get<std::vector<std::string>>();
        ens.feature_names = doc.at("features").get<std::vector<std::string>>();
        ens.n_classes = ens.class_names.size();
        ens.base_score = doc.at("base_score").get<double>();
        for (const auto& t : doc.at("trees")) {
            Tree tree;
            for (const auto& n : t.at("nodes")) tree.nodes.push_back(node_from_json(n));
            ens.trees.push_back(std::move(tree));
        }
        ens.validate();
        return ens;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::model, std::string("malformed model document: ") + e.what());
    }
}

void save_model(const TreeEnsemble& ens, const std::filesystem::path& path) {
    write_text_atomic(path, serialize(ens));
}

TreeEnsemble load_model(const std::filesystem::path& path) { return deserialize(read_text(path)); }

}  // namespace aptids::gbt
