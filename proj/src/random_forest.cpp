#include "phenoclass/random_forest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "phenoclass/csv_io.hpp"
#include "phenoclass/error.hpp"
#include "phenoclass/rng.hpp"
#include "phenoclass/threading.hpp"

namespace pheno {

double gini_impurity(std::span<const int> class_counts, int total) {
    if (total <= 0) return 0.0;
    double sum_sq = 0.0;
    for (int c : class_counts) {
        const double p = static_cast<double>(c) / total;
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

SplitDecision best_split(const Eigen::MatrixXd& features, std::span<const int> labels,
                         std::span<const int> sample_indices,
                         std::span<const int> feature_subset, int n_classes) {
    SplitDecision best;
    const int n = static_cast<int>(sample_indices.size());
    if (n < 2) return best;

    std::vector<int> sorted_features(feature_subset.begin(), feature_subset.end());
    std::sort(sorted_features.begin(), sorted_features.end());

    std::vector<std::pair<double, int>> column(n);  // (value, label)
    std::vector<int> left_counts(n_classes), right_counts(n_classes);

    for (int f : sorted_features) {
        for (int i = 0; i < n; ++i) {
            column[i] = {features(sample_indices[i], f), labels[sample_indices[i]]};
        }
        std::sort(column.begin(), column.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });

        std::fill(left_counts.begin(), left_counts.end(), 0);
        std::fill(right_counts.begin(), right_counts.end(), 0);
        for (const auto& [v, y] : column) ++right_counts[y];

        // Scan boundaries between distinct consecutive values; the
        // candidate threshold is their midpoint.
        for (int i = 0; i < n - 1; ++i) {
            ++left_counts[column[i].second];
            --right_counts[column[i].second];
            if (column[i].first == column[i + 1].first) continue;
            const int n_left = i + 1;
            const int n_right = n - n_left;
            const double impurity =
                (n_left * gini_impurity(left_counts, n_left) +
                 n_right * gini_impurity(right_counts, n_right)) /
                n;
            const double threshold = 0.5 * (column[i].first + column[i + 1].first);
            // Midpoints of adjacent doubles can round onto the upper value;
            // such a threshold would route both sides left.
            if (!(threshold < column[i + 1].first)) continue;
            if (!best.valid || impurity < best.weighted_impurity ||
                (impurity == best.weighted_impurity &&
                 (f < best.feature ||
                  (f == best.feature && threshold < best.threshold)))) {
                best.valid = true;
                best.feature = f;
                best.threshold = threshold;
                best.weighted_impurity = impurity;
            }
        }
    }
    return best;
}

namespace {

int resolve_max_features(const ForestConfig& config, int p) {
    if (config.max_features > 0) return std::min(config.max_features, p);
    return std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(p)))));
}

std::vector<int> class_histogram(std::span<const int> labels,
                                 std::span<const int> indices, int n_classes) {
    std::vector<int> hist(n_classes, 0);
    for (int i : indices) ++hist[labels[i]];
    return hist;
}

bool is_pure(std::span<const int> hist) {
    int nonzero = 0;
    for (int c : hist) nonzero += c > 0 ? 1 : 0;
    return nonzero <= 1;
}

DecisionTree grow_tree(const Eigen::MatrixXd& features, std::span<const int> labels,
                       int n_classes, const ForestConfig& config, uint64_t tree_seed) {
    const int n = static_cast<int>(features.rows());
    const int p = static_cast<int>(features.cols());
    const int mtry = resolve_max_features(config, p);

    Rng rng(tree_seed);
    std::vector<int> root_samples(n);
    if (config.bootstrap) {
        for (int i = 0; i < n; ++i) {
            root_samples[i] = static_cast<int>(rng.bounded(static_cast<uint64_t>(n)));
        }
    } else {
        for (int i = 0; i < n; ++i) root_samples[i] = i;
    }

    DecisionTree tree;
    tree.seed = tree_seed;

    struct Work {
        int node;
        std::vector<int> samples;
    };
    std::vector<Work> stack;
    tree.nodes.emplace_back();
    stack.push_back({0, std::move(root_samples)});

    while (!stack.empty()) {
        Work work = std::move(stack.back());
        stack.pop_back();
        auto hist = class_histogram(labels, work.samples, n_classes);

        auto make_leaf = [&] {
            tree.nodes[work.node].feature = -1;
            tree.nodes[work.node].histogram = hist;
        };

        if (static_cast<int>(work.samples.size()) < config.min_samples_split ||
            is_pure(hist)) {
            make_leaf();
            continue;
        }

        std::vector<int> subset = rng.sample_without_replacement(p, mtry);
        SplitDecision split =
            best_split(features, labels, work.samples, subset, n_classes);
        if (!split.valid) {
            make_leaf();
            continue;
        }

        std::vector<int> left, right;
        for (int i : work.samples) {
            (features(i, split.feature) <= split.threshold ? left : right).push_back(i);
        }
        // Midpoint thresholds always route at least one sample each way.
        require(!left.empty() && !right.empty(), "degenerate split");

        const int left_id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        const int right_id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes[work.node].feature = split.feature;
        tree.nodes[work.node].threshold = split.threshold;
        tree.nodes[work.node].left = left_id;
        tree.nodes[work.node].right = right_id;

        // Depth-first, left first, for a stable node numbering.
        stack.push_back({right_id, std::move(right)});
        stack.push_back({left_id, std::move(left)});
    }
    return tree;
}

const TreeNode& route_to_leaf(const DecisionTree& tree, const Eigen::MatrixXd& features,
                              Eigen::Index row) {
    int node = 0;
    while (!tree.nodes[node].is_leaf()) {
        const auto& nd = tree.nodes[node];
        node = features(row, nd.feature) <= nd.threshold ? nd.left : nd.right;
    }
    return tree.nodes[node];
}

}  // namespace

ForestModel rf_fit(const Eigen::MatrixXd& features, std::span<const int> labels,
                   const ForestConfig& config) {
    require(features.rows() == static_cast<Eigen::Index>(labels.size()),
            "rf_fit: feature rows vs labels mismatch");
    require(features.rows() >= 1, "rf_fit: empty training set");
    require(config.n_trees >= 1, "rf_fit: need at least one tree");
    require(!features.hasNaN(), "rf_fit: NaN features (impute upstream)");

    int n_classes = 0;
    for (int y : labels) {
        require(y >= 0, "rf_fit: negative label");
        n_classes = std::max(n_classes, y + 1);
    }
    int distinct = 0;
    {
        std::vector<int> hist(n_classes, 0);
        for (int y : labels) ++hist[y];
        for (int c : hist) distinct += c > 0 ? 1 : 0;
    }
    require(distinct >= 2, "rf_fit: single-class input");

    ForestModel model;
    model.config = config;
    model.n_classes = n_classes;
    model.n_features = static_cast<int>(features.cols());
    model.trees.resize(config.n_trees);

    parallel_for(
        config.n_trees,
        [&](int t) {
            model.trees[t] = grow_tree(features, labels, n_classes, config,
                                       derive_seed(config.seed, static_cast<uint64_t>(t)));
        },
        config.threads);
    return model;
}

RfPrediction rf_predict(const ForestModel& model, const Eigen::MatrixXd& features) {
    require(static_cast<int>(features.cols()) == model.n_features,
            "rf_predict: model trained on ", model.n_features, " features, got ",
            features.cols());
    RfPrediction pred;
    pred.probabilities = Eigen::MatrixXd::Zero(features.rows(), model.n_classes);
    pred.labels.resize(features.rows());

    for (Eigen::Index r = 0; r < features.rows(); ++r) {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(model.n_classes);
        for (const auto& tree : model.trees) {
            const TreeNode& leaf = route_to_leaf(tree, features, r);
            int total = 0;
            for (int c : leaf.histogram) total += c;
            for (int k = 0; k < model.n_classes; ++k) {
                acc(k) += static_cast<double>(leaf.histogram[k]) / total;
            }
        }
        acc /= static_cast<double>(model.trees.size());
        pred.probabilities.row(r) = acc.transpose();
        int best = 0;
        for (int k = 1; k < model.n_classes; ++k) {
            if (acc(k) > acc(best)) best = k;  // ties keep the lower class id
        }
        pred.labels[r] = best;
    }
    return pred;
}

std::string serialize_forest(const ForestModel& model) {
    std::ostringstream out;
    out << "phenoclass-forest v1\n";
    out << "trees " << model.trees.size() << " classes " << model.n_classes
        << " features " << model.n_features << " seed " << model.config.seed
        << " max_features " << model.config.max_features << " min_samples_split "
        << model.config.min_samples_split << " bootstrap "
        << (model.config.bootstrap ? 1 : 0) << '\n';
    for (size_t t = 0; t < model.trees.size(); ++t) {
        const auto& tree = model.trees[t];
        out << "tree " << t << " seed " << tree.seed << " nodes "
            << tree.nodes.size() << '\n';
        for (size_t i = 0; i < tree.nodes.size(); ++i) {
            const auto& node = tree.nodes[i];
            if (node.is_leaf()) {
                out << "node " << i << " leaf";
                for (int c : node.histogram) out << ' ' << c;
                out << '\n';
            } else {
                out << "node " << i << " split " << node.feature << ' '
                    << format_double(node.threshold) << " left " << node.left
                    << " right " << node.right << '\n';
            }
        }
    }
    return out.str();
}

ForestModel parse_forest(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) &&
                line == "phenoclass-forest v1",
            "not a phenoclass forest dump");
    ForestModel model;
    {
        require(static_cast<bool>(std::getline(in, line)), "missing forest header");
        std::istringstream ls(line);
        std::string tag;
        size_t n_trees = 0;
        int bootstrap = 1;
        ls >> tag >> n_trees;
        require(tag == "trees", "malformed forest header");
        ls >> tag >> model.n_classes >> tag >> model.n_features >> tag >>
            model.config.seed >> tag >> model.config.max_features >> tag >>
            model.config.min_samples_split >> tag >> bootstrap;
        require(!ls.fail(), "malformed forest header");
        model.config.bootstrap = bootstrap != 0;
        model.config.n_trees = static_cast<int>(n_trees);
        model.trees.resize(n_trees);
    }
    for (auto& tree : model.trees) {
        require(static_cast<bool>(std::getline(in, line)), "missing tree header");
        std::istringstream ls(line);
        std::string tag;
        size_t index = 0, n_nodes = 0;
        ls >> tag >> index >> tag >> tree.seed >> tag >> n_nodes;
        require(!ls.fail(), "malformed tree header: ", line);
        tree.nodes.resize(n_nodes);
        for (auto& node : tree.nodes) {
            require(static_cast<bool>(std::getline(in, line)), "missing node line");
            std::istringstream ns(line);
            size_t ni = 0;
            std::string kind;
            ns >> tag >> ni >> kind;
            if (kind == "leaf") {
                node.feature = -1;
                node.histogram.assign(model.n_classes, 0);
                for (int& c : node.histogram) ns >> c;
            } else {
                ns >> node.feature >> node.threshold >> tag >> node.left >> tag >>
                    node.right;
            }
            require(!ns.fail(), "malformed node line: ", line);
        }
    }
    return model;
}

void write_forest(const std::filesystem::path& path, const ForestModel& model) {
    atomic_write_file(path, serialize_forest(model));
}

ForestModel read_forest(const std::filesystem::path& path) {
    require(std::filesystem::exists(path), "model not found: ", path.string());
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open: ", path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_forest(buf.str());
}

}  // namespace pheno
