#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace pheno {

struct ForestConfig {
    int n_trees = 500;
    uint64_t seed = 0;
    // -1 means floor(sqrt(p)), minimum 1.
    int max_features = -1;
    int min_samples_split = 2;
    bool bootstrap = true;
    int threads = 0;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::vector<int> histogram;  // leaf class counts

    bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
    uint64_t seed = 0;
    std::vector<TreeNode> nodes;
};

struct ForestModel {
    ForestConfig config;
    int n_classes = 0;
    int n_features = 0;
    std::vector<DecisionTree> trees;
};

double gini_impurity(std::span<const int> class_counts, int total);

// Best (feature, midpoint threshold) over the given feature subset by
// weighted child Gini impurity; ties break toward the lower feature index,
// then the lower threshold. Exposed so tests can pit it against an
// exhaustive oracle.
struct SplitDecision {
    bool valid = false;
    int feature = -1;
    double threshold = 0.0;
    double weighted_impurity = 0.0;
};

SplitDecision best_split(const Eigen::MatrixXd& features, std::span<const int> labels,
                         std::span<const int> sample_indices,
                         std::span<const int> feature_subset, int n_classes);

// Bootstrap-resampled trees grown until pure (or below min_samples_split),
// each split evaluating a random subset of features. Deterministic for a
// fixed seed; trees are independent and trained concurrently.
ForestModel rf_fit(const Eigen::MatrixXd& features, std::span<const int> labels,
                   const ForestConfig& config);

struct RfPrediction {
    std::vector<int> labels;          // argmax, ties toward the lower class id
    Eigen::MatrixXd probabilities;    // mean of tree leaf distributions
};

RfPrediction rf_predict(const ForestModel& model, const Eigen::MatrixXd& features);

// Plain-text model dump (config header, then one node list per tree).
std::string serialize_forest(const ForestModel& model);
ForestModel parse_forest(const std::string& text);
void write_forest(const std::filesystem::path& path, const ForestModel& model);
ForestModel read_forest(const std::filesystem::path& path);

}  // namespace pheno
