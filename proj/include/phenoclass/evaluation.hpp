#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "phenoclass/features.hpp"
#include "phenoclass/mlp.hpp"
#include "phenoclass/random_forest.hpp"
#include "phenoclass/synthetic.hpp"

namespace pheno {

struct SplitSpec {
    double train_fraction = 0.7;
    uint64_t seed = 0;
};

struct SplitResult {
    std::vector<int> train;
    std::vector<int> test;
};

// Class-per-split: every class is shuffled and split at the ratio, with
// the train count rounded half-up. Train and test partition the dataset.
SplitResult stratified_split(std::span<const int> labels, int n_classes,
                             const SplitSpec& spec);

struct ConfusionMatrix {
    int k = 0;
    std::vector<std::string> class_names;
    Eigen::MatrixXi counts;  // rows = reference, cols = predicted

    int total() const { return counts.sum(); }
};

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred,
                          int k);

struct MetricsReport {
    double overall_accuracy = 0.0;
    double macro_f1 = 0.0;
    double weighted_f1 = 0.0;
    std::vector<double> precision, recall, f1;
    std::vector<int> support;          // reference counts per class
    std::vector<bool> degenerate;      // no references and no predictions
};

MetricsReport metrics(const ConfusionMatrix& conf);

double mean_of(std::span<const double> values);
double sample_stddev(std::span<const double> values);  // n-1 denominator

struct MultiSeedReport {
    std::string pipeline;
    std::vector<uint64_t> seeds;
    std::vector<MetricsReport> per_seed;
    std::vector<ConfusionMatrix> confusions;

    std::vector<double> metric_values(std::string_view metric) const;
    double mean(std::string_view metric) const;
    double stddev(std::string_view metric) const;
};

enum class Pipeline { RfHandcrafted, RfDeep, MlpDeep };
std::string_view pipeline_name(Pipeline p);

struct ExperimentConfig {
    SplitSpec split;
    SensorSubset subset = SensorSubset::S1S2;
    FeatureKind kind = FeatureKind::All;
    IndexCoefficients coeffs = IndexCoefficients::defaults();
    ForestConfig rf;
    EncoderConfig encoder;
    NormalizationSpec norm;
    GroupMask groups = GroupMask::all();
    TrainConfig train;
    MlpConfig mlp;
    int mae_warmstart_epochs = 0;  // MAE on the train rows before fine-tuning
    double mae_mask_ratio = 0.75;
    int threads = 0;
};

// Per seed: fresh stratified split, feature extraction (training-side
// fitting only), classifier fit on train, metrics on test. Nothing
// fitted ever reads a test row.
MultiSeedReport run_experiment(Pipeline pipeline, const Dataset& dataset,
                               std::span<const uint64_t> seeds,
                               const ExperimentConfig& config);

// The three-pipeline comparison; the two deep pipelines share one
// fine-tuning run per seed (the RF head consumes features extracted with
// the fine-tuned encoder).
struct ComparisonReport {
    MultiSeedReport mlp_deep, rf_deep, rf_hand;
};

ComparisonReport run_comparison(const Dataset& dataset,
                                std::span<const uint64_t> seeds,
                                const ExperimentConfig& config);

// Hand-crafted feature ablation: {Seasonal, Harmonic, All} x {S1, S2, S1+S2}
// accuracies with the RF classifier.
struct AblationCell {
    FeatureKind kind;
    SensorSubset subset;
    double mean_accuracy = 0.0;
    double stddev_accuracy = 0.0;
    int feature_count = 0;
};

struct AblationReport {
    std::vector<AblationCell> cells;  // 9 cells, kind-major
};

AblationReport ablation_table(const Dataset& dataset, std::span<const uint64_t> seeds,
                              const ExperimentConfig& config);

// Deterministic per-seed training internals, exposed for the leakage tests
// and the CLI.
struct SeedRunArtifacts {
    SplitResult split;
    std::string forest_dump;        // serialized classifier (RF pipelines)
    std::string encoder_checksum;   // checksum of fine-tuned encoder tensors
    MetricsReport report;
    ConfusionMatrix conf;
};

SeedRunArtifacts run_single_seed(Pipeline pipeline, const Dataset& dataset,
                                 uint64_t seed, const ExperimentConfig& config);

}  // namespace pheno
