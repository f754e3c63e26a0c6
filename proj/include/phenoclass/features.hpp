#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "phenoclass/harmonic.hpp"
#include "phenoclass/preprocess.hpp"

namespace pheno {

enum class SensorSubset { S1, S2, S1S2 };
enum class FeatureKind { Seasonal, Harmonic, All };

std::string_view sensor_subset_name(SensorSubset s);
std::string_view feature_kind_name(FeatureKind k);

// Fixed index -> (band, feature) mapping. Seasonal block first (4 medians
// per band), then the harmonic block (7 parameters per band), both in band
// enumeration order. The same inputs always produce the same registry.
class FeatureRegistry {
public:
    FeatureRegistry(SensorSubset subset, FeatureKind kind);

    int size() const { return static_cast<int>(names_.size()); }
    const std::string& name(int i) const { return names_[i]; }
    const std::vector<std::string>& names() const { return names_; }
    std::span<const BandId> bands() const { return bands_; }
    FeatureKind kind() const { return kind_; }
    SensorSubset subset() const { return subset_; }
    int seasonal_count() const;
    int harmonic_count() const;

private:
    SensorSubset subset_;
    FeatureKind kind_;
    std::vector<BandId> bands_;
    std::vector<std::string> names_;
};

constexpr double kMissingFeature = std::numeric_limits<double>::quiet_NaN();

// Season windows: winter {Jan,Feb,Dec}, spring {Mar-May}, summer {Jun-Aug},
// autumn {Sep-Nov}. Missing seasons come back as NaN for downstream
// imputation.
std::array<std::optional<double>, 4> seasonal_medians_for_band(
    const MonthlyStack& stack, BandId band);

// 4 medians per band, band-major. 19 bands -> 76 values.
std::vector<double> seasonal_medians(const MonthlyStack& stack,
                                     std::span<const BandId> bands);

// 7 harmonic parameters per band (beta0..beta3, amplitude, phase, rmse).
// 19 bands -> 133 values. Bands whose fit fails contribute NaNs and a
// diagnostic entry.
struct FitDiagnostic {
    BandId band;
    std::string message;
};
std::vector<double> harmonic_features(const MonthlyStack& stack,
                                      std::span<const BandId> bands,
                                      const HarmonicOptions& options = {},
                                      std::vector<FitDiagnostic>* diagnostics = nullptr);

// Full vector for one pixel in registry order; NaN marks missing.
Eigen::VectorXd build_vector(const MonthlyStack& stack,
                             const FeatureRegistry& registry,
                             const HarmonicOptions& options = {},
                             std::vector<FitDiagnostic>* diagnostics = nullptr);

// One row per series, parallelized across pixels.
Eigen::MatrixXd build_feature_matrix(std::span<const PixelTimeSeries> series,
                                     const FeatureRegistry& registry,
                                     const IndexCoefficients& coeffs,
                                     int max_threads = 0);

// Column-mean imputation fitted on the training rows only.
class Imputer {
public:
    void fit(const Eigen::MatrixXd& features, std::span<const int> row_indices);
    Eigen::MatrixXd transform(Eigen::MatrixXd features) const;
    const Eigen::VectorXd& column_means() const { return means_; }

private:
    Eigen::VectorXd means_;
};

// Feature matrix CSV: header `plot_id,<registry names...>`.
void write_feature_csv(const std::filesystem::path& path,
                       std::span<const std::string> plot_ids,
                       const Eigen::MatrixXd& features,
                       const FeatureRegistry& registry);
struct FeatureTable {
    std::vector<std::string> plot_ids;
    std::vector<std::string> column_names;
    Eigen::MatrixXd values;
};
FeatureTable read_feature_csv(const std::filesystem::path& path);

}  // namespace pheno
