#include "phenoclass/features.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "phenoclass/csv_io.hpp"
#include "phenoclass/threading.hpp"

namespace pheno {

namespace {

constexpr std::array<std::array<int, 3>, 4> kSeasonMonths = {{
    {0, 1, 11},   // winter
    {2, 3, 4},    // spring
    {5, 6, 7},    // summer
    {8, 9, 10},   // autumn
}};

constexpr std::array<std::string_view, 4> kSeasonNames = {"winter", "spring",
                                                          "summer", "autumn"};
constexpr std::array<std::string_view, 7> kHarmonicNames = {
    "beta0", "beta1", "beta2", "beta3", "amplitude", "phase", "rmse"};

std::vector<BandId> subset_bands(SensorSubset subset) {
    std::vector<BandId> bands;
    for (BandId b : handcrafted_bands()) {
        const bool s1 = is_s1_band(b);
        if (subset == SensorSubset::S1 && !s1) continue;
        if (subset == SensorSubset::S2 && s1) continue;
        bands.push_back(b);
    }
    return bands;
}

}  // namespace

std::string_view sensor_subset_name(SensorSubset s) {
    switch (s) {
        case SensorSubset::S1: return "s1";
        case SensorSubset::S2: return "s2";
        case SensorSubset::S1S2: return "s1s2";
    }
    return "?";
}

std::string_view feature_kind_name(FeatureKind k) {
    switch (k) {
        case FeatureKind::Seasonal: return "seasonal";
        case FeatureKind::Harmonic: return "harmonic";
        case FeatureKind::All: return "all";
    }
    return "?";
}

FeatureRegistry::FeatureRegistry(SensorSubset subset, FeatureKind kind)
    : subset_(subset), kind_(kind), bands_(subset_bands(subset)) {
    if (kind != FeatureKind::Harmonic) {
        for (BandId b : bands_) {
            for (auto season : kSeasonNames) {
                names_.push_back(std::string(band_name(b)) + "_" + std::string(season));
            }
        }
    }
    if (kind != FeatureKind::Seasonal) {
        for (BandId b : bands_) {
            for (auto param : kHarmonicNames) {
                names_.push_back(std::string(band_name(b)) + "_" + std::string(param));
            }
        }
    }
}

int FeatureRegistry::seasonal_count() const {
    return kind_ == FeatureKind::Harmonic ? 0 : static_cast<int>(bands_.size()) * 4;
}

int FeatureRegistry::harmonic_count() const {
    return kind_ == FeatureKind::Seasonal ? 0 : static_cast<int>(bands_.size()) * 7;
}

std::array<std::optional<double>, 4> seasonal_medians_for_band(
    const MonthlyStack& stack, BandId band) {
    std::array<std::optional<double>, 4> out;
    for (int s = 0; s < 4; ++s) {
        std::vector<double> vals;
        for (int m : kSeasonMonths[s]) {
            if (stack[m].has(band)) vals.push_back(stack[m].get(band));
        }
        if (!vals.empty()) out[s] = median_of(std::move(vals));
    }
    return out;
}

std::vector<double> seasonal_medians(const MonthlyStack& stack,
                                     std::span<const BandId> bands) {
    std::vector<double> out;
    out.reserve(bands.size() * 4);
    for (BandId b : bands) {
        auto medians = seasonal_medians_for_band(stack, b);
        for (const auto& v : medians) out.push_back(v.value_or(kMissingFeature));
    }
    return out;
}

std::vector<double> harmonic_features(const MonthlyStack& stack,
                                      std::span<const BandId> bands,
                                      const HarmonicOptions& options,
                                      std::vector<FitDiagnostic>* diagnostics) {
    std::vector<double> out;
    out.reserve(bands.size() * 7);
    for (BandId b : bands) {
        std::array<std::optional<double>, kMonthsPerYear> signal;
        for (int m = 0; m < kMonthsPerYear; ++m) {
            if (stack[m].has(b)) signal[m] = stack[m].get(b);
        }
        try {
            HarmonicFit fit = fit_harmonic(signal, b, options);
            out.insert(out.end(), {fit.beta0, fit.beta1, fit.beta2, fit.beta3,
                                   fit.amplitude, fit.phase, fit.rmse});
        } catch (const Error& e) {
            if (diagnostics) diagnostics->push_back({b, e.what()});
            out.insert(out.end(), 7, kMissingFeature);
        }
    }
    return out;
}

Eigen::VectorXd build_vector(const MonthlyStack& stack,
                             const FeatureRegistry& registry,
                             const HarmonicOptions& options,
                             std::vector<FitDiagnostic>* diagnostics) {
    std::vector<double> vals;
    vals.reserve(registry.size());
    if (registry.kind() != FeatureKind::Harmonic) {
        auto seasonal = seasonal_medians(stack, registry.bands());
        vals.insert(vals.end(), seasonal.begin(), seasonal.end());
    }
    if (registry.kind() != FeatureKind::Seasonal) {
        auto harmonic = harmonic_features(stack, registry.bands(), options, diagnostics);
        vals.insert(vals.end(), harmonic.begin(), harmonic.end());
    }
    require(static_cast<int>(vals.size()) == registry.size(),
            "feature count mismatch: ", vals.size(), " vs registry ",
            registry.size());
    return Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

Eigen::MatrixXd build_feature_matrix(std::span<const PixelTimeSeries> series,
                                     const FeatureRegistry& registry,
                                     const IndexCoefficients& coeffs,
                                     int max_threads) {
    Eigen::MatrixXd features(series.size(), registry.size());
    parallel_for(
        static_cast<int>(series.size()),
        [&](int i) {
            MonthlyStack stack = band_stack_from_series(series[i], coeffs);
            features.row(i) = build_vector(stack, registry).transpose();
        },
        max_threads);
    return features;
}

void Imputer::fit(const Eigen::MatrixXd& features, std::span<const int> row_indices) {
    means_ = Eigen::VectorXd::Zero(features.cols());
    for (Eigen::Index c = 0; c < features.cols(); ++c) {
        double sum = 0.0;
        int n = 0;
        for (int r : row_indices) {
            const double v = features(r, c);
            if (std::isnan(v)) continue;
            sum += v;
            ++n;
        }
        means_(c) = n > 0 ? sum / n : 0.0;
    }
}

Eigen::MatrixXd Imputer::transform(Eigen::MatrixXd features) const {
    require(features.cols() == means_.size(), "imputer fitted on ", means_.size(),
            " columns, got ", features.cols());
    for (Eigen::Index r = 0; r < features.rows(); ++r) {
        for (Eigen::Index c = 0; c < features.cols(); ++c) {
            if (std::isnan(features(r, c))) features(r, c) = means_(c);
        }
    }
    return features;
}

void write_feature_csv(const std::filesystem::path& path,
                       std::span<const std::string> plot_ids,
                       const Eigen::MatrixXd& features,
                       const FeatureRegistry& registry) {
    require(static_cast<Eigen::Index>(plot_ids.size()) == features.rows(),
            "plot id count vs feature rows mismatch");
    std::ostringstream out;
    out << "plot_id";
    for (const auto& name : registry.names()) out << ',' << name;
    out << '\n';
    for (Eigen::Index r = 0; r < features.rows(); ++r) {
        out << plot_ids[r];
        for (Eigen::Index c = 0; c < features.cols(); ++c) {
            out << ',' << format_double(features(r, c));
        }
        out << '\n';
    }
    atomic_write_file(path, out.str());
}

FeatureTable read_feature_csv(const std::filesystem::path& path) {
    require(std::filesystem::exists(path), "file not found: ", path.string());
    std::ifstream in(path);
    require(in.good(), "cannot open: ", path.string());
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), path.string(), ": empty file");
    auto header = split_csv_line(line);
    require(header.size() >= 2 && header[0] == "plot_id", path.string(),
            ": malformed feature header");

    FeatureTable table;
    table.column_names.assign(header.begin() + 1, header.end());
    std::vector<std::vector<double>> rows;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        require(fields.size() == header.size(), path.string(), " line ", line_no,
                ": expected ", header.size(), " fields");
        table.plot_ids.push_back(fields[0]);
        std::vector<double> row(fields.size() - 1);
        for (size_t i = 1; i < fields.size(); ++i) {
            auto v = parse_double(fields[i]);
            if (!v && fields[i] == "nan") v = kMissingFeature;
            require(v.has_value(), path.string(), " line ", line_no,
                    ": non-numeric value `", fields[i], "`");
            row[i - 1] = *v;
        }
        rows.push_back(std::move(row));
    }
    table.values.resize(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(table.column_names.size()));
    for (size_t r = 0; r < rows.size(); ++r) {
        for (size_t c = 0; c < rows[r].size(); ++c) {
            table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                rows[r][c];
        }
    }
    return table;
}

}  // namespace pheno
