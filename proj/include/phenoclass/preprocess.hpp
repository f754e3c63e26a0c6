#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "phenoclass/data_model.hpp"

namespace pheno {

// Per-plot, per-month median values. A band with zero surviving
// observations stays unset; it is never zero-filled.
struct MonthlyComposite {
    std::string plot_id;
    int month = 0;  // 0..11
    std::array<std::optional<double>, kBandCount> value{};
    std::array<int, kBandCount> count{};
};

// One month of the index-enriched band record (raw bands + derived
// indices + ERA5 passthrough).
struct BandRecord {
    std::array<std::optional<double>, kBandCount> value{};
    bool zero_denominator = false;  // some index hit a 0/0 and was set to 0

    bool has(BandId b) const { return value[band_index(b)].has_value(); }
    double get(BandId b) const { return *value[band_index(b)]; }
    void set(BandId b, double v) { value[band_index(b)] = v; }
};

using MonthlyStack = std::array<BandRecord, kMonthsPerYear>;

// Tasseled Cap rows over the 10 S2 bands (B2,B3,B4,B5,B6,B7,B8,B8A,B11,B12),
// applied to 0-1 reflectance. Defaults ship the Crist (1985) reflectance
// factors on the six Landsat-legacy bands with zeros on red edge and B8A;
// the run config can override every coefficient.
struct IndexCoefficients {
    std::array<double, 10> brightness{};
    std::array<double, 10> greenness{};
    std::array<double, 10> wetness{};

    static IndexCoefficients defaults();
};

// Drops S2 observations with cloud probability strictly above the
// threshold (percent). Everything else passes through.
std::vector<Observation> cloud_filter(std::span<const Observation> observations,
                                      double threshold_pct = 65.0);

// Median per (plot, month, band); even counts average the two middle
// values. Output is sorted by plot id, then month.
std::vector<MonthlyComposite> monthly_median(
    std::span<const Observation> observations);

// (B8 - B4) / (B8 + B4); 0 when the denominator is 0.
double compute_ndvi(double b8, double b4);

// Raw bands copied through; the 7 indices appended when all 10 S2 bands are
// present for the month, otherwise left missing.
BandRecord compute_indices(const MonthlyComposite& composite,
                           const IndexCoefficients& coeffs);

// Groups one plot's composites into the encoder input record. A group is
// present in a month only when all of its bands are; DW defaults to the
// tree class for every month with any data.
PixelTimeSeries assemble_pixel(std::span<const MonthlyComposite> composites,
                               const StaticRecord& statics);

constexpr int kDynamicWorldTreeClass = 1;

// 19-band monthly stack reconstructed from a native-unit series (the
// hand-crafted feature path).
MonthlyStack band_stack_from_series(const PixelTimeSeries& series,
                                    const IndexCoefficients& coeffs);

// Composite cache: CSV `plot_id,month,band,value,count`.
void write_composite_csv(const std::filesystem::path& path,
                         std::span<const MonthlyComposite> composites);
std::vector<MonthlyComposite> read_composite_csv(const std::filesystem::path& path);

double median_of(std::vector<double> values);

}  // namespace pheno
