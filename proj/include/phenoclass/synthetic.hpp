#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "phenoclass/data_model.hpp"

namespace pheno {

// Per-class phenology recipe. The greenness latent g(month) drives NDVI
// (exactly) and every S2 band (affinely):
//   g = baseline + amplitude*cos(2*pi*(month - peak_month)/12)
//     + wiggle_amplitude*cos(pi*month/2 - wiggle_phase) + noise
// The wiggle is a third-harmonic term: orthogonal to the first-order
// fit on the 12-month grid and median-neutral within seasons, so classes
// that differ only in wiggle_phase separate through monthly dynamics, not
// through seasonal statistics.
struct SynthClassSpec {
    std::string name;
    int count = 0;

    double ndvi_baseline = 0.45;
    double ndvi_amplitude = 0.30;
    double peak_month = 6.0;  // greenness maximum, 0..11 scale
    double trend_per_year = 0.0;
    double wiggle_amplitude = 0.0;
    double wiggle_phase = 0.0;  // radians

    double vv_db = -8.0;
    double vh_db = -14.0;
    double s1_seasonal_db = 0.8;

    double baseline_jitter = 0.035;
    double amplitude_jitter = 0.03;
    double peak_jitter_months = 0.3;
    double monthly_noise = 0.02;
    double s1_noise_db = 0.8;

    double s2_total_dn = 4200.0;  // B8 + B4 budget in digital numbers
};

struct SynthSpec {
    std::string schema_tag = "synthetic";
    std::vector<SynthClassSpec> classes;
};

// Class tables shaped like the three reference datasets.
SynthSpec simb_preset();  // 7 classes, imbalanced, 1,479 samples
SynthSpec comb_preset();  // 13 classes, imbalanced, 1,462 samples
SynthSpec siba_preset();  // 7 classes, balanced, 13,790 samples

SynthSpec preset_by_name(std::string_view name);  // comb | simb | siba

// Deterministic for a fixed seed; counts match the spec exactly.
Dataset synth_generate(const SynthSpec& spec, uint64_t seed);

// Writes observations.csv, static.csv, labels.csv in the documented
// schemas so the generated dataset can round-trip through ingestion.
void write_dataset_csvs(const Dataset& dataset, const std::filesystem::path& dir);

// Rebuilds a Dataset from the three CSVs (ingest -> cloud filter ->
// composite -> assemble), using the labels file's class names.
Dataset read_dataset_csvs(const std::filesystem::path& dir,
                          double cloud_threshold_pct = 65.0);

}  // namespace pheno
