#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "phenoclass/data_model.hpp"

namespace pheno {

// A data row that failed validation. Row numbers are 1-based file lines
// (the header is line 1).
struct RowRejection {
    size_t line = 0;
    std::string reason;
};

struct IngestResult {
    std::vector<Observation> observations;
    std::vector<RowRejection> rejected;
};

struct IngestionConfig {
    int required_year = 2020;
};

// Observation CSV: header `plot_id,date,band,value,cloud_prob`, ISO dates,
// cloud_prob empty for non-S2 rows. File-level problems throw; bad rows are
// collected in IngestResult::rejected.
IngestResult ingest_csv(const std::filesystem::path& path,
                        const IngestionConfig& config = {});

// Static-attributes CSV: `plot_id,lat,lon,elevation_m,slope_deg`.
std::vector<StaticRecord> read_static_csv(const std::filesystem::path& path);

// Labels CSV: `plot_id,class_name`.
std::vector<std::pair<std::string, std::string>> read_labels_csv(
    const std::filesystem::path& path);

void write_observations_csv(const std::filesystem::path& path,
                            std::span<const Observation> observations);
void write_static_csv(const std::filesystem::path& path,
                      std::span<const StaticRecord> records);
void write_labels_csv(
    const std::filesystem::path& path,
    std::span<const std::pair<std::string, std::string>> labels);

// Shared CSV plumbing (no quoting; fields must not contain commas).
std::vector<std::string> split_csv_line(std::string_view line);
std::string format_double(double v);  // shortest round-trippable form
std::optional<double> parse_double(std::string_view s);

// Write-to-temp-then-rename, so readers never observe partial files.
void atomic_write_file(const std::filesystem::path& path,
                       const std::string& contents);

}  // namespace pheno
