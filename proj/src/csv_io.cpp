#include "phenoclass/csv_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace pheno {

std::vector<std::string> split_csv_line(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string> fields;
    size_t start = 0;
    for (;;) {
        size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.emplace_back(line.substr(start));
            break;
        }
        fields.emplace_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

std::string format_double(double v) {
    char buf[40];
    // Shortest representation that parses back to the same double.
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        double back = 0.0;
        auto [ptr, ec] = std::from_chars(buf, buf + std::char_traits<char>::length(buf), back);
        (void)ptr;
        if (ec == std::errc() && back == v) return buf;
    }
    return buf;
}

std::optional<double> parse_double(std::string_view s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

void atomic_write_file(const std::filesystem::path& path, const std::string& contents) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), "cannot open for writing: ", tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        require(out.good(), "write failed: ", tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

namespace {

std::ifstream open_or_fail(const std::filesystem::path& path) {
    require(std::filesystem::exists(path), "file not found: ", path.string());
    std::ifstream in(path);
    require(in.good(), "cannot open: ", path.string());
    return in;
}

void check_header(const std::filesystem::path& path, const std::string& line,
                  std::string_view expected) {
    std::string got = line;
    if (!got.empty() && got.back() == '\r') got.pop_back();
    require(got == expected, path.string(), ": malformed header, expected `",
            expected, "`, got `", got, "`");
}

}  // namespace

IngestResult ingest_csv(const std::filesystem::path& path, const IngestionConfig& config) {
    auto in = open_or_fail(path);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), path.string(), ": empty file");
    check_header(path, line, "plot_id,date,band,value,cloud_prob");

    IngestResult result;
    size_t line_no = 1;
    auto reject = [&](size_t no, std::string reason) {
        result.rejected.push_back({no, std::move(reason)});
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 5) {
            reject(line_no, "expected 5 fields, got " + std::to_string(fields.size()));
            continue;
        }
        Observation obs;
        obs.plot_id = fields[0];
        if (obs.plot_id.empty()) {
            reject(line_no, "empty plot_id");
            continue;
        }
        auto date = parse_date(fields[1]);
        if (!date) {
            reject(line_no, "unparseable date `" + fields[1] + "`");
            continue;
        }
        if (date->year != config.required_year) {
            reject(line_no, "date outside " + std::to_string(config.required_year) +
                                ": `" + fields[1] + "`");
            continue;
        }
        obs.date = *date;
        auto band = band_from_name(fields[2]);
        if (!band) {
            reject(line_no, "unknown band `" + fields[2] + "`");
            continue;
        }
        obs.band = *band;
        auto value = parse_double(fields[3]);
        if (!value) {
            reject(line_no, "non-numeric value `" + fields[3] + "`");
            continue;
        }
        obs.value = *value;
        if (is_s2_raw_band(obs.band) && obs.value < 0) {
            reject(line_no, "negative digital number for S2 band " +
                                std::string(band_name(obs.band)));
            continue;
        }
        if (!fields[4].empty()) {
            auto cloud = parse_double(fields[4]);
            if (!cloud) {
                reject(line_no, "non-numeric cloud_prob `" + fields[4] + "`");
                continue;
            }
            if (*cloud < 0 || *cloud > 100) {
                reject(line_no, "cloud_prob outside [0, 100]: " + fields[4]);
                continue;
            }
            obs.cloud_prob = *cloud;
        }
        result.observations.push_back(std::move(obs));
    }
    return result;
}

std::vector<StaticRecord> read_static_csv(const std::filesystem::path& path) {
    auto in = open_or_fail(path);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), path.string(), ": empty file");
    check_header(path, line, "plot_id,lat,lon,elevation_m,slope_deg");

    std::vector<StaticRecord> records;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        require(fields.size() == 5, path.string(), " line ", line_no,
                ": expected 5 fields");
        StaticRecord rec;
        rec.plot_id = fields[0];
        auto lat = parse_double(fields[1]);
        auto lon = parse_double(fields[2]);
        auto elev = parse_double(fields[3]);
        auto slope = parse_double(fields[4]);
        require(lat && lon && elev && slope, path.string(), " line ", line_no,
                ": non-numeric field");
        rec.lat_deg = *lat;
        rec.lon_deg = *lon;
        rec.elevation_m = *elev;
        rec.slope_deg = *slope;
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<std::pair<std::string, std::string>> read_labels_csv(
    const std::filesystem::path& path) {
    auto in = open_or_fail(path);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), path.string(), ": empty file");
    check_header(path, line, "plot_id,class_name");

    std::vector<std::pair<std::string, std::string>> labels;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        require(fields.size() == 2, path.string(), " line ", line_no,
                ": expected 2 fields");
        require(!fields[0].empty() && !fields[1].empty(), path.string(), " line ",
                line_no, ": empty field");
        labels.emplace_back(std::move(fields[0]), std::move(fields[1]));
    }
    return labels;
}

void write_observations_csv(const std::filesystem::path& path,
                            std::span<const Observation> observations) {
    std::ostringstream out;
    out << "plot_id,date,band,value,cloud_prob\n";
    for (const auto& obs : observations) {
        out << obs.plot_id << ',' << format_date(obs.date) << ','
            << band_name(obs.band) << ',' << format_double(obs.value) << ',';
        if (obs.cloud_prob) out << format_double(*obs.cloud_prob);
        out << '\n';
    }
    atomic_write_file(path, out.str());
}

void write_static_csv(const std::filesystem::path& path,
                      std::span<const StaticRecord> records) {
    std::ostringstream out;
    out << "plot_id,lat,lon,elevation_m,slope_deg\n";
    for (const auto& rec : records) {
        out << rec.plot_id << ',' << format_double(rec.lat_deg) << ','
            << format_double(rec.lon_deg) << ',' << format_double(rec.elevation_m)
            << ',' << format_double(rec.slope_deg) << '\n';
    }
    atomic_write_file(path, out.str());
}

void write_labels_csv(
    const std::filesystem::path& path,
    std::span<const std::pair<std::string, std::string>> labels) {
    std::ostringstream out;
    out << "plot_id,class_name\n";
    for (const auto& [plot, name] : labels) out << plot << ',' << name << '\n';
    atomic_write_file(path, out.str());
}

}  // namespace pheno
