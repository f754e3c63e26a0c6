#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "phenoclass/bands.hpp"
#include "phenoclass/error.hpp"

namespace pheno {

constexpr int kMonthsPerYear = 12;

struct Date {
    int year = 0;
    int month = 0;  // 1..12
    int day = 0;    // 1..31

    int month_index() const { return month - 1; }
    bool operator==(const Date&) const = default;
};

bool valid_date(const Date& d);
std::optional<Date> parse_date(std::string_view iso);  // YYYY-MM-DD
std::string format_date(const Date& d);

// One CSV row: a single band measurement for one plot on one day.
struct Observation {
    std::string plot_id;
    Date date;
    BandId band = BandId::VV;
    double value = 0.0;
    std::optional<double> cloud_prob;  // percent, S2 rows
};

struct StaticRecord {
    std::string plot_id;
    double lat_deg = 0.0;
    double lon_deg = 0.0;
    double elevation_m = 0.0;
    double slope_deg = 0.0;
};

struct SpeciesLabel {
    int class_id = -1;
    std::string class_name;
};

// Unit-sphere Cartesian coordinates from geographic lat/lon.
std::array<double, 3> loc_from_lat_lon(double lat_deg, double lon_deg);

// One pixel's year: 12 monthly slots per dynamic channel group plus the
// static terrain/location attributes. A slot is either fully valued for a
// group or missing for that group.
class PixelTimeSeries {
public:
    PixelTimeSeries() = default;
    explicit PixelTimeSeries(std::string plot_id) : plot_id_(std::move(plot_id)) {}

    const std::string& plot_id() const { return plot_id_; }
    void set_plot_id(std::string id) { plot_id_ = std::move(id); }

    bool has(ChannelGroup g, int month) const;
    const std::vector<double>& values(ChannelGroup g, int month) const;
    void set(ChannelGroup g, int month, std::vector<double> values);
    void clear(ChannelGroup g, int month);
    void clear_group(ChannelGroup g);

    int dw_class(int month) const;
    void set_dw_class(int month, int cls);

    int months_present(ChannelGroup g) const;

    bool has_terrain() const { return has_terrain_; }
    bool has_location() const { return has_location_; }
    void set_terrain(double elevation_m, double slope_deg);
    void set_location(double lat_deg, double lon_deg);
    void drop_terrain() { has_terrain_ = false; }
    void drop_location() { has_location_ = false; }

    double elevation_m() const { return elevation_m_; }
    double slope_deg() const { return slope_deg_; }
    double lat_deg() const { return lat_deg_; }
    double lon_deg() const { return lon_deg_; }
    const std::array<double, 3>& loc() const { return loc_; }

    // Used by normalization, which rewrites values in place.
    std::vector<double>& mutable_values(ChannelGroup g, int month);
    void set_terrain_raw(double elevation, double slope) {
        elevation_m_ = elevation;
        slope_deg_ = slope;
        has_terrain_ = true;
    }

private:
    std::string plot_id_;
    std::array<std::array<std::optional<std::vector<double>>, kMonthsPerYear>,
               kDynamicGroupCount>
        dynamic_{};
    double elevation_m_ = 0.0;
    double slope_deg_ = 0.0;
    double lat_deg_ = 0.0;
    double lon_deg_ = 0.0;
    std::array<double, 3> loc_{1.0, 0.0, 0.0};
    bool has_terrain_ = false;
    bool has_location_ = false;
};

// Labeled collection with a dense 0-based class table, lexicographic by
// class name.
struct Dataset {
    std::string schema_tag;  // COMB-13 | SIMB-7 | SIBA-7 | synthetic
    std::vector<std::string> class_names;
    std::vector<PixelTimeSeries> series;
    std::vector<int> labels;

    int class_count() const { return static_cast<int>(class_names.size()); }
    size_t size() const { return series.size(); }
    SpeciesLabel label_of(size_t i) const {
        return {labels[i], class_names[labels[i]]};
    }
    void validate() const;
};

// Dense 0-based ids in lexicographic name order.
std::vector<std::string> class_table_from_names(std::vector<std::string> names);

}  // namespace pheno
