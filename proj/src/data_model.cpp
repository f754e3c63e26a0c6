#include "phenoclass/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace pheno {

namespace {

int days_in_month(int year, int month) {
    static const int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (month == 2) {
        bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
        return leap ? 29 : 28;
    }
    return kDays[month - 1];
}

}  // namespace

bool valid_date(const Date& d) {
    if (d.month < 1 || d.month > 12) return false;
    if (d.day < 1 || d.day > days_in_month(d.year, d.month)) return false;
    return true;
}

std::optional<Date> parse_date(std::string_view iso) {
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') return std::nullopt;
    for (size_t i = 0; i < iso.size(); ++i) {
        if (i == 4 || i == 7) continue;
        if (iso[i] < '0' || iso[i] > '9') return std::nullopt;
    }
    Date d;
    d.year = (iso[0] - '0') * 1000 + (iso[1] - '0') * 100 + (iso[2] - '0') * 10 + (iso[3] - '0');
    d.month = (iso[5] - '0') * 10 + (iso[6] - '0');
    d.day = (iso[8] - '0') * 10 + (iso[9] - '0');
    if (!valid_date(d)) return std::nullopt;
    return d;
}

std::string format_date(const Date& d) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", d.year, d.month, d.day);
    return buf;
}

std::array<double, 3> loc_from_lat_lon(double lat_deg, double lon_deg) {
    require(lat_deg >= -90.0 && lat_deg <= 90.0,
            "latitude out of range [-90, 90]: ", lat_deg);
    const double lat = lat_deg * M_PI / 180.0;
    const double lon = lon_deg * M_PI / 180.0;
    return {std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon),
            std::sin(lat)};
}

bool PixelTimeSeries::has(ChannelGroup g, int month) const {
    if (!group_is_dynamic(g)) {
        return g == ChannelGroup::Terrain ? has_terrain_ : has_location_;
    }
    return dynamic_[group_index(g)][month].has_value();
}

const std::vector<double>& PixelTimeSeries::values(ChannelGroup g, int month) const {
    const auto& slot = dynamic_[group_index(g)][month];
    require(slot.has_value(), "no values for group ", group_name(g), " month ", month);
    return *slot;
}

std::vector<double>& PixelTimeSeries::mutable_values(ChannelGroup g, int month) {
    auto& slot = dynamic_[group_index(g)][month];
    require(slot.has_value(), "no values for group ", group_name(g), " month ", month);
    return *slot;
}

void PixelTimeSeries::set(ChannelGroup g, int month, std::vector<double> values) {
    require(group_is_dynamic(g), "set() is for dynamic groups, got ", group_name(g));
    require(month >= 0 && month < kMonthsPerYear, "month out of range: ", month);
    require(static_cast<int>(values.size()) == group_width(g), "group ",
            group_name(g), " expects ", group_width(g), " values, got ",
            values.size());
    dynamic_[group_index(g)][month] = std::move(values);
}

void PixelTimeSeries::clear(ChannelGroup g, int month) {
    dynamic_[group_index(g)][month].reset();
}

void PixelTimeSeries::clear_group(ChannelGroup g) {
    if (!group_is_dynamic(g)) {
        if (g == ChannelGroup::Terrain) has_terrain_ = false;
        if (g == ChannelGroup::Location) has_location_ = false;
        return;
    }
    for (int m = 0; m < kMonthsPerYear; ++m) dynamic_[group_index(g)][m].reset();
}

int PixelTimeSeries::dw_class(int month) const {
    return static_cast<int>(values(ChannelGroup::DynamicWorld, month)[0]);
}

void PixelTimeSeries::set_dw_class(int month, int cls) {
    require(cls >= 0, "dw class must be non-negative, got ", cls);
    set(ChannelGroup::DynamicWorld, month, {static_cast<double>(cls)});
}

int PixelTimeSeries::months_present(ChannelGroup g) const {
    int n = 0;
    for (int m = 0; m < kMonthsPerYear; ++m) {
        if (dynamic_[group_index(g)][m].has_value()) ++n;
    }
    return n;
}

void PixelTimeSeries::set_terrain(double elevation_m, double slope_deg) {
    elevation_m_ = elevation_m;
    slope_deg_ = slope_deg;
    has_terrain_ = true;
}

void PixelTimeSeries::set_location(double lat_deg, double lon_deg) {
    loc_ = loc_from_lat_lon(lat_deg, lon_deg);
    lat_deg_ = lat_deg;
    lon_deg_ = lon_deg;
    has_location_ = true;
}

void Dataset::validate() const {
    require(series.size() == labels.size(), "dataset: ", series.size(),
            " series vs ", labels.size(), " labels");
    std::vector<int> seen(class_names.size(), 0);
    for (int label : labels) {
        require(label >= 0 && label < class_count(), "label out of range: ", label);
        seen[label] = 1;
    }
    for (int c = 0; c < class_count(); ++c) {
        require(seen[c] == 1, "class ", class_names[c], " (id ", c,
                ") has no samples");
    }
    require(std::is_sorted(class_names.begin(), class_names.end()),
            "class names must be in lexicographic order");
}

std::vector<std::string> class_table_from_names(std::vector<std::string> names) {
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
    return names;
}

}  // namespace pheno
