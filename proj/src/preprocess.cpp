#include "phenoclass/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "phenoclass/csv_io.hpp"

namespace pheno {

IndexCoefficients IndexCoefficients::defaults() {
    // Crist (1985) reflectance-factor rows mapped onto
    // (B2,B3,B4,B5,B6,B7,B8,B8A,B11,B12); red edge and B8A carry 0.
    IndexCoefficients c;
    c.brightness = {0.3037, 0.2793, 0.4743, 0.0, 0.0, 0.0, 0.5585, 0.0, 0.5082, 0.1863};
    c.greenness = {-0.2848, -0.2435, -0.5436, 0.0, 0.0, 0.0, 0.7243, 0.0, 0.0840, -0.1800};
    c.wetness = {0.1509, 0.1973, 0.3279, 0.0, 0.0, 0.0, 0.3406, 0.0, -0.7112, -0.4572};
    return c;
}

std::vector<Observation> cloud_filter(std::span<const Observation> observations,
                                      double threshold_pct) {
    require(threshold_pct >= 0.0 && threshold_pct <= 100.0,
            "cloud threshold must be in [0, 100], got ", threshold_pct);
    std::vector<Observation> kept;
    kept.reserve(observations.size());
    for (const auto& obs : observations) {
        if (is_s2_raw_band(obs.band) && obs.cloud_prob &&
            *obs.cloud_prob > threshold_pct) {
            continue;
        }
        kept.push_back(obs);
    }
    return kept;
}

double median_of(std::vector<double> values) {
    require(!values.empty(), "median of empty set");
    std::sort(values.begin(), values.end());
    const size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<MonthlyComposite> monthly_median(
    std::span<const Observation> observations) {
    // (plot, month) -> per-band value lists
    std::map<std::pair<std::string, int>, std::array<std::vector<double>, kBandCount>>
        buckets;
    for (const auto& obs : observations) {
        buckets[{obs.plot_id, obs.date.month_index()}][band_index(obs.band)]
            .push_back(obs.value);
    }
    std::vector<MonthlyComposite> composites;
    composites.reserve(buckets.size());
    for (auto& [key, per_band] : buckets) {
        MonthlyComposite comp;
        comp.plot_id = key.first;
        comp.month = key.second;
        for (int b = 0; b < kBandCount; ++b) {
            if (per_band[b].empty()) continue;
            comp.count[b] = static_cast<int>(per_band[b].size());
            comp.value[b] = median_of(std::move(per_band[b]));
        }
        composites.push_back(std::move(comp));
    }
    return composites;
}

double compute_ndvi(double b8, double b4) {
    const double denom = b8 + b4;
    if (denom == 0.0) return 0.0;
    return (b8 - b4) / denom;
}

namespace {

// DN -> 0-1 reflectance, the scale EVI's +1 constant and the Tasseled Cap
// factors are defined on.
constexpr double kReflectanceScale = 1.0 / 10000.0;

double safe_ratio(double num, double denom, bool& flagged) {
    if (denom == 0.0) {
        flagged = true;
        return 0.0;
    }
    return num / denom;
}

}  // namespace

BandRecord compute_indices(const MonthlyComposite& composite,
                           const IndexCoefficients& coeffs) {
    BandRecord rec;
    rec.value = composite.value;

    auto s2 = s2_raw_bands();
    bool all_s2 = std::all_of(s2.begin(), s2.end(),
                              [&](BandId b) { return rec.has(b); });
    if (!all_s2) return rec;

    const double b2 = rec.get(BandId::B2);
    const double b4 = rec.get(BandId::B4);
    const double b8 = rec.get(BandId::B8);
    const double b12 = rec.get(BandId::B12);

    bool flagged = false;
    rec.set(BandId::NDVI, safe_ratio(b8 - b4, b8 + b4, flagged));
    rec.set(BandId::NBR, safe_ratio(b8 - b12, b8 + b12, flagged));

    const double nir = b8 * kReflectanceScale;
    const double red = b4 * kReflectanceScale;
    const double blue = b2 * kReflectanceScale;
    rec.set(BandId::EVI,
            2.5 * safe_ratio(nir - red, nir + 6.0 * red - 7.5 * blue + 1.0, flagged));

    double tcb = 0.0, tcg = 0.0, tcw = 0.0;
    for (size_t i = 0; i < s2.size(); ++i) {
        const double refl = rec.get(s2[i]) * kReflectanceScale;
        tcb += coeffs.brightness[i] * refl;
        tcg += coeffs.greenness[i] * refl;
        tcw += coeffs.wetness[i] * refl;
    }
    rec.set(BandId::TCB, tcb);
    rec.set(BandId::TCG, tcg);
    rec.set(BandId::TCW, tcw);
    rec.set(BandId::TCA, tcb == 0.0 ? (flagged = true, 0.0) : std::atan(tcg / tcb));
    rec.zero_denominator = flagged;
    return rec;
}

PixelTimeSeries assemble_pixel(std::span<const MonthlyComposite> composites,
                               const StaticRecord& statics) {
    PixelTimeSeries series(statics.plot_id);
    series.set_terrain(statics.elevation_m, statics.slope_deg);
    series.set_location(statics.lat_deg, statics.lon_deg);

    std::array<const MonthlyComposite*, kMonthsPerYear> by_month{};
    for (const auto& comp : composites) {
        require(comp.plot_id == statics.plot_id,
                "assemble_pixel: mixed plot ids: ", comp.plot_id, " vs ",
                statics.plot_id);
        require(comp.month >= 0 && comp.month < kMonthsPerYear,
                "month out of range: ", comp.month);
        by_month[comp.month] = &comp;
    }

    for (int m = 0; m < kMonthsPerYear; ++m) {
        const MonthlyComposite* comp = by_month[m];
        if (!comp) continue;
        for (int gi = 0; gi < kDynamicGroupCount; ++gi) {
            auto g = static_cast<ChannelGroup>(gi);
            if (g == ChannelGroup::DynamicWorld) {
                series.set_dw_class(m, kDynamicWorldTreeClass);
                continue;
            }
            if (g == ChannelGroup::Ndvi) {
                if (comp->value[band_index(BandId::B8)] &&
                    comp->value[band_index(BandId::B4)]) {
                    series.set(g, m,
                               {compute_ndvi(*comp->value[band_index(BandId::B8)],
                                             *comp->value[band_index(BandId::B4)])});
                }
                continue;
            }
            auto bands = group_bands(g);
            std::vector<double> vals;
            vals.reserve(bands.size());
            bool complete = true;
            for (BandId b : bands) {
                const auto& v = comp->value[band_index(b)];
                if (!v) {
                    complete = false;
                    break;
                }
                vals.push_back(*v);
            }
            if (complete) series.set(g, m, std::move(vals));
        }
    }
    return series;
}

MonthlyStack band_stack_from_series(const PixelTimeSeries& series,
                                    const IndexCoefficients& coeffs) {
    MonthlyStack stack;
    for (int m = 0; m < kMonthsPerYear; ++m) {
        MonthlyComposite comp;
        comp.plot_id = series.plot_id();
        comp.month = m;
        for (ChannelGroup g : {ChannelGroup::S1, ChannelGroup::S2Rgb,
                               ChannelGroup::S2RedEdge, ChannelGroup::S2Nir10,
                               ChannelGroup::S2Nir20, ChannelGroup::S2Swir}) {
            if (!series.has(g, m)) continue;
            auto bands = group_bands(g);
            const auto& vals = series.values(g, m);
            for (size_t i = 0; i < bands.size(); ++i) {
                comp.value[band_index(bands[i])] = vals[i];
                comp.count[band_index(bands[i])] = 1;
            }
        }
        stack[m] = compute_indices(comp, coeffs);
    }
    return stack;
}

void write_composite_csv(const std::filesystem::path& path,
                         std::span<const MonthlyComposite> composites) {
    std::ostringstream out;
    out << "plot_id,month,band,value,count\n";
    for (const auto& comp : composites) {
        for (int b = 0; b < kBandCount; ++b) {
            if (!comp.value[b]) continue;
            out << comp.plot_id << ',' << comp.month << ','
                << band_name(static_cast<BandId>(b)) << ','
                << format_double(*comp.value[b]) << ',' << comp.count[b] << '\n';
        }
    }
    atomic_write_file(path, out.str());
}

std::vector<MonthlyComposite> read_composite_csv(const std::filesystem::path& path) {
    require(std::filesystem::exists(path), "file not found: ", path.string());
    std::ifstream in(path);
    require(in.good(), "cannot open: ", path.string());
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), path.string(), ": empty file");
    {
        std::string got = line;
        if (!got.empty() && got.back() == '\r') got.pop_back();
        require(got == "plot_id,month,band,value,count", path.string(),
                ": malformed header");
    }
    std::map<std::pair<std::string, int>, MonthlyComposite> by_key;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        require(fields.size() == 5, path.string(), " line ", line_no,
                ": expected 5 fields");
        auto band = band_from_name(fields[2]);
        require(band.has_value(), path.string(), " line ", line_no,
                ": unknown band `", fields[2], "`");
        auto value = parse_double(fields[3]);
        auto count = parse_double(fields[4]);
        auto month = parse_double(fields[1]);
        require(value && count && month, path.string(), " line ", line_no,
                ": non-numeric field");
        int m = static_cast<int>(*month);
        require(m >= 0 && m < kMonthsPerYear, path.string(), " line ", line_no,
                ": month out of range");
        auto& comp = by_key[{fields[0], m}];
        comp.plot_id = fields[0];
        comp.month = m;
        comp.value[band_index(*band)] = *value;
        comp.count[band_index(*band)] = static_cast<int>(*count);
    }
    std::vector<MonthlyComposite> composites;
    composites.reserve(by_key.size());
    for (auto& [key, comp] : by_key) composites.push_back(std::move(comp));
    return composites;
}

}  // namespace pheno
