#include "phenoclass/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "phenoclass/csv_io.hpp"
#include "phenoclass/preprocess.hpp"
#include "phenoclass/rng.hpp"

namespace pheno {

namespace {

double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

SynthClassSpec make_class(std::string name, int count, double baseline,
                          double amplitude, double peak, double wiggle_amp,
                          double wiggle_phase, double vv, double vh,
                          double s1_seasonal) {
    SynthClassSpec c;
    c.name = std::move(name);
    c.count = count;
    c.ndvi_baseline = baseline;
    c.ndvi_amplitude = amplitude;
    c.peak_month = peak;
    c.wiggle_amplitude = wiggle_amp;
    c.wiggle_phase = wiggle_phase;
    c.vv_db = vv;
    c.vh_db = vh;
    c.s1_seasonal_db = s1_seasonal;
    return c;
}

constexpr double kHalfPi = M_PI / 2.0;

std::vector<SynthClassSpec> simb_classes(int balanced_count = 0) {
    auto n = [&](int simb_count) { return balanced_count > 0 ? balanced_count : simb_count; };
    // Pinus/DarkConifer and Quercus/Other Broadleaves form wiggle-phase
    // pairs: identical first-harmonic phenology and identical backscatter.
    return {
        make_class("Pinus", n(603), 0.60, 0.10, 6.2, 0.07, 0.0, -9.5, -15.5, 0.4),
        make_class("Larix", n(56), 0.42, 0.30, 5.2, 0.0, 0.0, -9.2, -15.0, 0.8),
        make_class("Quercus", n(288), 0.47, 0.28, 6.0, 0.06, 0.0, -8.0, -13.8, 1.0),
        make_class("Beech", n(58), 0.46, 0.34, 6.6, 0.0, 0.0, -8.6, -14.6, 1.2),
        make_class("Populus", n(72), 0.50, 0.32, 5.6, 0.0, 0.0, -7.6, -13.2, 1.1),
        make_class("Other Broadleaves", n(242), 0.47, 0.28, 6.0, 0.06, kHalfPi,
                   -8.0, -13.8, 1.0),
        make_class("DarkConifer", n(160), 0.60, 0.10, 6.2, 0.07, kHalfPi, -9.5,
                   -15.5, 0.4),
    };
}

}  // namespace

SynthSpec simb_preset() {
    SynthSpec spec;
    spec.schema_tag = "SIMB-7";
    spec.classes = simb_classes();
    return spec;
}

SynthSpec siba_preset() {
    SynthSpec spec;
    spec.schema_tag = "SIBA-7";
    spec.classes = simb_classes(1970);
    return spec;
}

SynthSpec comb_preset() {
    SynthSpec spec;
    spec.schema_tag = "COMB-13";
    spec.classes = {
        make_class("Pinus sylvestris", 513, 0.60, 0.10, 6.2, 0.07, 0.0, -9.5, -15.5, 0.4),
        make_class("Other Pinus", 89, 0.58, 0.12, 6.5, 0.0, 0.0, -9.7, -15.7, 0.5),
        make_class("Larix", 56, 0.42, 0.30, 5.2, 0.0, 0.0, -9.2, -15.0, 0.8),
        make_class("Quercus robur petraea", 255, 0.47, 0.28, 6.0, 0.06, 0.0, -8.0, -13.8, 1.0),
        make_class("Other Quercus", 33, 0.47, 0.28, 6.0, 0.06, kHalfPi, -8.0, -13.8, 1.0),
        make_class("Fagus", 58, 0.46, 0.34, 6.6, 0.0, 0.0, -8.6, -14.6, 1.2),
        make_class("Populus", 72, 0.50, 0.32, 5.6, 0.0, 0.0, -7.6, -13.2, 1.1),
        make_class("Alnus", 30, 0.48, 0.26, 6.3, 0.0, 0.0, -7.9, -13.5, 1.0),
        make_class("Betula", 58, 0.44, 0.31, 5.8, 0.0, 0.0, -8.3, -14.1, 0.9),
        make_class("Fraxinus", 40, 0.45, 0.27, 6.2, 0.0, 0.0, -8.1, -13.9, 1.0),
        make_class("Other broadleaved", 102, 0.46, 0.29, 6.1, 0.03, kHalfPi, -8.0, -13.8, 1.0),
        make_class("Pseudotsuga menziesii", 90, 0.62, 0.09, 6.1, 0.07, 0.0, -9.4, -15.4, 0.4),
        make_class("Picea", 66, 0.62, 0.09, 6.1, 0.07, kHalfPi, -9.4, -15.4, 0.4),
    };
    return spec;
}

SynthSpec preset_by_name(std::string_view name) {
    if (name == "simb") return simb_preset();
    if (name == "comb") return comb_preset();
    if (name == "siba") return siba_preset();
    fail("unknown preset `", name, "` (expected comb, simb, or siba)");
}

namespace {

void validate_spec(const SynthSpec& spec) {
    require(!spec.classes.empty(), "synthetic spec has no classes");
    for (const auto& c : spec.classes) {
        require(c.count > 0, "non-positive sample count for class ", c.name);
        const double reach = std::abs(c.ndvi_baseline) + c.ndvi_amplitude +
                             c.wiggle_amplitude + 3.0 * c.baseline_jitter +
                             3.0 * c.amplitude_jitter + 4.0 * c.monthly_noise +
                             std::abs(c.trend_per_year);
        require(reach < 0.98,
                "amplitude producing out-of-range reflectance for class ", c.name,
                " (greenness reach ", reach, ")");
    }
}

struct SampleDraw {
    double baseline, amplitude, peak, wiggle_phase;
    double vv, vh;
};

PixelTimeSeries generate_sample(const SynthClassSpec& cls, const std::string& plot_id,
                                Rng& rng) {
    PixelTimeSeries series(plot_id);

    SampleDraw draw;
    draw.baseline = cls.ndvi_baseline + rng.gaussian(0.0, cls.baseline_jitter);
    draw.amplitude =
        std::max(0.0, cls.ndvi_amplitude + rng.gaussian(0.0, cls.amplitude_jitter));
    draw.peak = cls.peak_month + rng.gaussian(0.0, cls.peak_jitter_months);
    draw.wiggle_phase = cls.wiggle_phase + rng.gaussian(0.0, 0.08);
    draw.vv = cls.vv_db + rng.gaussian(0.0, 0.4);
    draw.vh = cls.vh_db + rng.gaussian(0.0, 0.4);

    // Static attributes: shared country-scale distributions, uninformative
    // about the class on purpose.
    const double lat = rng.uniform(50.8, 53.4);
    const double lon = rng.uniform(3.4, 7.2);
    const double elevation = clamp(rng.gaussian(45.0, 55.0), -27.0, 331.0);
    const double slope = clamp(std::abs(rng.gaussian(2.5, 4.0)), 0.0, 39.3);
    series.set_location(lat, lon);
    series.set_terrain(elevation, slope);

    for (int m = 0; m < kMonthsPerYear; ++m) {
        const double t_years = m / 12.0;
        double g = draw.baseline + cls.trend_per_year * t_years +
                   draw.amplitude * std::cos(2.0 * M_PI * (m - draw.peak) / 12.0) +
                   cls.wiggle_amplitude * std::cos(kHalfPi * m - draw.wiggle_phase) +
                   rng.gaussian(0.0, cls.monthly_noise);
        g = clamp(g, -0.98, 0.98);

        const double total = cls.s2_total_dn;
        const double nir = total * (1.0 + g) / 2.0;
        const double red = total * (1.0 - g) / 2.0;

        auto dn = [&](double v) { return std::max(0.0, v + rng.gaussian(0.0, 18.0)); };
        const double b2 = dn(0.45 * red + 140.0);
        const double b3 = dn(0.65 * red + 0.06 * nir + 90.0);
        const double b5 = dn(0.85 * red + 0.12 * nir + 60.0);
        const double b6 = dn(0.25 * red + 0.55 * nir + 50.0);
        const double b7 = dn(0.12 * red + 0.72 * nir + 40.0);
        const double b8a = dn(0.96 * nir + 35.0);
        const double b11 = dn(2400.0 - 750.0 * (1.0 + g));
        const double b12 = dn(1600.0 - 500.0 * (1.0 + g));

        series.set(ChannelGroup::S2Rgb, m, {b2, b3, red});
        series.set(ChannelGroup::S2RedEdge, m, {b5, b6, b7});
        series.set(ChannelGroup::S2Nir10, m, {nir});
        series.set(ChannelGroup::S2Nir20, m, {b8a});
        series.set(ChannelGroup::S2Swir, m, {b11, b12});
        series.set(ChannelGroup::Ndvi, m, {compute_ndvi(nir, red)});

        const double season = std::cos(2.0 * M_PI * (m - draw.peak) / 12.0);
        series.set(ChannelGroup::S1, m,
                   {draw.vv + cls.s1_seasonal_db * season +
                        rng.gaussian(0.0, cls.s1_noise_db),
                    draw.vh + 0.8 * cls.s1_seasonal_db * season +
                        rng.gaussian(0.0, cls.s1_noise_db)});

        const double temperature =
            284.5 + 8.5 * std::cos(2.0 * M_PI * (m - 6.8) / 12.0) +
            rng.gaussian(0.0, 0.6);
        const double precipitation = clamp(
            0.055 + 0.045 * std::cos(2.0 * M_PI * (m - 10.0) / 12.0) +
                rng.gaussian(0.0, 0.008),
            0.008, 0.208);
        series.set(ChannelGroup::Era5, m, {precipitation, temperature});
        series.set_dw_class(m, kDynamicWorldTreeClass);
    }
    return series;
}

}  // namespace

Dataset synth_generate(const SynthSpec& spec, uint64_t seed) {
    validate_spec(spec);

    std::vector<std::string> names;
    names.reserve(spec.classes.size());
    for (const auto& c : spec.classes) names.push_back(c.name);

    Dataset dataset;
    dataset.schema_tag = spec.schema_tag;
    dataset.class_names = class_table_from_names(names);
    require(dataset.class_names.size() == spec.classes.size(),
            "duplicate class names in synthetic spec");

    std::map<std::string, const SynthClassSpec*> by_name;
    for (const auto& c : spec.classes) by_name[c.name] = &c;

    uint64_t sample_index = 0;
    for (int cid = 0; cid < dataset.class_count(); ++cid) {
        const SynthClassSpec& cls = *by_name[dataset.class_names[cid]];
        for (int j = 0; j < cls.count; ++j) {
            char plot[24];
            std::snprintf(plot, sizeof(plot), "SYN%05llu",
                          static_cast<unsigned long long>(sample_index));
            Rng rng(derive_seed(seed, sample_index));
            dataset.series.push_back(generate_sample(cls, plot, rng));
            dataset.labels.push_back(cid);
            ++sample_index;
        }
    }
    dataset.validate();
    return dataset;
}

namespace {

// Deterministic per-row pseudo cloud probability below the default filter
// threshold; the synthetic pipeline models already-clean composites.
double pseudo_cloud(const std::string& plot, int month, BandId band) {
    uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](uint64_t v) {
        h ^= v;
        h *= 1099511628211ULL;
    };
    for (char c : plot) mix(static_cast<uint64_t>(c));
    mix(static_cast<uint64_t>(month));
    mix(static_cast<uint64_t>(band_index(band)));
    return static_cast<double>(h % 6000) / 100.0;  // [0, 60)
}

}  // namespace

void write_dataset_csvs(const Dataset& dataset, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    std::vector<Observation> observations;
    std::vector<StaticRecord> statics;
    std::vector<std::pair<std::string, std::string>> labels;

    for (size_t i = 0; i < dataset.size(); ++i) {
        const auto& series = dataset.series[i];
        statics.push_back({series.plot_id(), series.lat_deg(), series.lon_deg(),
                           series.elevation_m(), series.slope_deg()});
        labels.emplace_back(series.plot_id(), dataset.class_names[dataset.labels[i]]);

        for (int m = 0; m < kMonthsPerYear; ++m) {
            Date date{2020, m + 1, 15};
            for (ChannelGroup g :
                 {ChannelGroup::S1, ChannelGroup::S2Rgb, ChannelGroup::S2RedEdge,
                  ChannelGroup::S2Nir10, ChannelGroup::S2Nir20, ChannelGroup::S2Swir,
                  ChannelGroup::Era5}) {
                if (!series.has(g, m)) continue;
                auto bands = group_bands(g);
                const auto& vals = series.values(g, m);
                for (size_t bi = 0; bi < bands.size(); ++bi) {
                    Observation obs;
                    obs.plot_id = series.plot_id();
                    obs.date = date;
                    obs.band = bands[bi];
                    obs.value = vals[bi];
                    if (is_s2_raw_band(bands[bi])) {
                        obs.cloud_prob = pseudo_cloud(series.plot_id(), m, bands[bi]);
                    }
                    observations.push_back(std::move(obs));
                }
            }
        }
    }

    write_observations_csv(dir / "observations.csv", observations);
    write_static_csv(dir / "static.csv", statics);
    write_labels_csv(dir / "labels.csv", labels);
}

Dataset read_dataset_csvs(const std::filesystem::path& dir, double cloud_threshold_pct) {
    auto ingest = ingest_csv(dir / "observations.csv");
    require(ingest.rejected.empty(), "observations.csv has ",
            ingest.rejected.size(), " invalid rows (first: line ",
            ingest.rejected.empty() ? 0 : ingest.rejected.front().line, ")");
    auto filtered = cloud_filter(ingest.observations, cloud_threshold_pct);
    auto composites = monthly_median(filtered);

    std::map<std::string, std::vector<MonthlyComposite>> by_plot;
    for (auto& comp : composites) by_plot[comp.plot_id].push_back(std::move(comp));

    auto statics = read_static_csv(dir / "static.csv");
    std::map<std::string, StaticRecord> static_by_plot;
    for (auto& rec : statics) static_by_plot[rec.plot_id] = rec;

    auto label_rows = read_labels_csv(dir / "labels.csv");

    Dataset dataset;
    dataset.schema_tag = "synthetic";
    std::vector<std::string> names;
    for (const auto& [plot, name] : label_rows) names.push_back(name);
    dataset.class_names = class_table_from_names(names);

    std::map<std::string, int> class_id;
    for (int c = 0; c < dataset.class_count(); ++c) class_id[dataset.class_names[c]] = c;

    for (const auto& [plot, name] : label_rows) {
        auto static_it = static_by_plot.find(plot);
        require(static_it != static_by_plot.end(), "no static record for plot ", plot);
        auto comp_it = by_plot.find(plot);
        std::span<const MonthlyComposite> comps;
        if (comp_it != by_plot.end()) comps = comp_it->second;
        dataset.series.push_back(assemble_pixel(comps, static_it->second));
        dataset.labels.push_back(class_id[name]);
    }
    dataset.validate();
    return dataset;
}

}  // namespace pheno
