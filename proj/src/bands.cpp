#include "phenoclass/bands.hpp"

#include <algorithm>

namespace pheno {

namespace {

constexpr std::array<std::string_view, kBandCount> kBandNames = {
    "VV",  "VH",  "B2",  "B3",  "B4",  "B5",  "B6",  "B7",
    "B8",  "B8A", "B11", "B12", "NDVI", "NBR", "EVI", "TCB",
    "TCW", "TCG", "TCA", "temperature_2m", "total_precipitation",
    "elevation", "slope"};

constexpr std::array<BandId, kRawBandCount> kRaw = {
    BandId::VV, BandId::VH, BandId::B2,  BandId::B3,  BandId::B4,  BandId::B5,
    BandId::B6, BandId::B7, BandId::B8,  BandId::B8A, BandId::B11, BandId::B12};

constexpr std::array<BandId, kIndexCount> kIndices = {
    BandId::NDVI, BandId::NBR, BandId::EVI, BandId::TCB,
    BandId::TCW,  BandId::TCG, BandId::TCA};

constexpr std::array<BandId, kHandcraftedBandCount> kHandcrafted = {
    BandId::VV,  BandId::VH,  BandId::B2,  BandId::B3,  BandId::B4,
    BandId::B5,  BandId::B6,  BandId::B7,  BandId::B8,  BandId::B8A,
    BandId::B11, BandId::B12, BandId::NDVI, BandId::NBR, BandId::EVI,
    BandId::TCB, BandId::TCW, BandId::TCG, BandId::TCA};

constexpr std::array<BandId, 10> kS2Raw = {
    BandId::B2, BandId::B3,  BandId::B4,  BandId::B5, BandId::B6,
    BandId::B7, BandId::B8,  BandId::B8A, BandId::B11, BandId::B12};

constexpr std::array<std::string_view, kGroupCount> kGroupNames = {
    "S1",     "S2-RGB", "S2-RE", "S2-NIR10", "S2-NIR20", "S2-SWIR",
    "NDVI",   "ERA5",   "DW",    "TG",       "Loc"};

constexpr std::array<BandId, 2> kS1Bands = {BandId::VV, BandId::VH};
constexpr std::array<BandId, 3> kRgbBands = {BandId::B2, BandId::B3, BandId::B4};
constexpr std::array<BandId, 3> kReBands = {BandId::B5, BandId::B6, BandId::B7};
constexpr std::array<BandId, 1> kNir10Bands = {BandId::B8};
constexpr std::array<BandId, 1> kNir20Bands = {BandId::B8A};
constexpr std::array<BandId, 2> kSwirBands = {BandId::B11, BandId::B12};
constexpr std::array<BandId, 1> kNdviBands = {BandId::NDVI};
constexpr std::array<BandId, 2> kEra5Bands = {BandId::TotalPrecipitation,
                                              BandId::Temperature2m};

}  // namespace

std::string_view band_name(BandId b) { return kBandNames[band_index(b)]; }

std::optional<BandId> band_from_name(std::string_view name) {
    for (int i = 0; i < kBandCount; ++i) {
        if (kBandNames[i] == name) return static_cast<BandId>(i);
    }
    return std::nullopt;
}

std::span<const BandId> raw_bands() { return kRaw; }
std::span<const BandId> derived_indices() { return kIndices; }
std::span<const BandId> handcrafted_bands() { return kHandcrafted; }
std::span<const BandId> s2_raw_bands() { return kS2Raw; }

bool is_s1_band(BandId b) { return b == BandId::VV || b == BandId::VH; }

bool is_s2_raw_band(BandId b) {
    return std::find(kS2Raw.begin(), kS2Raw.end(), b) != kS2Raw.end();
}

bool is_derived_index(BandId b) {
    return std::find(kIndices.begin(), kIndices.end(), b) != kIndices.end();
}

std::string_view group_name(ChannelGroup g) { return kGroupNames[group_index(g)]; }

std::optional<ChannelGroup> group_from_name(std::string_view name) {
    for (int i = 0; i < kGroupCount; ++i) {
        if (kGroupNames[i] == name) return static_cast<ChannelGroup>(i);
    }
    return std::nullopt;
}

bool group_is_dynamic(ChannelGroup g) {
    return group_index(g) < kDynamicGroupCount;
}

int group_width(ChannelGroup g) {
    switch (g) {
        case ChannelGroup::S1: return 2;
        case ChannelGroup::S2Rgb: return 3;
        case ChannelGroup::S2RedEdge: return 3;
        case ChannelGroup::S2Nir10: return 1;
        case ChannelGroup::S2Nir20: return 1;
        case ChannelGroup::S2Swir: return 2;
        case ChannelGroup::Ndvi: return 1;
        case ChannelGroup::Era5: return 2;
        case ChannelGroup::DynamicWorld: return 1;
        case ChannelGroup::Terrain: return 2;
        case ChannelGroup::Location: return 3;
    }
    return 0;
}

std::span<const BandId> group_bands(ChannelGroup g) {
    switch (g) {
        case ChannelGroup::S1: return kS1Bands;
        case ChannelGroup::S2Rgb: return kRgbBands;
        case ChannelGroup::S2RedEdge: return kReBands;
        case ChannelGroup::S2Nir10: return kNir10Bands;
        case ChannelGroup::S2Nir20: return kNir20Bands;
        case ChannelGroup::S2Swir: return kSwirBands;
        case ChannelGroup::Ndvi: return kNdviBands;
        case ChannelGroup::Era5: return kEra5Bands;
        default: return {};
    }
}

std::optional<ChannelGroup> group_of_band(BandId b) {
    for (int gi = 0; gi < kGroupCount; ++gi) {
        auto g = static_cast<ChannelGroup>(gi);
        auto bands = group_bands(g);
        if (std::find(bands.begin(), bands.end(), b) != bands.end()) return g;
    }
    return std::nullopt;
}

}  // namespace pheno
