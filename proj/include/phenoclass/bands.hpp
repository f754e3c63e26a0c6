#pragma once

#include <array>
#include <optional>
#include <span>
#include <string_view>

namespace pheno {

// Raw satellite bands, derived spectral indices, and climate/terrain
// variables. Order here fixes feature-registry order everywhere.
enum class BandId : int {
    VV = 0,
    VH,
    B2,
    B3,
    B4,
    B5,
    B6,
    B7,
    B8,
    B8A,
    B11,
    B12,
    NDVI,
    NBR,
    EVI,
    TCB,
    TCW,
    TCG,
    TCA,
    Temperature2m,       // kelvin
    TotalPrecipitation,  // meters
    Elevation,           // meters
    Slope,               // degrees
};

constexpr int kBandCount = 23;
constexpr int kRawBandCount = 12;
constexpr int kIndexCount = 7;
constexpr int kHandcraftedBandCount = 19;  // raw + indices

constexpr int band_index(BandId b) { return static_cast<int>(b); }

std::string_view band_name(BandId b);
std::optional<BandId> band_from_name(std::string_view name);

std::span<const BandId> raw_bands();          // 12
std::span<const BandId> derived_indices();    // 7
std::span<const BandId> handcrafted_bands();  // 19
std::span<const BandId> s2_raw_bands();       // 10

bool is_s1_band(BandId b);
bool is_s2_raw_band(BandId b);
bool is_derived_index(BandId b);

// Channel groups for the token encoder. The first nine are dynamic
// (one token per present month), Terrain and Location are static.
enum class ChannelGroup : int {
    S1 = 0,
    S2Rgb,
    S2RedEdge,
    S2Nir10,
    S2Nir20,
    S2Swir,
    Ndvi,
    Era5,
    DynamicWorld,
    Terrain,
    Location,
};

constexpr int kGroupCount = 11;
constexpr int kDynamicGroupCount = 9;
constexpr int kStaticGroupCount = 2;

constexpr int group_index(ChannelGroup g) { return static_cast<int>(g); }

std::string_view group_name(ChannelGroup g);
std::optional<ChannelGroup> group_from_name(std::string_view name);
bool group_is_dynamic(ChannelGroup g);
int group_width(ChannelGroup g);

// Bands whose composited values feed the group, in token order. Empty for
// DynamicWorld (categorical), Terrain, and Location.
std::span<const BandId> group_bands(ChannelGroup g);

// Group a band's monthly values belong to; nullopt for bands that never
// enter the token encoder (NBR, EVI, Tasseled Cap, elevation, slope).
std::optional<ChannelGroup> group_of_band(BandId b);

}  // namespace pheno
