#pragma once

// Flat `key = value` run configuration with `#` comments.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "twinbeam/error.hpp"
#include "twinbeam/frame.hpp"
#include "twinbeam/frame_io.hpp"
#include "twinbeam/glyph.hpp"
#include "twinbeam/pipeline.hpp"
#include "twinbeam/sim.hpp"

namespace twinbeam {

enum class GeneratorKind { Pair, Thermal };

struct RunConfig {
    TwinBeamParams params;
    GeneratorKind generator = GeneratorKind::Pair;
    ModeBudget modes;

    std::size_t width = 180;
    std::size_t height = 100;
    double pitchUm = 39.0;
    double exposureS = 0.1;
    OpticsConstants optics;
    std::optional<double> centerX;
    std::optional<double> centerY;

    std::size_t shots = 300;
    std::size_t calibrationShots = 300;

    /// "phi", "none" or a TBF1 file of absorption coefficients.
    std::string mask = "phi";
    PhiGlyph glyph;
    int sampleBeam = 1;

    PixelCoord regionA{5, 5};
    std::size_t regionSize = 90;
    std::optional<PixelCoord> regionB;
    PixelCoord dcShift{-40, 0};
    std::vector<std::size_t> scales{1, 2, 3, 5, 6, 9, 10};
    FilterMode filterMode = FilterMode::Block;
    std::string scheme = "all";
    std::size_t nrfTile = 8;
    int xcorrMaxShift = 6;
    /// Region-local stripe; width 0 means the glyph stem.
    Rect stripe{0, 0, 0, 0};
    std::filesystem::path out = "out";

    FrameGeometry geometry() const
    {
        FrameGeometry g{width, height, pitchUm, exposureS, std::nullopt};
        if (centerX || centerY)
            g.symmetryCenter = Point2{centerX.value_or(static_cast<double>(width) / 2.0),
                                      centerY.value_or(static_cast<double>(height) / 2.0)};
        return g;
    }

    RegionPair regions() const
    {
        if (regionB)
            return RegionPair(regionA, *regionB, regionSize);
        return RegionPair::mirrored(regionA, regionSize, geometry().center());
    }

    /// Glyph centre: the centre of the sample region.
    Point2 glyph_center() const
    {
        const RegionPair rp = regions();
        const PixelCoord o = sampleBeam == 1 ? rp.originA() : rp.originB();
        const double h = static_cast<double>(regionSize) / 2.0;
        return {static_cast<double>(o.x) + h, static_cast<double>(o.y) + h};
    }

    /// Sample mask on the full frame grid, or nullopt for "none".
    std::optional<SampleMask> sample_mask() const
    {
        if (mask == "none")
            return std::nullopt;
        if (mask == "phi")
            return make_phi_mask(width, height, pitchUm, optics.magnification, glyph_center(), glyph);
        SampleMask m(to_real(load_frame_as<double>(mask)));
        m.check_grid(width, height);
        return m;
    }

    /// SNR stripe in sample-region coordinates.
    Rect stripe_rect() const
    {
        if (stripe.width > 0 && stripe.height > 0)
            return stripe;
        const double h = static_cast<double>(regionSize) / 2.0;
        return phi_stem_stripe(pitchUm, optics.magnification, {h, h}, glyph);
    }

    void validate() const
    {
        params.validate();
        modes.validate();
        optics.validate();
        geometry().validate();
        if (shots == 0 || calibrationShots < 2)
            throw ConfigError("need at least one sample shot and two calibration shots");
        if (sampleBeam != 1 && sampleBeam != 2)
            throw ConfigError("sample_beam must be 1 or 2");
        if (scales.empty())
            throw ConfigError("scales list is empty");
        for (std::size_t d : scales)
            if (d == 0)
                throw ConfigError("scales must be positive");
        if (nrfTile < 2)
            throw ConfigError("nrf_tile must be at least 2");
        if (scheme != "all" && scheme != "dr" && scheme != "dc" && scheme != "ssn")
            throw ConfigError("scheme must be dr, dc, ssn or all");
        try {
            regions().validate(width, height);
        } catch (const DataError& e) {
            throw ConfigError(e.what());
        }
        if (mask != "phi" && mask != "none" && !std::filesystem::exists(mask))
            throw ConfigError("mask file not found: " + mask);
    }
};

namespace detail {

inline std::string trim(std::string s)
{
    s.erase(0, s.find_first_not_of(" \t\r"));
    const auto end = s.find_last_not_of(" \t\r");
    s.erase(end == std::string::npos ? 0 : end + 1);
    return s;
}

template <class T>
T parse_number(const std::string& text, const std::string& where)
{
    T v{};
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw ConfigError(where + ": cannot parse '" + text + "'");
    return v;
}

inline std::vector<std::size_t> parse_list(const std::string& text, const std::string& where)
{
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(parse_number<std::size_t>(trim(item), where));
    if (out.empty())
        throw ConfigError(where + ": empty list");
    return out;
}

inline FilterMode parse_mode(const std::string& v, const std::string& where)
{
    if (v == "block")
        return FilterMode::Block;
    if (v == "sliding")
        return FilterMode::Sliding;
    throw ConfigError(where + ": filter mode must be block or sliding");
}

} // namespace detail

inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value,
                             const std::string& where)
{
    using Setter = std::function<void(const std::string&)>;
    auto real = [&](double& dst) { return Setter([&dst, where](const std::string& v) { dst = detail::parse_number<double>(v, where); }); };
    auto count = [&](std::size_t& dst) {
        return Setter([&dst, where](const std::string& v) { dst = detail::parse_number<std::size_t>(v, where); });
    };
    auto integer = [&](long& dst) { return Setter([&dst, where](const std::string& v) { dst = detail::parse_number<long>(v, where); }); };
    auto optionalReal = [&](std::optional<double>& dst) {
        return Setter([&dst, where](const std::string& v) { dst = detail::parse_number<double>(v, where); });
    };
    const std::map<std::string, Setter> table{
        {"mean_photons", real(c.params.meanPhotonsPerPixel)},
        {"coherence_radius_um", real(c.params.coherenceRadius)},
        {"coherence_radius_x_um", real(c.params.coherenceRadiusX)},
        {"coherence_radius_y_um", real(c.params.coherenceRadiusY)},
        {"misalignment_um", real(c.params.misalignment)},
        {"eta1", real(c.params.eta1)},
        {"eta2", real(c.params.eta2)},
        {"mu_per_mode", real(c.params.muPerMode)},
        {"stray_fraction", real(c.params.strayFraction)},
        {"read_noise", real(c.params.readNoise)},
        {"chromatic_shear", real(c.params.chromaticShear)},
        {"envelope_sigma_um", real(c.params.envelopeSigma)},
        {"seed", [&c, where](const std::string& v) { c.params.seed = detail::parse_number<std::uint64_t>(v, where); }},
        {"generator",
         [&c, where](const std::string& v) {
             if (v == "pair")
                 c.generator = GeneratorKind::Pair;
             else if (v == "thermal")
                 c.generator = GeneratorKind::Thermal;
             else
                 throw ConfigError(where + ": generator must be pair or thermal");
         }},
        {"modes_border", real(c.modes.border)},
        {"modes_correlated", real(c.modes.correlated)},
        {"modes_uncorrelated", real(c.modes.uncorrelated)},
        {"beta", real(c.modes.beta)},
        {"width", count(c.width)},
        {"height", count(c.height)},
        {"pitch_um", real(c.pitchUm)},
        {"exposure_s", real(c.exposureS)},
        {"magnification", real(c.optics.magnification)},
        {"pump_waist_um", real(c.optics.pumpWaistUm)},
        {"center_x", optionalReal(c.centerX)},
        {"center_y", optionalReal(c.centerY)},
        {"shots", count(c.shots)},
        {"calibration_shots", count(c.calibrationShots)},
        {"mask", [&c](const std::string& v) { c.mask = v; }},
        {"mask_alpha", real(c.glyph.alpha)},
        {"mask_width_um", real(c.glyph.widthUm)},
        {"mask_height_um", real(c.glyph.heightUm)},
        {"mask_stem_um", real(c.glyph.stemUm)},
        {"mask_ring_um", real(c.glyph.ringUm)},
        {"sample_beam", [&c, where](const std::string& v) { c.sampleBeam = detail::parse_number<int>(v, where); }},
        {"region_a_x", integer(c.regionA.x)},
        {"region_a_y", integer(c.regionA.y)},
        {"region_size", count(c.regionSize)},
        {"region_b_x",
         [&c, where](const std::string& v) {
             if (!c.regionB)
                 c.regionB = PixelCoord{0, 0};
             c.regionB->x = detail::parse_number<long>(v, where);
         }},
        {"region_b_y",
         [&c, where](const std::string& v) {
             if (!c.regionB)
                 c.regionB = PixelCoord{0, 0};
             c.regionB->y = detail::parse_number<long>(v, where);
         }},
        {"dc_shift_x", integer(c.dcShift.x)},
        {"dc_shift_y", integer(c.dcShift.y)},
        {"scales", [&c, where](const std::string& v) { c.scales = detail::parse_list(v, where); }},
        {"filter_mode", [&c, where](const std::string& v) { c.filterMode = detail::parse_mode(v, where); }},
        {"scheme", [&c](const std::string& v) { c.scheme = v; }},
        {"nrf_tile", count(c.nrfTile)},
        {"xcorr_max_shift", [&c, where](const std::string& v) { c.xcorrMaxShift = detail::parse_number<int>(v, where); }},
        {"stripe_x", integer(c.stripe.x)},
        {"stripe_y", integer(c.stripe.y)},
        {"stripe_width", count(c.stripe.width)},
        {"stripe_height", count(c.stripe.height)},
        {"out", [&c](const std::string& v) { c.out = v; }},
    };
    const auto it = table.find(key);
    if (it == table.end())
        throw ConfigError(where + ": unknown key '" + key + "'");
    it->second(value);
}

inline RunConfig parse_config(std::istream& in, const std::string& name = "config")
{
    RunConfig c;
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = detail::trim(line);
        if (line.empty())
            continue;
        const std::string where = name + ":" + std::to_string(no);
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(where + ": expected key = value");
        set_config_value(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)), where);
    }
    return c;
}

/// Reads and validates a configuration file; relative mask paths resolve
/// against the file's directory.
inline RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file " + path.string());
    RunConfig c = parse_config(in, path.string());
    if (c.mask != "phi" && c.mask != "none" && std::filesystem::path(c.mask).is_relative())
        c.mask = (path.parent_path() / c.mask).string();
    return c;
}

} // namespace twinbeam
