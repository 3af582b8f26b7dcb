#pragma once

// Binary raster of the Greek letter Phi used as the test object: an
// elliptical ring crossed by a vertical stem, designed in object-plane
// micrometres and drawn onto the detection-plane pixel grid.

#include <cmath>
#include <cstddef>
#include <vector>

#include "twinbeam/error.hpp"
#include "twinbeam/frame.hpp"
#include "twinbeam/sim.hpp"

namespace twinbeam {

struct PhiGlyph {
    double widthUm = 300.0;  ///< object plane
    double heightUm = 400.0; ///< object plane
    double alpha = 0.01;
    /// Stem width and ring thickness, object plane.
    double stemUm = 80.0;
    double ringUm = 50.0;

    void validate() const
    {
        if (!(widthUm > 0.0 && heightUm > 0.0 && stemUm > 0.0 && ringUm > 0.0))
            throw ConfigError("glyph dimensions must be positive");
        if (!(alpha >= 0.0 && alpha <= 1.0))
            throw ConfigError("glyph absorption must lie in [0, 1]");
        if (!(2.0 * ringUm < widthUm && stemUm < widthUm))
            throw ConfigError("glyph strokes are wider than the glyph");
    }

    /// Membership of a point given relative to the glyph centre (object plane, y down).
    bool contains(double x, double y) const
    {
        if (std::abs(x) <= stemUm / 2.0 && std::abs(y) <= heightUm / 2.0)
            return true;
        const double a = widthUm / 2.0;
        const double b = 0.3 * heightUm;
        const double ea = (x / a) * (x / a) + (y / b) * (y / b);
        const double ia = a - ringUm;
        const double ib = b - ringUm;
        const double ei = (x / ia) * (x / ia) + (y / ib) * (y / ib);
        return ea <= 1.0 && ei >= 1.0;
    }
};

/// Rasterizes the glyph centred at `centerPx` (pixel-edge coordinates) on a
/// width x height grid. Pixels whose centre falls inside get alpha.
inline SampleMask make_phi_mask(std::size_t width, std::size_t height, double pitchUm, double magnification,
                                Point2 centerPx, const PhiGlyph& glyph = {})
{
    glyph.validate();
    if (!(pitchUm > 0.0 && magnification > 0.0))
        throw ConfigError("pitch and magnification must be positive");
    const double objPitch = pitchUm / magnification;
    std::vector<double> a(width * height, 0.0);
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
            const double ox = (static_cast<double>(x) + 0.5 - centerPx.x) * objPitch;
            const double oy = (static_cast<double>(y) + 0.5 - centerPx.y) * objPitch;
            if (glyph.contains(ox, oy))
                a[y * width + x] = glyph.alpha;
        }
    return SampleMask(RealFrame(width, height, pitchUm, std::move(a)));
}

/// Pixel rectangle inside the stem, clear of the ring: the default SNR stripe.
inline Rect phi_stem_stripe(double pitchUm, double magnification, Point2 centerPx, const PhiGlyph& glyph = {})
{
    const double objPitch = pitchUm / magnification;
    const double halfW = glyph.stemUm / 2.0 / objPitch;
    const double halfH = glyph.heightUm / 2.0 / objPitch;
    const long x0 = static_cast<long>(std::ceil(centerPx.x - halfW));
    const long x1 = static_cast<long>(std::floor(centerPx.x + halfW));
    const long y0 = static_cast<long>(std::ceil(centerPx.y - halfH));
    const long y1 = static_cast<long>(std::floor(centerPx.y + halfH));
    if (x1 <= x0 || y1 <= y0)
        throw ConfigError("glyph stem is narrower than one pixel");
    return {x0, y0, static_cast<std::size_t>(x1 - x0), static_cast<std::size_t>(y1 - y0)};
}

} // namespace twinbeam
