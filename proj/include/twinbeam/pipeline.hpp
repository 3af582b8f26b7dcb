#pragma once

// Absorption maps from raw stacks: flat-field calibration, the direct (DR),
// classical differential (DC) and sub-shot-noise (SSN) estimators, the d x d
// neighbourhood mean filter and the stripe SNR.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <span>
#include <string>
#include <vector>

#include "twinbeam/diag.hpp"
#include "twinbeam/error.hpp"
#include "twinbeam/frame.hpp"
#include "twinbeam/numeric.hpp"
#include "twinbeam/parallel.hpp"

namespace twinbeam {

/// Per-pixel gains of both beams from a calibration stack without sample.
struct FlatField {
    RealFrame gain1;
    RealFrame gain2;
    /// Mean photon number per pixel after gain correction (the global mean).
    double meanN1 = 0.0;
    double meanN2 = 0.0;

    const RealFrame& gain(int beam) const { return beam == 1 ? gain1 : gain2; }
    double mean_n(int beam) const { return beam == 1 ? meanN1 : meanN2; }
};

namespace detail {

inline void check_beam(int beam)
{
    if (beam != 1 && beam != 2)
        throw ConfigError("beam index must be 1 or 2");
}

} // namespace detail

inline FlatField build_flat_field(const FramePairStack& calibration)
{
    if (calibration.size() < 2)
        throw DataError("flat field needs at least two calibration shots");
    const std::size_t n = calibration.width() * calibration.height();
    FlatField flat;
    for (int beam = 1; beam <= 2; ++beam) {
        std::vector<double> tmean(n);
        parallel_for(n, [&](std::size_t i) {
            std::vector<double> v(calibration.size());
            for (std::size_t s = 0; s < calibration.size(); ++s)
                v[s] = calibration[s].beam(beam).data()[i];
            tmean[i] = mean_of(v);
        });
        for (std::size_t i = 0; i < n; ++i)
            if (!(tmean[i] > 0.0))
                throw DataError("zero-mean pixel (" + std::to_string(i % calibration.width()) + ", " +
                                std::to_string(i / calibration.width()) + ") in beam " + std::to_string(beam));
        const double global = mean_of(tmean);
        std::vector<double> gain(n);
        for (std::size_t i = 0; i < n; ++i)
            gain[i] = tmean[i] / global;
        RealFrame g(calibration.width(), calibration.height(), calibration.pitch(), std::move(gain));
        if (beam == 1) {
            flat.gain1 = std::move(g);
            flat.meanN1 = global;
        } else {
            flat.gain2 = std::move(g);
            flat.meanN2 = global;
        }
    }
    return flat;
}

/// Gain-corrected copy of a raw frame.
template <FrameValue T>
RealFrame flat_correct(const Frame<T>& f, const FlatField& flat, int beam)
{
    detail::check_beam(beam);
    const RealFrame& g = flat.gain(beam);
    if (!f.same_geometry(g))
        throw DataError("frame geometry does not match the flat field");
    std::vector<double> out(f.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<double>(f.data()[i]) / g.data()[i];
    return RealFrame(f.width(), f.height(), f.pitch(), std::move(out));
}

enum class FilterMode { Block, Sliding };

/// Replaces every pixel by the mean of its d x d neighbourhood. Block mode
/// returns one value per non-overlapping block (pitch grows by d); sliding
/// mode keeps the grid, with window [x - d/2, x - d/2 + d - 1] truncated at
/// the borders.
inline RealFrame qe_filter(const RealFrame& map, std::size_t d, FilterMode mode)
{
    if (d == 0)
        throw ConfigError("filter scale must be at least 1");
    if (d == 1)
        return map;
    const std::size_t W = map.width();
    const std::size_t H = map.height();
    if (mode == FilterMode::Block) {
        if (W % d != 0 || H % d != 0)
            throw ConfigError("block size " + std::to_string(d) + " does not divide " + std::to_string(W) + "x" +
                              std::to_string(H));
        RealFrame sums = bin_sum(map, d);
        std::vector<double> v(sums.data().begin(), sums.data().end());
        for (double& x : v)
            x /= static_cast<double>(d * d);
        return RealFrame(sums.width(), sums.height(), sums.pitch(), std::move(v));
    }
    const long half = static_cast<long>(d / 2);
    auto window = [&](long c, long n) {
        const long lo = std::max(0L, c - half);
        const long hi = std::min(n - 1, c - half + static_cast<long>(d) - 1);
        return std::pair{lo, hi};
    };
    std::vector<double> rows(W * H), out(W * H);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
            const auto [lo, hi] = window(static_cast<long>(x), static_cast<long>(W));
            double s = 0.0;
            for (long k = lo; k <= hi; ++k)
                s += map(static_cast<std::size_t>(k), y);
            rows[y * W + x] = s / static_cast<double>(hi - lo + 1);
        }
    for (std::size_t y = 0; y < H; ++y) {
        const auto [lo, hi] = window(static_cast<long>(y), static_cast<long>(H));
        for (std::size_t x = 0; x < W; ++x) {
            double s = 0.0;
            for (long k = lo; k <= hi; ++k)
                s += rows[static_cast<std::size_t>(k) * W + x];
            out[y * W + x] = s / static_cast<double>(hi - lo + 1);
        }
    }
    return RealFrame(W, H, map.pitch(), std::move(out));
}

enum class Scheme { DR, DC, SSN };

inline const char* scheme_name(Scheme s)
{
    switch (s) {
    case Scheme::DR:
        return "dr";
    case Scheme::DC:
        return "dc";
    case Scheme::SSN:
        return "ssn";
    }
    return "?";
}

struct AlphaMap {
    RealFrame alpha;
    Scheme scheme = Scheme::DR;
    std::size_t scale = 1;
    FilterMode mode = FilterMode::Block;
};

/// Direct imaging on a whole sample-beam frame: alpha = 1 - N_corr / <N>.
template <FrameValue T>
AlphaMap alpha_direct(const Frame<T>& frame, const FlatField& flat, int beam, std::size_t d = 1,
                      FilterMode mode = FilterMode::Block)
{
    const RealFrame c = flat_correct(frame, flat, beam);
    const double n = flat.mean_n(beam);
    std::vector<double> a(c.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        a[i] = 1.0 - c.data()[i] / n;
    return {qe_filter(RealFrame(c.width(), c.height(), c.pitch(), std::move(a)), d, mode), Scheme::DR, d, mode};
}

/// Direct imaging restricted to the sample region of `regions`
/// (A when the sample sits in beam 1, B otherwise).
template <FrameValue T>
AlphaMap alpha_direct(const FramePair<T>& shot, const FlatField& flat, const RegionPair& regions, int sampleBeam,
                      std::size_t d = 1, FilterMode mode = FilterMode::Block)
{
    detail::check_beam(sampleBeam);
    const Frame<T>& f = shot.beam(sampleBeam);
    regions.validate(f.width(), f.height());
    const Rect r = (sampleBeam == 1 ? regions.regionA() : regions.regionB()).rect();
    const RealFrame c = crop(flat_correct(f, flat, sampleBeam), r);
    const double n = flat.mean_n(sampleBeam);
    std::vector<double> a(c.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        a[i] = 1.0 - c.data()[i] / n;
    return {qe_filter(RealFrame(c.width(), c.height(), c.pitch(), std::move(a)), d, mode), Scheme::DR, d, mode};
}

namespace detail {

/// alpha(x) = N_ref,corr(mirror x + shift) / <N>_ref - N_samp,corr(x) / <N>_samp
/// on the sample region. Normalizing each beam by its own flat-field mean
/// balances unequal beam efficiencies.
template <FrameValue T>
RealFrame differential(const FramePair<T>& shot, const FlatField& flat, const RegionPair& regions, int sampleBeam,
                       PixelCoord shift)
{
    check_beam(sampleBeam);
    const int refBeam = 3 - sampleBeam;
    const Frame<T>& fs = shot.beam(sampleBeam);
    const Frame<T>& fr = shot.beam(refBeam);
    regions.validate(fs.width(), fs.height());
    Region rs = sampleBeam == 1 ? regions.regionA() : regions.regionB();
    Region rr = sampleBeam == 1 ? regions.regionB() : regions.regionA();
    rr.origin.x += shift.x;
    rr.origin.y += shift.y;
    if (!rr.rect().inside(fr.width(), fr.height()))
        throw DataError("shifted reference region does not fit inside the frame");
    const RealFrame cs = crop(flat_correct(fs, flat, sampleBeam), rs.rect());
    const RealFrame cr = crop(flat_correct(fr, flat, refBeam), rr.rect());
    const double ns = flat.mean_n(sampleBeam);
    const double nr = flat.mean_n(refBeam);
    const std::size_t n = cs.size();
    std::vector<double> a(n);
    for (std::size_t i = 0; i < n; ++i)
        a[i] = cr.data()[n - 1 - i] / nr - cs.data()[i] / ns;
    return RealFrame(cs.width(), cs.height(), cs.pitch(), std::move(a));
}

} // namespace detail

/// Sub-shot-noise imaging: the sample region minus its correlated mirror.
template <FrameValue T>
AlphaMap alpha_ssn(const FramePair<T>& shot, const FlatField& flat, const RegionPair& regions, int sampleBeam,
                   std::size_t d = 1, FilterMode mode = FilterMode::Block)
{
    return {qe_filter(detail::differential(shot, flat, regions, sampleBeam, {0, 0}), d, mode), Scheme::SSN, d, mode};
}

/// Classical differential imaging: as SSN, with the reference region moved by
/// `shift` pixels, which must exceed the coherence diameter `minShiftPx`.
template <FrameValue T>
AlphaMap alpha_dc(const FramePair<T>& shot, const FlatField& flat, const RegionPair& regions, int sampleBeam,
                  PixelCoord shift, double minShiftPx, std::size_t d = 1, FilterMode mode = FilterMode::Block)
{
    const double len = std::hypot(static_cast<double>(shift.x), static_cast<double>(shift.y));
    if (shift.x == 0 && shift.y == 0)
        throw ConfigError("DC reference shift must be non-zero");
    if (!(len > minShiftPx))
        throw ConfigError("DC reference shift " + std::to_string(len) + " px does not exceed 2r = " +
                          std::to_string(minShiftPx) + " px");
    return {qe_filter(detail::differential(shot, flat, regions, sampleBeam, shift), d, mode), Scheme::DC, d, mode};
}

struct StripeSnr {
    double snr = 0.0;
    std::size_t pixels = 0;
    std::size_t excluded = 0;
};

/// Mean over the stripe of the per-pixel temporal SNR E_n[a] / sqrt(V_n[a]).
/// Pixels with zero temporal variance are excluded and counted.
inline StripeSnr snr_stripe(std::span<const RealFrame> maps, const Rect& stripe)
{
    if (maps.size() < 2)
        throw DataError("stripe SNR needs at least two maps");
    const RealFrame& ref = maps.front();
    for (const auto& m : maps)
        if (!m.same_geometry(ref))
            throw DataError("maps must share one geometry");
    if (!stripe.inside(ref.width(), ref.height()) || stripe.width == 0 || stripe.height == 0)
        throw DataError("stripe outside map");
    std::vector<double> snr;
    StripeSnr out;
    std::vector<double> v(maps.size());
    for (std::size_t y = 0; y < stripe.height; ++y)
        for (std::size_t x = 0; x < stripe.width; ++x) {
            const std::size_t px = static_cast<std::size_t>(stripe.x) + x;
            const std::size_t py = static_cast<std::size_t>(stripe.y) + y;
            for (std::size_t s = 0; s < maps.size(); ++s)
                v[s] = maps[s](px, py);
            const double var = variance_of(v);
            if (!(var > 0.0)) {
                ++out.excluded;
                continue;
            }
            snr.push_back(mean_of(v) / std::sqrt(var));
        }
    if (out.excluded > 0)
        warn(std::to_string(out.excluded) + " stripe pixel(s) with zero temporal variance excluded from SNR");
    if (snr.empty())
        throw NumericalError("stripe SNR undefined: every pixel has zero temporal variance");
    out.pixels = snr.size();
    out.snr = mean_of(snr);
    return out;
}

inline StripeSnr snr_stripe(const std::vector<RealFrame>& maps, const Rect& stripe)
{
    return snr_stripe(std::span<const RealFrame>(maps), stripe);
}

} // namespace twinbeam
