#pragma once

// Synthetic twin-beam frame stacks.
//
// Pair generator: pairs are emitted as a Poisson process over the frame,
// photon 1 uniformly inside its pixel, photon 2 at the point reflection of
// photon 1 through the symmetry centre plus Gaussian jitter (FWHM = 2r) and a
// rigid shift delta along +x. Each photon is kept with probability
// eta (1 - alpha) of its pixel. Two engines produce the same law:
//
//  - Kernel: for every source pixel, the landing pixel offset of photon 2 has
//    a closed-form distribution q(k). Poisson splitting turns the pair process
//    into independent Poisson counts per (source pixel, landing pixel) link,
//    which is exact and costs O(pixels x kernel) per shot.
//  - Photon: places every pair explicitly. Needed for chromatic shear, where
//    the landing law depends on the continuous position of photon 1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "twinbeam/error.hpp"
#include "twinbeam/frame.hpp"
#include "twinbeam/numeric.hpp"
#include "twinbeam/parallel.hpp"
#include "twinbeam/rng.hpp"

namespace twinbeam {

/// Lengths in micrometres in the detection plane.
struct TwinBeamParams {
    double meanPhotonsPerPixel = 1000.0;
    double coherenceRadius = 20.592;
    /// Per-axis radii; a positive value overrides coherenceRadius on that axis.
    double coherenceRadiusX = 0.0;
    double coherenceRadiusY = 0.0;
    /// Rigid shift of the beam-2 pattern along +x.
    double misalignment = 0.0;
    double eta1 = 0.81;
    double eta2 = 0.81;
    /// Thermal generator only.
    double muPerMode = 0.0;
    double strayFraction = 0.0;
    double readNoise = 0.0;
    /// Half-width of the uniform band of 2 dlambda / lambda_d per pair.
    double chromaticShear = 0.0;
    /// Radial Gaussian intensity envelope; 0 means uniform.
    double envelopeSigma = 0.0;
    std::uint64_t seed = 0;

    double radius_x() const noexcept { return coherenceRadiusX > 0.0 ? coherenceRadiusX : coherenceRadius; }
    double radius_y() const noexcept { return coherenceRadiusY > 0.0 ? coherenceRadiusY : coherenceRadius; }

    void validate() const
    {
        if (!(meanPhotonsPerPixel >= 0.0) || !std::isfinite(meanPhotonsPerPixel))
            throw ConfigError("mean photons per pixel must be non-negative");
        if (!(coherenceRadius > 0.0))
            throw ConfigError("coherence radius must be positive");
        if (coherenceRadiusX < 0.0 || coherenceRadiusY < 0.0)
            throw ConfigError("per-axis coherence radii must be non-negative");
        if (!(misalignment >= 0.0))
            throw ConfigError("misalignment must be non-negative");
        if (!(eta1 >= 0.0 && eta1 <= 1.0) || !(eta2 >= 0.0 && eta2 <= 1.0))
            throw ConfigError("detection efficiencies must lie in [0, 1]");
        if (!(muPerMode >= 0.0))
            throw ConfigError("mean photons per mode must be non-negative");
        if (!(strayFraction >= 0.0 && strayFraction < 1.0))
            throw ConfigError("stray fraction must lie in [0, 1)");
        if (!(readNoise >= 0.0))
            throw ConfigError("read noise must be non-negative");
        if (!(chromaticShear >= 0.0 && chromaticShear < 1.0))
            throw ConfigError("chromatic shear must lie in [0, 1)");
        if (!(envelopeSigma >= 0.0))
            throw ConfigError("envelope width must be non-negative");
    }

    /// Stray photons per pixel: N_st / (N_st + <N>) equals the stray fraction.
    double stray_mean() const noexcept { return strayFraction / (1.0 - strayFraction) * meanPhotonsPerPixel; }
};

struct FrameGeometry {
    std::size_t width = 0;
    std::size_t height = 0;
    double pitch = 1.0;
    double exposure = 0.1;
    /// Symmetry centre in pixel-edge coordinates; the frame centre by default.
    std::optional<Point2> symmetryCenter;

    Point2 center() const noexcept
    {
        if (symmetryCenter)
            return *symmetryCenter;
        return {static_cast<double>(width) / 2.0, static_cast<double>(height) / 2.0};
    }

    void validate() const
    {
        if (width == 0 || height == 0)
            throw DataError("frame geometry must be non-empty");
        if (!(pitch > 0.0) || !std::isfinite(pitch))
            throw DataError("pixel pitch must be positive");
    }
};

/// Per-pixel absorption coefficients on the frame grid.
class SampleMask {
public:
    SampleMask() = default;

    explicit SampleMask(RealFrame alpha) : alpha_(std::move(alpha))
    {
        for (std::size_t i = 0; i < alpha_.size(); ++i) {
            const double a = alpha_.data()[i];
            if (!(a >= 0.0 && a <= 1.0))
                throw DataError("absorption " + std::to_string(a) + " at pixel " + std::to_string(i % alpha_.width()) +
                                ", " + std::to_string(i / alpha_.width()) + " outside [0, 1]");
        }
    }

    static SampleMask uniform(std::size_t width, std::size_t height, double pitch, double alpha)
    {
        return SampleMask(RealFrame(width, height, pitch, alpha));
    }

    const RealFrame& alpha() const noexcept { return alpha_; }
    double operator()(std::size_t x, std::size_t y) const noexcept { return alpha_(x, y); }

    void check_grid(std::size_t width, std::size_t height) const
    {
        if (alpha_.width() != width || alpha_.height() != height)
            throw DataError("sample mask grid " + std::to_string(alpha_.width()) + "x" +
                            std::to_string(alpha_.height()) + " does not match frames " + std::to_string(width) + "x" +
                            std::to_string(height));
    }

private:
    RealFrame alpha_;
};

enum class Engine { Auto, Kernel, Photon };

struct GenerateOptions {
    const SampleMask* sample = nullptr;
    int sampleBeam = 1;
    Engine engine = Engine::Auto;
    /// When set, both regions must fit inside the frame.
    std::optional<RegionPair> regions;
};

namespace detail {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

/// Antiderivative of the normal CDF.
inline double normal_cdf_integral(double z) { return z * normal_cdf(z) + normal_pdf(z); }

constexpr double kFwhmToSigma = 2.3548200450309493; // 2 sqrt(2 ln 2)
constexpr double kKernelCutoff = 1e-12;

struct Tap {
    long offset;
    double weight;
};

/// Distribution of the landing pixel offset k for a photon uniform inside
/// its pixel, displaced by N(shift, s^2) (pixel units), relative to the
/// mirrored pixel: q(k) = s [G(z_{k+1}) - 2 G(z_k) + G(z_{k-1})], z_j = (j - shift)/s.
inline std::vector<Tap> landing_kernel(double s, double shift)
{
    std::vector<Tap> taps;
    if (s < 1e-9) {
        const double fl = std::floor(shift);
        const double frac = shift - fl;
        if (1.0 - frac > 0.0)
            taps.push_back({static_cast<long>(fl), 1.0 - frac});
        if (frac > 0.0)
            taps.push_back({static_cast<long>(fl) + 1, frac});
        return taps;
    }
    const long lo = static_cast<long>(std::floor(shift - 1.0 - 9.0 * s)) - 1;
    const long hi = static_cast<long>(std::ceil(shift + 9.0 * s)) + 1;
    for (long k = lo; k <= hi; ++k) {
        auto G = [&](long j) { return normal_cdf_integral((static_cast<double>(j) - shift) / s); };
        const double q = s * (G(k + 1) - 2.0 * G(k) + G(k - 1));
        if (q > kKernelCutoff)
            taps.push_back({k, q});
    }
    return taps;
}

struct KernelTap2 {
    long dx;
    long dy;
    double weight;
};

inline std::vector<KernelTap2> landing_kernel_2d(double sx, double sy, double shiftX)
{
    std::vector<KernelTap2> out;
    for (const Tap& ty : landing_kernel(sy, 0.0))
        for (const Tap& tx : landing_kernel(sx, shiftX))
            if (tx.weight * ty.weight > kKernelCutoff)
                out.push_back({tx.offset, ty.offset, tx.weight * ty.weight});
    return out;
}

inline void require_integer_mirror(Point2 c)
{
    if (std::abs(2.0 * c.x - std::round(2.0 * c.x)) > 1e-9 || std::abs(2.0 * c.y - std::round(2.0 * c.y)) > 1e-9)
        throw ConfigError("symmetry centre must lie on a half-pixel grid");
}

/// Per-pixel detection probability eta (1 - alpha) of one beam.
inline std::vector<double> detection_map(const FrameGeometry& g, double eta, const SampleMask* mask)
{
    std::vector<double> p(g.width * g.height, eta);
    if (mask)
        for (std::size_t i = 0; i < p.size(); ++i)
            p[i] = eta * (1.0 - mask->alpha().data()[i]);
    return p;
}

inline double pair_rate(const TwinBeamParams& p)
{
    return p.eta1 > 0.0 ? p.meanPhotonsPerPixel / p.eta1 : p.meanPhotonsPerPixel;
}

inline double envelope(const TwinBeamParams& p, const FrameGeometry& g, double x, double y)
{
    if (p.envelopeSigma <= 0.0)
        return 1.0;
    const Point2 c = g.center();
    const double s = p.envelopeSigma / g.pitch;
    const double dx = x - c.x;
    const double dy = y - c.y;
    return std::exp(-(dx * dx + dy * dy) / (2.0 * s * s));
}

/// Stray light and read noise, in that order, then conversion to counts.
inline CountFrame finish_frame(std::vector<std::uint64_t>& n, const FrameGeometry& g, const TwinBeamParams& p,
                               Rng& rng)
{
    const double stray = p.stray_mean();
    if (stray > 0.0) {
        std::poisson_distribution<std::uint64_t> d(stray);
        for (auto& v : n)
            v += d(rng);
    }
    std::vector<std::uint32_t> out(n.size());
    if (p.readNoise > 0.0) {
        std::normal_distribution<double> noise(0.0, p.readNoise);
        for (std::size_t i = 0; i < n.size(); ++i) {
            const double v = std::round(static_cast<double>(n[i]) + noise(rng));
            out[i] = v <= 0.0 ? 0u : static_cast<std::uint32_t>(std::min(v, 4294967295.0));
        }
    } else {
        for (std::size_t i = 0; i < n.size(); ++i)
            out[i] = static_cast<std::uint32_t>(std::min<std::uint64_t>(n[i], 4294967295u));
    }
    return CountFrame(g.width, g.height, g.pitch, std::move(out));
}

/// Poisson means of the kernel engine.
struct KernelModel {
    struct Link {
        std::uint32_t src;
        std::uint32_t dst;
        double mean;
    };
    std::vector<double> only1; ///< photon 1 detected, partner lost
    std::vector<double> only2; ///< photon 2 detected, partner lost
    std::vector<Link> links;   ///< both detected
};

inline KernelModel build_kernel_model(const TwinBeamParams& p, const FrameGeometry& g, const std::vector<double>& p1,
                                      const std::vector<double>& p2)
{
    const Point2 c = g.center();
    require_integer_mirror(c);
    const long W = static_cast<long>(g.width);
    const long H = static_cast<long>(g.height);
    const long mx = std::lround(2.0 * c.x) - 1; // mirror pixel: m(i) = mx - i
    const long my = std::lround(2.0 * c.y) - 1;
    const double sx = 2.0 * p.radius_x() / kFwhmToSigma / g.pitch;
    const double sy = 2.0 * p.radius_y() / kFwhmToSigma / g.pitch;
    const auto taps = landing_kernel_2d(sx, sy, p.misalignment / g.pitch);
    long kxmin = 0, kxmax = 0, kymin = 0, kymax = 0;
    for (const auto& t : taps) {
        kxmin = std::min(kxmin, t.dx);
        kxmax = std::max(kxmax, t.dx);
        kymin = std::min(kymin, t.dy);
        kymax = std::max(kymax, t.dy);
    }
    const long x0 = std::min(0L, mx - (W - 1) - kxmax);
    const long x1 = std::max(W - 1, mx - kxmin);
    const long y0 = std::min(0L, my - (H - 1) - kymax);
    const long y1 = std::max(H - 1, my - kymin);
    const double lambda0 = pair_rate(p);

    KernelModel m;
    m.only1.assign(g.width * g.height, 0.0);
    m.only2.assign(g.width * g.height, 0.0);
    m.links.reserve(g.width * g.height * taps.size());
    for (long y = y0; y <= y1; ++y) {
        for (long x = x0; x <= x1; ++x) {
            const double lam = lambda0 * envelope(p, g, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5);
            if (lam <= 0.0)
                continue;
            const bool inFrame = x >= 0 && x < W && y >= 0 && y < H;
            const std::size_t src = inFrame ? static_cast<std::size_t>(y * W + x) : 0;
            const double d1 = inFrame ? p1[src] : 0.0;
            double partnerSeen = 0.0;
            for (const auto& t : taps) {
                const long jx = mx - x + t.dx;
                const long jy = my - y + t.dy;
                if (jx < 0 || jx >= W || jy < 0 || jy >= H)
                    continue;
                const std::size_t dst = static_cast<std::size_t>(jy * W + jx);
                const double q2 = t.weight * p2[dst];
                partnerSeen += q2;
                m.only2[dst] += lam * (1.0 - d1) * q2;
                if (inFrame && d1 > 0.0 && q2 > 0.0)
                    m.links.push_back({static_cast<std::uint32_t>(src), static_cast<std::uint32_t>(dst), lam * d1 * q2});
            }
            if (inFrame)
                m.only1[src] = lam * d1 * std::max(0.0, 1.0 - partnerSeen);
        }
    }
    return m;
}

inline FramePair<std::uint32_t> kernel_shot(const KernelModel& m, const TwinBeamParams& p, const FrameGeometry& g,
                                            Rng& rng)
{
    const std::size_t n = g.width * g.height;
    std::vector<std::uint64_t> n1(n, 0), n2(n, 0);
    std::poisson_distribution<std::uint64_t> pois;
    using Param = std::poisson_distribution<std::uint64_t>::param_type;
    for (std::size_t i = 0; i < n; ++i)
        if (m.only1[i] > 0.0)
            n1[i] += pois(rng, Param(m.only1[i]));
    for (const auto& l : m.links) {
        const std::uint64_t c = pois(rng, Param(l.mean));
        n1[l.src] += c;
        n2[l.dst] += c;
    }
    for (std::size_t j = 0; j < n; ++j)
        if (m.only2[j] > 0.0)
            n2[j] += pois(rng, Param(m.only2[j]));
    CountFrame f1 = finish_frame(n1, g, p, rng);
    CountFrame f2 = finish_frame(n2, g, p, rng);
    return {std::move(f1), std::move(f2)};
}

inline FramePair<std::uint32_t> photon_shot(const TwinBeamParams& p, const FrameGeometry& g,
                                            const std::vector<double>& p1, const std::vector<double>& p2, Rng& rng)
{
    const Point2 c = g.center();
    const double W = static_cast<double>(g.width);
    const double H = static_cast<double>(g.height);
    const double sx = 2.0 * p.radius_x() / kFwhmToSigma / g.pitch;
    const double sy = 2.0 * p.radius_y() / kFwhmToSigma / g.pitch;
    const double shift = p.misalignment / g.pitch;
    const double shrink = 1.0 - p.chromaticShear;
    const double hx = (std::max(std::abs(c.x), std::abs(W - c.x)) + 9.0 * sx + shift + 1.0) / shrink;
    const double hy = (std::max(std::abs(c.y), std::abs(H - c.y)) + 9.0 * sy + 1.0) / shrink;
    const double bx0 = std::min(0.0, c.x - hx), bx1 = std::max(W, c.x + hx);
    const double by0 = std::min(0.0, c.y - hy), by1 = std::max(H, c.y + hy);

    std::vector<std::uint64_t> n1(g.width * g.height, 0), n2(g.width * g.height, 0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const std::uint64_t pairs = poisson(rng, pair_rate(p) * (bx1 - bx0) * (by1 - by0));
    auto pixel = [&](double x, double y) -> long {
        if (x < 0.0 || x >= W || y < 0.0 || y >= H)
            return -1;
        return static_cast<long>(std::floor(y)) * static_cast<long>(g.width) + static_cast<long>(std::floor(x));
    };
    for (std::uint64_t k = 0; k < pairs; ++k) {
        const double x1 = bx0 + (bx1 - bx0) * u01(rng);
        const double y1 = by0 + (by1 - by0) * u01(rng);
        if (p.envelopeSigma > 0.0 && u01(rng) >= envelope(p, g, x1, y1))
            continue;
        const double sc = p.chromaticShear > 0.0 ? p.chromaticShear * (2.0 * u01(rng) - 1.0) : 0.0;
        const double x2 = 2.0 * c.x - x1 + sc * (x1 - c.x) + sx * gauss(rng) + shift;
        const double y2 = 2.0 * c.y - y1 + sc * (y1 - c.y) + sy * gauss(rng);
        const double u1 = u01(rng);
        const double u2 = u01(rng);
        const long i1 = pixel(x1, y1);
        const long i2 = pixel(x2, y2);
        if (i1 >= 0 && u1 < p1[static_cast<std::size_t>(i1)])
            ++n1[static_cast<std::size_t>(i1)];
        if (i2 >= 0 && u2 < p2[static_cast<std::size_t>(i2)])
            ++n2[static_cast<std::size_t>(i2)];
    }
    CountFrame f1 = finish_frame(n1, g, p, rng);
    CountFrame f2 = finish_frame(n2, g, p, rng);
    return {std::move(f1), std::move(f2)};
}

inline void check_common(const TwinBeamParams& p, const FrameGeometry& g, std::size_t shots,
                         const GenerateOptions& o)
{
    p.validate();
    g.validate();
    if (shots == 0)
        throw ConfigError("shot count must be positive");
    if (o.sampleBeam != 1 && o.sampleBeam != 2)
        throw ConfigError("sample beam must be 1 or 2");
    if (o.sample)
        o.sample->check_grid(g.width, g.height);
    if (o.regions)
        o.regions->validate(g.width, g.height);
}

} // namespace detail

/// Pair-based (Poissonian, mu -> 0) twin-beam generator. Pairs arrive at
/// <N>/eta1 per pixel, so beam 1 detects <N> per pixel on average.
inline FramePairStack generate_pair_poisson(const TwinBeamParams& p, const FrameGeometry& g, std::size_t shots,
                                            const GenerateOptions& o = {})
{
    detail::check_common(p, g, shots, o);
    const SampleMask* m1 = o.sample && o.sampleBeam == 1 ? o.sample : nullptr;
    const SampleMask* m2 = o.sample && o.sampleBeam == 2 ? o.sample : nullptr;
    const auto p1 = detail::detection_map(g, p.eta1, m1);
    const auto p2 = detail::detection_map(g, p.eta2, m2);

    Engine engine = o.engine;
    if (engine == Engine::Auto)
        engine = p.chromaticShear > 0.0 ? Engine::Photon : Engine::Kernel;
    if (engine == Engine::Kernel && p.chromaticShear > 0.0)
        throw ConfigError("chromatic shear requires the photon engine");

    std::vector<FramePair<std::uint32_t>> out(shots);
    if (engine == Engine::Kernel) {
        const auto model = detail::build_kernel_model(p, g, p1, p2);
        parallel_for(shots, [&](std::size_t s) {
            Rng rng = substream(p.seed, s, Stream::Generate);
            out[s] = detail::kernel_shot(model, p, g, rng);
        });
    } else {
        parallel_for(shots, [&](std::size_t s) {
            Rng rng = substream(p.seed, s, Stream::Generate);
            out[s] = detail::photon_shot(p, g, p1, p2, rng);
        });
    }
    return make_stack(std::move(out), g.exposure, o.sample ? ShotLabel::WithSample : ShotLabel::WithoutSample);
}

/// Spatial mode budget of one pixel for the thermal generator.
struct ModeBudget {
    double border = 0.0;
    double correlated = 0.0;
    double uncorrelated = 0.0;
    double beta = 0.5;

    void validate() const
    {
        if (!(border >= 0.0 && correlated >= 0.0 && uncorrelated >= 0.0) ||
            !std::isfinite(border + correlated + uncorrelated))
            throw ConfigError("mode counts must be non-negative and finite");
        if (!(beta >= 0.0 && beta <= 1.0))
            throw ConfigError("beta must lie in [0, 1]");
    }
};

/// Multi-thermal generator: each pixel pair (x, mirror of x) shares its
/// correlated and border photons; uncorrelated modes are independent per beam.
/// Photons are thinned by eta (1 - alpha), border photons additionally by beta.
inline FramePairStack generate_pair_thermal(const TwinBeamParams& p, const ModeBudget& modes,
                                            const FrameGeometry& g, std::size_t shots,
                                            const GenerateOptions& o = {})
{
    detail::check_common(p, g, shots, o);
    modes.validate();
    if (!(p.muPerMode > 0.0))
        throw ConfigError("thermal generator needs mu > 0");
    const Point2 c = g.center();
    if (c.x != static_cast<double>(g.width) / 2.0 || c.y != static_cast<double>(g.height) / 2.0)
        throw ConfigError("thermal generator pairs pixels through the frame centre");
    const SampleMask* m1 = o.sample && o.sampleBeam == 1 ? o.sample : nullptr;
    const SampleMask* m2 = o.sample && o.sampleBeam == 2 ? o.sample : nullptr;
    const auto p1 = detail::detection_map(g, p.eta1, m1);
    const auto p2 = detail::detection_map(g, p.eta2, m2);
    const std::size_t n = g.width * g.height;
    const double mu = p.muPerMode;

    std::vector<FramePair<std::uint32_t>> out(shots);
    parallel_for(shots, [&](std::size_t s) {
        Rng rng = substream(p.seed, s, Stream::Generate);
        std::vector<std::uint64_t> n1(n, 0), n2(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = n - 1 - i; // point reflection through the frame centre
            const std::uint64_t nc = multi_thermal(rng, modes.correlated, mu);
            n1[i] += binomial(rng, nc, p1[i]);
            n2[j] += binomial(rng, nc, p2[j]);
            const std::uint64_t nb = multi_thermal(rng, modes.border, mu);
            n1[i] += binomial(rng, nb, modes.beta * p1[i]);
            n2[j] += binomial(rng, nb, modes.beta * p2[j]);
            n1[i] += binomial(rng, multi_thermal(rng, modes.uncorrelated, mu), p1[i]);
            n2[j] += binomial(rng, multi_thermal(rng, modes.uncorrelated, mu), p2[j]);
        }
        CountFrame f1 = detail::finish_frame(n1, g, p, rng);
        CountFrame f2 = detail::finish_frame(n2, g, p, rng);
        out[s] = {std::move(f1), std::move(f2)};
    });
    return make_stack(std::move(out), g.exposure, o.sample ? ShotLabel::WithSample : ShotLabel::WithoutSample);
}

/// Binomial thinning of one beam by 1 - alpha(pixel), per-shot seeded.
inline FramePairStack apply_sample(const FramePairStack& stack, const SampleMask& mask, int beamIndex,
                                   std::uint64_t seed)
{
    if (beamIndex != 1 && beamIndex != 2)
        throw ConfigError("beam index must be 1 or 2");
    mask.check_grid(stack.width(), stack.height());
    std::vector<FramePair<std::uint32_t>> out(stack.size());
    parallel_for(stack.size(), [&](std::size_t s) {
        Rng rng = substream(seed, s, Stream::Sample);
        const CountFrame& src = stack[s].beam(beamIndex);
        std::vector<std::uint32_t> v(src.size());
        for (std::size_t i = 0; i < v.size(); ++i)
            v[i] = static_cast<std::uint32_t>(binomial(rng, src.data()[i], 1.0 - mask.alpha().data()[i]));
        CountFrame thinned(src.width(), src.height(), src.pitch(), std::move(v));
        out[s] = beamIndex == 1 ? FramePair<std::uint32_t>{std::move(thinned), stack[s].beam2}
                                : FramePair<std::uint32_t>{stack[s].beam1, std::move(thinned)};
    });
    return make_stack(std::move(out), stack.exposure(), ShotLabel::WithSample);
}

/// Expected spatial NRF of the pair generator for d x d binned mirrored
/// regions, from the Poisson link means (no sampling). Read noise enters as
/// its variance; rounding and clamping are ignored.
inline double expected_pair_nrf(const TwinBeamParams& p, const FrameGeometry& g, const RegionPair& regions,
                                std::size_t d)
{
    p.validate();
    g.validate();
    regions.validate(g.width, g.height);
    if (d == 0 || regions.size() % d != 0)
        throw ConfigError("binning factor must divide the region size");
    const auto p1 = detail::detection_map(g, p.eta1, nullptr);
    const auto p2 = detail::detection_map(g, p.eta2, nullptr);
    const auto m = detail::build_kernel_model(p, g, p1, p2);
    const std::size_t nb = regions.size() / d;
    const std::size_t W = g.width;
    // cell index of a frame pixel inside region A (beam 1) or B (beam 2), or npos
    auto cellOf = [&](std::size_t idx, PixelCoord o) -> std::size_t {
        const long x = static_cast<long>(idx % W) - o.x;
        const long y = static_cast<long>(idx / W) - o.y;
        const long s = static_cast<long>(regions.size());
        if (x < 0 || y < 0 || x >= s || y >= s)
            return static_cast<std::size_t>(-1);
        return static_cast<std::size_t>(y / static_cast<long>(d)) * nb + static_cast<std::size_t>(x / static_cast<long>(d));
    };
    std::vector<double> mean1(nb * nb, 0.0), mean2(nb * nb, 0.0), cov(nb * nb, 0.0);
    for (std::size_t i = 0; i < m.only1.size(); ++i) {
        if (auto a = cellOf(i, regions.originA()); a != static_cast<std::size_t>(-1))
            mean1[a] += m.only1[i];
        if (auto b = cellOf(i, regions.originB()); b != static_cast<std::size_t>(-1))
            mean2[b] += m.only2[i];
    }
    for (const auto& l : m.links) {
        const auto a = cellOf(l.src, regions.originA());
        const auto b = cellOf(l.dst, regions.originB());
        if (a != static_cast<std::size_t>(-1))
            mean1[a] += l.mean;
        if (b != static_cast<std::size_t>(-1))
            mean2[b] += l.mean;
        if (a != static_cast<std::size_t>(-1) && b != static_cast<std::size_t>(-1) && a == nb * nb - 1 - b)
            cov[a] += l.mean;
    }
    const double noisePerCell = static_cast<double>(d * d) * (p.stray_mean() + p.readNoise * p.readNoise);
    const double strayPerCell = static_cast<double>(d * d) * p.stray_mean();
    std::vector<double> var(nb * nb), sum(nb * nb);
    for (std::size_t a = 0; a < nb * nb; ++a) {
        const std::size_t b = nb * nb - 1 - a;
        var[a] = mean1[a] + mean2[b] - 2.0 * cov[a] + 2.0 * noisePerCell;
        sum[a] = mean1[a] + mean2[b] + 2.0 * strayPerCell;
    }
    return mean_of(var) / mean_of(sum);
}

} // namespace twinbeam
