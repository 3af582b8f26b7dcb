#pragma once

// Statistical estimators on frame stacks: spatial NRF, Fano factor, the
// mirrored-region cross-correlation map with a Gaussian peak fit, and
// per-pixel temporal statistics.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "twinbeam/diag.hpp"
#include "twinbeam/error.hpp"
#include "twinbeam/frame.hpp"
#include "twinbeam/lm.hpp"
#include "twinbeam/numeric.hpp"
#include "twinbeam/parallel.hpp"

namespace twinbeam {

struct NrfResult {
    std::vector<double> perShot;
    double mean = 0.0;
    double standardError = 0.0;
    /// Binned cell side in micrometres (detection plane).
    double scale = 0.0;
};

namespace detail {

inline void check_binning(std::size_t size, std::size_t d)
{
    if (d == 0)
        throw ConfigError("binning factor must be at least 1");
    if (size % d != 0)
        throw ConfigError("binning factor " + std::to_string(d) + " does not divide region size " +
                          std::to_string(size));
    if (size / d < 2)
        throw ConfigError("binning leaves fewer than two cells per axis");
}

/// sigma = V[A(i) - B(n-1-i)] / E[A(i) + B(n-1-i)] over binned cells.
inline double pair_nrf(const RealFrame& a, const RealFrame& b)
{
    const std::size_t n = a.size();
    std::vector<double> diff(n), sum(n);
    for (std::size_t i = 0; i < n; ++i) {
        diff[i] = a.data()[i] - b.data()[n - 1 - i];
        sum[i] = a.data()[i] + b.data()[n - 1 - i];
    }
    const double m = mean_of(sum);
    if (!(m > 0.0))
        throw NumericalError("NRF undefined: regions carry no photons");
    return variance_of(diff) / m;
}

} // namespace detail

/// Spatial noise reduction factor per shot of d x d binned mirrored regions.
template <FrameValue T>
NrfResult nrf_spatial(const BasicFramePairStack<T>& stack, const RegionPair& regions, std::size_t d)
{
    regions.validate(stack.width(), stack.height());
    detail::check_binning(regions.size(), d);
    NrfResult out;
    out.perShot.resize(stack.size());
    parallel_for(stack.size(), [&](std::size_t s) {
        const RealFrame a = bin_sum(crop(stack[s].beam1, regions.regionA().rect()), d);
        const RealFrame b = bin_sum(crop(stack[s].beam2, regions.regionB().rect()), d);
        out.perShot[s] = detail::pair_nrf(a, b);
    });
    const auto me = mean_and_error(out.perShot);
    out.mean = me.mean;
    out.standardError = me.standardError;
    out.scale = stack.pitch() * static_cast<double>(d);
    return out;
}

struct FanoResult {
    std::vector<double> perShot;
    double mean = 0.0;
    double standardError = 0.0;
};

/// Fano factor V[N]/E[N] per shot over the d x d binned region of one beam.
template <FrameValue T>
FanoResult fano(const BasicFramePairStack<T>& stack, const Region& region, std::size_t d, int beam = 1)
{
    if (!region.rect().inside(stack.width(), stack.height()))
        throw DataError("region does not fit inside the frame");
    detail::check_binning(region.size, d);
    FanoResult out;
    out.perShot.resize(stack.size());
    parallel_for(stack.size(), [&](std::size_t s) {
        const RealFrame b = bin_sum(crop(stack[s].beam(beam), region.rect()), d);
        const double m = mean_of(b.data());
        if (!(m > 0.0))
            throw NumericalError("Fano factor undefined: region carries no photons");
        out.perShot[s] = variance_of(b.data()) / m;
    });
    const auto me = mean_and_error(out.perShot);
    out.mean = me.mean;
    out.standardError = me.standardError;
    return out;
}

/// 2D Gaussian plus offset fitted to a correlation peak; centres and widths in pixels.
struct GaussianPeak {
    double amplitude = 0.0;
    double centerX = 0.0;
    double centerY = 0.0;
    double sigmaX = 0.0;
    double sigmaY = 0.0;
    double offset = 0.0;
    double sigmaXError = 0.0;
    double sigmaYError = 0.0;
    bool converged = false;
};

struct XcorrMap {
    int maxShift = 0;
    double pitch = 1.0;
    /// Row-major over (dy, dx) in [-maxShift, maxShift].
    std::vector<double> coefficients;
    PixelCoord peak;
    GaussianPeak fit;
    /// Fitted FWHM in micrometres and their standard errors; NaN when the fit failed.
    double fwhmX = 0.0;
    double fwhmY = 0.0;
    double fwhmXError = 0.0;
    double fwhmYError = 0.0;

    std::size_t side() const noexcept { return static_cast<std::size_t>(2 * maxShift + 1); }

    double at(int dx, int dy) const
    {
        if (std::abs(dx) > maxShift || std::abs(dy) > maxShift)
            throw DataError("shift outside correlation map");
        return coefficients[static_cast<std::size_t>(dy + maxShift) * side() + static_cast<std::size_t>(dx + maxShift)];
    }

    RealFrame as_frame() const { return RealFrame(side(), side(), pitch, coefficients); }
};

namespace detail {

constexpr double kFwhmPerSigma = 2.3548200450309493;

inline GaussianPeak fit_gaussian_peak(const std::vector<double>& grid, int maxShift, PixelCoord peak)
{
    const int side = 2 * maxShift + 1;
    std::vector<double> xs, ys, vs;
    for (int dy = -3; dy <= 3; ++dy)
        for (int dx = -3; dx <= 3; ++dx) {
            const long x = peak.x + dx;
            const long y = peak.y + dy;
            if (std::abs(x) > maxShift || std::abs(y) > maxShift)
                continue;
            xs.push_back(static_cast<double>(x));
            ys.push_back(static_cast<double>(y));
            vs.push_back(grid[static_cast<std::size_t>((y + maxShift) * side + x + maxShift)]);
        }
    const auto n = static_cast<Eigen::Index>(vs.size());
    GaussianPeak out;
    if (n <= 6) {
        warn("too few points around the correlation peak for a Gaussian fit");
        return out;
    }
    const double lo = *std::min_element(vs.begin(), vs.end());
    const double hi = *std::max_element(vs.begin(), vs.end());
    Eigen::VectorXd x0(6);
    // amplitude, centre x, centre y, log sigma x, log sigma y, offset
    x0 << hi - lo, static_cast<double>(peak.x), static_cast<double>(peak.y), 0.0, 0.0, lo;
    auto model = [&](const Eigen::VectorXd& p, Eigen::Index i, double* grad) {
        const double sx = std::exp(p(3));
        const double sy = std::exp(p(4));
        const double ux = (xs[static_cast<std::size_t>(i)] - p(1)) / sx;
        const double uy = (ys[static_cast<std::size_t>(i)] - p(2)) / sy;
        const double e = std::exp(-0.5 * (ux * ux + uy * uy));
        if (grad) {
            grad[0] = e;
            grad[1] = p(0) * e * ux / sx;
            grad[2] = p(0) * e * uy / sy;
            grad[3] = p(0) * e * ux * ux;
            grad[4] = p(0) * e * uy * uy;
            grad[5] = 1.0;
        }
        return p(0) * e + p(5);
    };
    auto residuals = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(n);
        for (Eigen::Index i = 0; i < n; ++i)
            r(i) = vs[static_cast<std::size_t>(i)] - model(p, i, nullptr);
        return r;
    };
    auto jacobian = [&](const Eigen::VectorXd& p) {
        Eigen::MatrixXd J(n, 6);
        double g[6];
        for (Eigen::Index i = 0; i < n; ++i) {
            model(p, i, g);
            for (int k = 0; k < 6; ++k)
                J(i, k) = -g[k];
        }
        return J;
    };
    try {
        const LmResult fit = levenberg_marquardt(residuals, jacobian, x0);
        const double dof = static_cast<double>(n - 6);
        const Eigen::MatrixXd cov = fit.covariance * (fit.chi2 / dof);
        out.amplitude = fit.params(0);
        out.centerX = fit.params(1);
        out.centerY = fit.params(2);
        out.sigmaX = std::exp(fit.params(3));
        out.sigmaY = std::exp(fit.params(4));
        out.offset = fit.params(5);
        out.sigmaXError = out.sigmaX * std::sqrt(std::max(0.0, cov(3, 3)));
        out.sigmaYError = out.sigmaY * std::sqrt(std::max(0.0, cov(4, 4)));
        out.converged = true;
    } catch (const NumericalError& e) {
        warn(std::string("Gaussian peak fit failed: ") + e.what());
    }
    return out;
}

} // namespace detail

/// Pearson correlation between beam-1 pixels of region A and the beam-2
/// pixels at their mirrored position displaced by (dx, dy), pooled over
/// shots after removing each shot's spatial mean. The peak sits at the
/// displacement of the beam-2 pattern (+delta for a shift along +x).
template <FrameValue T>
XcorrMap xcorr_map(const BasicFramePairStack<T>& stack, const RegionPair& regions, int maxShift)
{
    regions.validate(stack.width(), stack.height());
    if (maxShift < 0)
        throw ConfigError("maximum shift must be non-negative");
    const long size = static_cast<long>(regions.size());
    if (2 * (size - maxShift) * (size - maxShift) < size * size)
        throw ConfigError("maximum shift leaves less than half of the region overlapping");

    // Mean-removed fluctuations, region-local, one vector per shot.
    const std::size_t shots = stack.size();
    const std::size_t npx = regions.size() * regions.size();
    std::vector<std::vector<double>> fa(shots), fb(shots);
    parallel_for(shots, [&](std::size_t s) {
        for (int beam = 1; beam <= 2; ++beam) {
            const Region reg = beam == 1 ? regions.regionA() : regions.regionB();
            const RealFrame c = to_real(crop(stack[s].beam(beam), reg.rect()));
            const double m = mean_of(c.data());
            std::vector<double> v(npx);
            for (std::size_t i = 0; i < npx; ++i)
                v[i] = c.data()[i] - m;
            (beam == 1 ? fa : fb)[s] = std::move(v);
        }
    });

    XcorrMap out;
    out.maxShift = maxShift;
    out.pitch = stack.pitch();
    const std::size_t side = out.side();
    out.coefficients.assign(side * side, 0.0);
    parallel_for(side * side, [&](std::size_t k) {
        const long dx = static_cast<long>(k % side) - maxShift;
        const long dy = static_cast<long>(k / side) - maxShift;
        // A pixel (x, y) pairs with B-local (size-1-x+dx, size-1-y+dy).
        const long x0 = std::max(0L, dx), x1 = std::min(size, size + dx);
        const long y0 = std::max(0L, dy), y1 = std::min(size, size + dy);
        std::vector<double> sa, sb, saa, sbb, sab;
        sa.reserve(shots);
        for (std::size_t s = 0; s < shots; ++s) {
            double a1 = 0, b1 = 0, aa = 0, bb = 0, ab = 0;
            for (long y = y0; y < y1; ++y)
                for (long x = x0; x < x1; ++x) {
                    const double a = fa[s][static_cast<std::size_t>(y * size + x)];
                    const double b = fb[s][static_cast<std::size_t>((size - 1 - y + dy) * size + (size - 1 - x + dx))];
                    a1 += a;
                    b1 += b;
                    aa += a * a;
                    bb += b * b;
                    ab += a * b;
                }
            sa.push_back(a1);
            sb.push_back(b1);
            saa.push_back(aa);
            sbb.push_back(bb);
            sab.push_back(ab);
        }
        const double n = static_cast<double>((x1 - x0) * (y1 - y0)) * static_cast<double>(shots);
        const double ma = pairwise_sum(sa) / n;
        const double mb = pairwise_sum(sb) / n;
        const double va = pairwise_sum(saa) / n - ma * ma;
        const double vb = pairwise_sum(sbb) / n - mb * mb;
        const double cab = pairwise_sum(sab) / n - ma * mb;
        if (!(va > 0.0) || !(vb > 0.0))
            out.coefficients[k] = std::numeric_limits<double>::quiet_NaN();
        else
            out.coefficients[k] = std::clamp(cab / std::sqrt(va * vb), -1.0, 1.0);
    });
    for (double v : out.coefficients)
        if (std::isnan(v))
            throw NumericalError("correlation undefined: a region has zero variance");

    const auto it = std::max_element(out.coefficients.begin(), out.coefficients.end());
    const auto idx = static_cast<std::size_t>(it - out.coefficients.begin());
    out.peak = {static_cast<long>(idx % side) - maxShift, static_cast<long>(idx / side) - maxShift};
    out.fit = detail::fit_gaussian_peak(out.coefficients, maxShift, out.peak);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (out.fit.converged) {
        out.fwhmX = detail::kFwhmPerSigma * out.fit.sigmaX * out.pitch;
        out.fwhmY = detail::kFwhmPerSigma * out.fit.sigmaY * out.pitch;
        out.fwhmXError = detail::kFwhmPerSigma * out.fit.sigmaXError * out.pitch;
        out.fwhmYError = detail::kFwhmPerSigma * out.fit.sigmaYError * out.pitch;
    } else {
        out.fwhmX = out.fwhmY = out.fwhmXError = out.fwhmYError = nan;
    }
    return out;
}

struct TemporalStats {
    RealFrame mean;
    RealFrame variance;
};

/// Unbiased per-pixel mean and variance across a sequence of maps.
inline TemporalStats temporal_stats(std::span<const RealFrame> maps)
{
    if (maps.size() < 2)
        throw DataError("temporal statistics need at least two maps");
    const RealFrame& ref = maps.front();
    for (const auto& m : maps)
        if (!m.same_geometry(ref))
            throw DataError("maps must share one geometry");
    const std::size_t n = ref.size();
    std::vector<double> mean(n), var(n);
    parallel_for(n, [&](std::size_t i) {
        std::vector<double> v(maps.size());
        for (std::size_t s = 0; s < maps.size(); ++s)
            v[s] = maps[s].data()[i];
        mean[i] = mean_of(v);
        var[i] = variance_of(v);
    });
    return {RealFrame(ref.width(), ref.height(), ref.pitch(), std::move(mean)),
            RealFrame(ref.width(), ref.height(), ref.pitch(), std::move(var))};
}

inline TemporalStats temporal_stats(const std::vector<RealFrame>& maps)
{
    return temporal_stats(std::span<const RealFrame>(maps));
}

/// Mean and unbiased variance across maps at one pixel.
inline std::pair<double, double> temporal_stats_at(std::span<const RealFrame> maps, std::size_t x, std::size_t y)
{
    if (maps.size() < 2)
        throw DataError("temporal statistics need at least two maps");
    std::vector<double> v;
    v.reserve(maps.size());
    for (const auto& m : maps)
        v.push_back(m.at(x, y));
    return {mean_of(v), variance_of(v)};
}

} // namespace twinbeam
