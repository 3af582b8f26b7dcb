#pragma once

// Closed-form noise model of twin-beam absorption imaging: single-beam and
// differential absorption uncertainties, the NRF of a finite pixel pair from
// its mode budget, and the correction for stray light and read noise.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "twinbeam/diag.hpp"
#include "twinbeam/error.hpp"
#include "twinbeam/frame.hpp"

namespace twinbeam::theory {

/// Inputs shared by the imaging-scheme uncertainty formulas.
struct SchemeNoiseInputs {
    double alpha = 0.0;   ///< absorption coefficient
    double meanN = 1.0;   ///< mean photons per pixel without sample
    double fano = 1.0;    ///< Fano factor of the probe without sample
    double nrf = 1.0;     ///< noise reduction factor of the pixel pair

    void validate() const
    {
        if (!(alpha >= 0.0 && alpha <= 1.0))
            throw ConfigError("alpha must lie in [0, 1]");
        if (!(meanN > 0.0))
            throw ConfigError("mean photon number must be positive");
        if (!(fano >= 0.0))
            throw ConfigError("Fano factor must be non-negative");
        if (!(nrf >= 0.0))
            throw ConfigError("noise reduction factor must be non-negative");
    }
};

/// Photon-number variance of a beam of Fano factor F after a beam splitter of
/// transmittance 1 - alpha: [(1-a)^2 (F-1) + 1 - a] <N>.
inline double var_after_absorption(const SchemeNoiseInputs& in)
{
    in.validate();
    const double t = 1.0 - in.alpha;
    return (t * t * (in.fano - 1.0) + t) * in.meanN;
}

/// Absorption uncertainty of direct (single-beam) imaging.
inline double delta_alpha_dr(const SchemeNoiseInputs& in)
{
    return std::sqrt(var_after_absorption(in)) / in.meanN;
}

/// Fano factor after losses: F = eta F0 + 1 - eta.
inline double fano_with_losses(double fano0, double eta)
{
    if (!(eta >= 0.0 && eta <= 1.0))
        throw ConfigError("efficiency must lie in [0, 1]");
    if (!(fano0 >= 0.0))
        throw ConfigError("Fano factor must be non-negative");
    return eta * fano0 + 1.0 - eta;
}

/// Variance of N1 - N2,alpha when beam 2 carries the sample:
/// [a^2 (F-1) + a + 2 sigma (1-a)] <N>.
inline double diff_variance(const SchemeNoiseInputs& in)
{
    in.validate();
    const double a = in.alpha;
    return (a * a * (in.fano - 1.0) + a + 2.0 * in.nrf * (1.0 - a)) * in.meanN;
}

/// Absorption uncertainty of differential imaging (classical with nrf = 1,
/// sub-shot-noise with nrf < 1).
inline double delta_alpha_df(const SchemeNoiseInputs& in)
{
    return std::sqrt(diff_variance(in)) / in.meanN;
}

/// Uncertainty ratios of sub-shot-noise imaging against the classical
/// differential and the direct schemes (equivalently SNR_dc/SNR_ssn and
/// SNR_dr/SNR_ssn). The small-alpha form drops the a^2(F-1) term.
struct EnhancementRatios {
    double ssnOverDc = 1.0;
    double ssnOverDr = 1.0;
};

inline EnhancementRatios enhancement_ratios(const SchemeNoiseInputs& in)
{
    in.validate();
    const double a = in.alpha;
    if (a >= 1.0)
        throw ConfigError("enhancement ratios are undefined for alpha = 1");
    const double ssn = a + 2.0 * in.nrf * (1.0 - a);
    return {std::sqrt(ssn / (2.0 - a)), std::sqrt(ssn / (1.0 - a))};
}

/// Geometry of a pixel pair collecting twin-beam modes. Lengths share one
/// plane (any plane: only the ratios X = L/2r and D = delta/2r matter).
struct ModeGeometry {
    double L = 1.0;        ///< pixel (or binned cell) side
    double r = 1.0;        ///< coherence radius
    double delta = 0.0;    ///< misalignment
    double beta = 0.5;     ///< average collection of border modes
    double mu = 0.0;       ///< mean photons per spatio-temporal mode
    double gamma = 1.0;    ///< channel balance factor, eta1 = gamma eta2
    double eta0 = 1.0;     ///< transmission-detection efficiency

    double X() const noexcept { return L / (2.0 * r); }
    double D() const noexcept { return delta / (2.0 * r); }

    void validate() const
    {
        if (!(r > 0.0))
            throw ConfigError("coherence radius must be positive");
        if (!(L > r))
            throw ConfigError("mode model requires L > r");
        if (!(delta >= 0.0))
            throw ConfigError("misalignment must be non-negative");
        if (!(beta >= 0.0 && beta <= 1.0))
            throw ConfigError("beta must lie in [0, 1]");
        if (!(mu >= 0.0))
            throw ConfigError("mu must be non-negative");
        if (!(gamma >= 1.0))
            throw ConfigError("gamma must be at least 1");
        if (!(eta0 >= 0.0 && eta0 <= 1.0))
            throw ConfigError("eta0 must lie in [0, 1]");
        if (!(delta < L / 2.0)) {
            std::ostringstream msg;
            msg << "misalignment " << delta << " is not small against L = " << L << "; mode model is approximate";
            warn(msg.str());
        }
    }
};

/// Spatial mode budget of one detector: uncorrelated (misaligned), correlated
/// and border modes.
struct ModeCounts {
    double uncorrelated = 0.0;
    double correlated = 0.0;
    double border = 0.0;
    bool clamped = false; ///< correlated count was negative and clamped to zero
};

inline ModeCounts mode_counts(const ModeGeometry& g)
{
    g.validate();
    const double pr2 = std::numbers::pi * g.r * g.r;
    ModeCounts m;
    m.uncorrelated = 2.0 * g.L * g.delta / pr2;
    m.correlated = ((g.L - 2.0 * g.r) * (g.L - 2.0 * g.r) - 2.0 * g.L * g.delta) / pr2;
    m.border = 2.0 * g.L / g.r;
    if (m.correlated < 0.0) {
        warn("correlated mode count negative (" + std::to_string(m.correlated) + "); clamped to 0");
        m.correlated = 0.0;
        m.clamped = true;
    }
    return m;
}

/// Collection efficiency as a rational function of X and D, without range
/// checks or clamping. Fits evaluate this directly.
inline double eta_coll_closed_form(double X, double D, double beta, double mu)
{
    const double pi = std::numbers::pi;
    const double num = X * (pi * beta * beta - 2.0 * D * (mu + 1.0) - 2.0) + X * X + 1.0;
    const double den = X * X + (pi * beta - 2.0) * X + 1.0;
    return num / den;
}

/// Partial derivatives of eta_coll_closed_form with respect to X and D.
struct EtaCollGradient {
    double dX = 0.0;
    double dD = 0.0;
};

inline EtaCollGradient eta_coll_gradient(double X, double D, double beta, double mu)
{
    const double pi = std::numbers::pi;
    const double a = pi * beta * beta - 2.0 * D * (mu + 1.0) - 2.0;
    const double b = pi * beta - 2.0;
    const double num = X * a + X * X + 1.0;
    const double den = X * X + b * X + 1.0;
    const double numX = a + 2.0 * X;
    const double denX = 2.0 * X + b;
    return {(numX * den - num * denX) / (den * den), -2.0 * X * (mu + 1.0) / den};
}

/// Collection efficiency of correlated photons, clamped to [0, 1] with a warning.
inline double eta_coll(const ModeGeometry& g)
{
    g.validate();
    const double v = eta_coll_closed_form(g.X(), g.D(), g.beta, g.mu);
    if (v < 0.0 || v > 1.0) {
        warn("collection efficiency " + std::to_string(v) + " outside [0, 1]; clamped");
        return std::clamp(v, 0.0, 1.0);
    }
    return v;
}

/// The same efficiency computed from the mode budget,
/// (beta^2 Mb + Mc - mu Mu) / (beta Mb + Mc + Mu), without clamping.
inline double eta_coll_from_modes(const ModeGeometry& g)
{
    g.validate();
    const double pr2 = std::numbers::pi * g.r * g.r;
    const double mu_ = 2.0 * g.L * g.delta / pr2;
    const double mc = ((g.L - 2.0 * g.r) * (g.L - 2.0 * g.r) - 2.0 * g.L * g.delta) / pr2;
    const double mb = 2.0 * g.L / g.r;
    return (g.beta * g.beta * mb + mc - g.mu * mu_) / (g.beta * mb + mc + mu_);
}

/// True when the mode-budget and closed-form efficiencies agree within `tolerance`.
inline bool mode_count_consistency(const ModeGeometry& g, double tolerance = 1e-12)
{
    const double closed = eta_coll_closed_form(g.X(), g.D(), g.beta, g.mu);
    return std::abs(eta_coll_from_modes(g) - closed) < tolerance;
}

/// Noise reduction factor of the pixel pair: (gamma + 1)/2 - eta0 eta_coll.
inline double sigma_model(const ModeGeometry& g)
{
    return (g.gamma + 1.0) / 2.0 - g.eta0 * eta_coll(g);
}

/// Photon budget of one pixel: total detected photons, the stray-light part
/// and the read noise in electrons RMS.
struct NoiseBudget {
    double totalN = 1.0;
    double strayN = 0.0;
    double readNoise = 0.0;

    void validate() const
    {
        if (!(totalN > 0.0))
            throw ConfigError("total photon number must be positive");
        if (!(strayN >= 0.0 && strayN <= totalN))
            throw ConfigError("stray photons must lie in [0, total]");
        if (!(readNoise >= 0.0))
            throw ConfigError("read noise must be non-negative");
    }

    double fTwb() const noexcept { return (totalN - strayN) / totalN; }
    double fNoise() const noexcept { return (readNoise * readNoise + strayN) / totalN; }

    /// Budget for a pixel carrying `twinBeamN` twin-beam photons and a stray
    /// fraction N_st / N_tot.
    static NoiseBudget from_fraction(double twinBeamN, double strayFraction, double readNoise)
    {
        if (!(strayFraction >= 0.0 && strayFraction < 1.0))
            throw ConfigError("stray fraction must lie in [0, 1)");
        const double total = twinBeamN / (1.0 - strayFraction);
        return {total, total * strayFraction, readNoise};
    }
};

/// Measured NRF inflated by stray light and read noise: sigma f_TWB + f_noise.
inline double sigma_eff(double sigma, const NoiseBudget& b)
{
    b.validate();
    return sigma * b.fTwb() + b.fNoise();
}

/// Coherence radius in the far-field (object) plane from 2r = lambda f / (pi w_p).
inline double coherence_radius(const OpticsConstants& optics)
{
    if (!(optics.pumpWaistUm > 0.0))
        throw ConfigError("pump waist must be positive");
    if (!(optics.degenerateWavelengthNm > 0.0 && optics.focalLengthUm > 0.0))
        throw ConfigError("wavelength and focal length must be positive");
    const double lambdaUm = optics.degenerateWavelengthNm * 1e-3;
    return lambdaUm * optics.focalLengthUm / (std::numbers::pi * optics.pumpWaistUm) / 2.0;
}

} // namespace twinbeam::theory
