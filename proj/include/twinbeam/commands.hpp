#pragma once

// Batch commands behind the command-line tool. Every output byte is a
// function of the configuration and the seed.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "twinbeam/config.hpp"
#include "twinbeam/error.hpp"
#include "twinbeam/estimators.hpp"
#include "twinbeam/frame_io.hpp"
#include "twinbeam/model_fit.hpp"
#include "twinbeam/pipeline.hpp"
#include "twinbeam/sim.hpp"
#include "twinbeam/theory.hpp"

namespace twinbeam {

namespace fs = std::filesystem;

struct SimOutputs {
    fs::path calibrationManifest;
    fs::path sampleManifest;
    std::optional<fs::path> mask;
};

/// Seed of the with-sample run, decorrelated from the calibration run.
inline std::uint64_t sample_seed(std::uint64_t seed) { return seed ^ 0x9E3779B97F4A7C15ull; }

inline FramePairStack simulate(const RunConfig& c, std::size_t shots, std::uint64_t seed, const SampleMask* mask)
{
    TwinBeamParams p = c.params;
    p.seed = seed;
    GenerateOptions o;
    o.sample = mask;
    o.sampleBeam = c.sampleBeam;
    o.regions = c.regions();
    if (c.generator == GeneratorKind::Thermal)
        return generate_pair_thermal(p, c.modes, c.geometry(), shots, o);
    return generate_pair_poisson(p, c.geometry(), shots, o);
}

/// Writes the calibration (without sample) and sample stacks under `c.out`.
inline SimOutputs cmd_sim(const RunConfig& c)
{
    c.validate();
    const auto mask = c.sample_mask();
    SimOutputs out;
    fs::create_directories(c.out);
    out.calibrationManifest = write_stack(simulate(c, c.calibrationShots, c.params.seed, nullptr), c.out / "calibration");
    out.sampleManifest =
        write_stack(simulate(c, c.shots, sample_seed(c.params.seed), mask ? &*mask : nullptr), c.out / "sample");
    if (mask) {
        out.mask = c.out / "mask.tbf";
        save_frame(mask->alpha(), *out.mask);
    }
    return out;
}

namespace detail {

inline std::string num(double v)
{
    if (!std::isfinite(v))
        return "nan";
    std::ostringstream s;
    s << std::setprecision(10) << v;
    return s.str();
}

inline void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot write " + path.string());
    out << text;
}

/// Stripe cells fully inside `stripe` after block filtering at scale d.
inline std::optional<Rect> filtered_stripe(const Rect& stripe, std::size_t d, FilterMode mode)
{
    if (mode == FilterMode::Sliding || d == 1)
        return stripe;
    const long dd = static_cast<long>(d);
    const long x0 = (stripe.x + dd - 1) / dd;
    const long y0 = (stripe.y + dd - 1) / dd;
    const long x1 = (stripe.x + static_cast<long>(stripe.width)) / dd;
    const long y1 = (stripe.y + static_cast<long>(stripe.height)) / dd;
    if (x1 <= x0 || y1 <= y0)
        return std::nullopt;
    return Rect{x0, y0, static_cast<std::size_t>(x1 - x0), static_cast<std::size_t>(y1 - y0)};
}

/// Model sigma_eff at cell side L (detection plane) from the configured source.
inline double theory_sigma_eff(const RunConfig& c, double L)
{
    const TwinBeamParams& p = c.params;
    theory::ModeGeometry g;
    g.L = L;
    g.r = std::sqrt(p.radius_x() * p.radius_y());
    g.delta = p.misalignment;
    g.beta = c.modes.beta;
    g.mu = p.muPerMode;
    g.eta0 = std::min(p.eta1, p.eta2);
    g.gamma = std::max(p.eta1, p.eta2) / std::max(g.eta0, 1e-300);
    if (!(L > g.r) || g.eta0 <= 0.0)
        return std::numeric_limits<double>::quiet_NaN();
    const auto budget = theory::NoiseBudget::from_fraction(p.meanPhotonsPerPixel, p.strayFraction, p.readNoise);
    ScopedWarningHandler quiet([](const std::string&) {});
    return theory::sigma_eff(theory::sigma_model(g), budget);
}

} // namespace detail

struct AnalyzeOptions {
    std::vector<std::size_t> scales;
    FilterMode mode = FilterMode::Block;
    std::string scheme = "all";
    fs::path out;
};

/// NRF, Fano and SNR tables, NRF tile map, cross-correlation and absorption
/// maps. Scales that do not divide the region are skipped with a warning.
inline void cmd_analyze(const RunConfig& c, const fs::path& calibrationManifest, const fs::path& sampleManifest,
                        const AnalyzeOptions& opt)
{
    c.validate();
    const FramePairStack calib = read_stack(calibrationManifest);
    const FramePairStack sample = read_stack(sampleManifest);
    if (calib.width() != sample.width() || calib.height() != sample.height() || calib.pitch() != sample.pitch())
        throw DataError("calibration and sample stacks have different geometry");
    if (calib.width() != c.width || calib.height() != c.height || calib.pitch() != c.pitchUm)
        throw DataError("stack geometry does not match the configuration");
    const RegionPair regions = c.regions();
    regions.validate(calib.width(), calib.height());
    fs::create_directories(opt.out);
    const double M = c.optics.magnification;
    const bool all = opt.scheme == "all";

    // NRF and Fano against cell size.
    std::vector<std::size_t> binnable;
    for (std::size_t d : opt.scales) {
        if (regions.size() % d != 0 || regions.size() / d < 2) {
            warn("scale " + std::to_string(d) + " does not divide region size " + std::to_string(regions.size()) +
                 "; skipped");
            continue;
        }
        binnable.push_back(d);
    }
    std::map<std::size_t, NrfResult> nrf;
    std::ostringstream nrfCsv;
    nrfCsv << "d,L_det_um,L_obj_um,sigma_eff,stderr,fano,fano_stderr,theory_sigma_eff\n";
    NrfCurve curve;
    const auto budget = theory::NoiseBudget::from_fraction(c.params.meanPhotonsPerPixel, c.params.strayFraction,
                                                           c.params.readNoise);
    curve.photonLevel = budget.totalN;
    curve.strayN = budget.strayN;
    curve.readNoise = budget.readNoise;
    for (std::size_t d : binnable) {
        const NrfResult r = nrf_spatial(calib, regions, d);
        const FanoResult f = fano(calib, regions.regionA(), d, 1);
        nrf[d] = r;
        const double L = r.scale;
        nrfCsv << d << "," << detail::num(L) << "," << detail::num(L / M) << "," << detail::num(r.mean) << ","
               << detail::num(r.standardError) << "," << detail::num(f.mean) << "," << detail::num(f.standardError)
               << "," << detail::num(detail::theory_sigma_eff(c, L)) << "\n";
        curve.points.push_back({L, r.mean, r.standardError > 0.0 ? r.standardError : 0.0});
    }
    detail::write_text(opt.out / "nrf_vs_L.csv", nrfCsv.str());
    if (!curve.points.empty()) {
        std::ostringstream cs;
        write_curve_csv(curve, cs);
        detail::write_text(opt.out / "curve.csv", cs.str());
    }

    // NRF map over tiles of the calibration stack.
    const std::size_t t = c.nrfTile;
    const std::size_t tiles = regions.size() / t;
    std::ostringstream report;
    if (tiles >= 1) {
        std::vector<double> map(tiles * tiles);
        for (std::size_t ty = 0; ty < tiles; ++ty)
            for (std::size_t tx = 0; tx < tiles; ++tx) {
                const PixelCoord a{regions.originA().x + static_cast<long>(tx * t),
                                   regions.originA().y + static_cast<long>(ty * t)};
                const PixelCoord b{regions.originB().x + static_cast<long>(regions.size() - (tx + 1) * t),
                                   regions.originB().y + static_cast<long>(regions.size() - (ty + 1) * t)};
                map[ty * tiles + tx] = nrf_spatial(calib, RegionPair(a, b, t), 1).mean;
            }
        const RealFrame nrfMap(tiles, tiles, calib.pitch() * static_cast<double>(t), std::move(map));
        save_frame(nrfMap, opt.out / "nrf_map.tbf");
        detail::write_text(opt.out / "nrf_map.csv", to_csv(nrfMap));
        write_pgm(nrfMap, opt.out / "nrf_map.pgm", GrayMapping{0.0, 1.5});
    }

    // Cross-correlation of the calibration stack.
    const int maxShift = std::min<int>(c.xcorrMaxShift, static_cast<int>(regions.size() / 4));
    const XcorrMap xc = xcorr_map(calib, regions, maxShift);
    {
        std::ostringstream xs;
        xs << "dy\\dx";
        for (int dx = -maxShift; dx <= maxShift; ++dx)
            xs << "," << dx;
        xs << "\n";
        for (int dy = -maxShift; dy <= maxShift; ++dy) {
            xs << dy;
            for (int dx = -maxShift; dx <= maxShift; ++dx)
                xs << "," << detail::num(xc.at(dx, dy));
            xs << "\n";
        }
        detail::write_text(opt.out / "xcorr.csv", xs.str());
    }

    // Absorption maps and stripe SNR.
    const FlatField flat = build_flat_field(calib);
    const Rect stripe = c.stripe_rect();
    const double minShift = 2.0 * std::max(c.params.radius_x(), c.params.radius_y()) / c.pitchUm;
    const auto maskOpt = c.sample_mask();
    double alphaStripe = c.glyph.alpha;
    if (maskOpt) {
        const PixelCoord o = c.sampleBeam == 1 ? regions.originA() : regions.originB();
        const RealFrame local = crop(maskOpt->alpha(), Rect{o.x, o.y, regions.size(), regions.size()});
        alphaStripe = mean_of(crop(local, stripe).data());
    }
    std::ostringstream snrCsv;
    snrCsv << "d,L_obj_um,sigma_eff,snr_dr,snr_dc,snr_ssn,dc_over_ssn,dr_over_ssn,theory_dc_over_ssn,theory_dr_over_ssn\n";
    const std::vector<Scheme> schemes = all ? std::vector<Scheme>{Scheme::DR, Scheme::DC, Scheme::SSN}
                                            : std::vector<Scheme>{opt.scheme == "dr"   ? Scheme::DR
                                                                  : opt.scheme == "dc" ? Scheme::DC
                                                                                       : Scheme::SSN};
    for (std::size_t d : opt.scales) {
        if (opt.mode == FilterMode::Block && regions.size() % d != 0)
            continue;
        const auto st = detail::filtered_stripe(stripe, d, opt.mode);
        std::map<Scheme, double> snr;
        for (Scheme s : schemes) {
            std::vector<RealFrame> maps(sample.size());
            parallel_for(sample.size(), [&](std::size_t i) {
                switch (s) {
                case Scheme::DR:
                    maps[i] = alpha_direct(sample[i], flat, regions, c.sampleBeam, d, opt.mode).alpha;
                    break;
                case Scheme::DC:
                    maps[i] = alpha_dc(sample[i], flat, regions, c.sampleBeam, c.dcShift, minShift, d, opt.mode).alpha;
                    break;
                case Scheme::SSN:
                    maps[i] = alpha_ssn(sample[i], flat, regions, c.sampleBeam, d, opt.mode).alpha;
                    break;
                }
            });
            const std::string stem = std::string("alpha_") + scheme_name(s) + "_d" + std::to_string(d);
            save_frame(maps.front(), opt.out / (stem + "_shot0.tbf"));
            write_pgm(maps.front(), opt.out / (stem + "_shot0.pgm"), GrayMapping{-0.05, 0.06});
            if (maps.size() >= 2) {
                const TemporalStats ts = temporal_stats(maps);
                save_frame(ts.mean, opt.out / (stem + "_mean.tbf"));
                write_pgm(ts.mean, opt.out / (stem + "_mean.pgm"), GrayMapping{-0.005, 0.015});
                if (st)
                    snr[s] = snr_stripe(maps, *st).snr;
            }
        }
        const double nan = std::numeric_limits<double>::quiet_NaN();
        auto get = [&](Scheme s) { return snr.count(s) ? snr[s] : nan; };
        const double sigma = nrf.count(d) ? nrf[d].mean : nan;
        double thDc = nan, thDr = nan;
        if (std::isfinite(sigma)) {
            const auto e = theory::enhancement_ratios({alphaStripe, 1.0, 1.0, sigma});
            thDc = e.ssnOverDc;
            thDr = e.ssnOverDr;
        }
        const double L = c.pitchUm * static_cast<double>(d) / M;
        snrCsv << d << "," << detail::num(L) << "," << detail::num(sigma) << "," << detail::num(get(Scheme::DR)) << ","
               << detail::num(get(Scheme::DC)) << "," << detail::num(get(Scheme::SSN)) << ","
               << detail::num(get(Scheme::DC) / get(Scheme::SSN)) << "," << detail::num(get(Scheme::DR) / get(Scheme::SSN))
               << "," << detail::num(thDc) << "," << detail::num(thDr) << "\n";
    }
    detail::write_text(opt.out / "snr_vs_L.csv", snrCsv.str());

    report << "calibration_shots " << calib.size() << "\n";
    report << "sample_shots " << sample.size() << "\n";
    report << "region_a " << regions.originA().x << " " << regions.originA().y << "\n";
    report << "region_b " << regions.originB().x << " " << regions.originB().y << "\n";
    report << "region_size " << regions.size() << "\n";
    report << "xcorr_peak_px " << xc.peak.x << " " << xc.peak.y << "\n";
    report << "xcorr_fwhm_x_um " << detail::num(xc.fwhmX) << " +- " << detail::num(xc.fwhmXError) << "\n";
    report << "xcorr_fwhm_y_um " << detail::num(xc.fwhmY) << " +- " << detail::num(xc.fwhmYError) << "\n";
    report << "xcorr_fwhm_x_obj_um " << detail::num(xc.fwhmX / M) << "\n";
    report << "xcorr_fwhm_y_obj_um " << detail::num(xc.fwhmY / M) << "\n";
    report << "flat_mean_n1 " << detail::num(flat.meanN1) << "\n";
    report << "flat_mean_n2 " << detail::num(flat.meanN2) << "\n";
    report << "stripe " << stripe.x << " " << stripe.y << " " << stripe.width << " " << stripe.height << "\n";
    report << "stripe_alpha " << detail::num(alphaStripe) << "\n";
    detail::write_text(opt.out / "report.txt", report.str());
}

/// Neighbourhood mean filter of a TBF1 frame; writes a dtype-1 TBF1 file.
inline RealFrame cmd_filter(const fs::path& input, const fs::path& output, std::size_t d, FilterMode mode)
{
    const AnyFrame any = load_frame(input);
    const RealFrame in = std::visit([](const auto& f) { return to_real(f); }, any);
    RealFrame out = qe_filter(in, d, mode);
    if (output.has_parent_path())
        fs::create_directories(output.parent_path());
    save_frame(out, output);
    return out;
}

/// Fits a curve file and writes the report to `report` (and fit.txt / fit.csv when `outDir` is set).
inline FitResult cmd_fit(const fs::path& csv, const FitSettings& settings, std::ostream& report,
                         const std::optional<fs::path>& outDir = std::nullopt)
{
    const NrfCurve curve = load_curve_csv(csv.string());
    const FitResult f = fit_nrf_curve(curve, settings);
    write_fit_report(f, curve, report);
    if (outDir) {
        fs::create_directories(*outDir);
        std::ostringstream txt, tab;
        write_fit_report(f, curve, txt);
        write_fit_csv(f, tab);
        detail::write_text(*outDir / "fit.txt", txt.str());
        detail::write_text(*outDir / "fit.csv", tab.str());
    }
    return f;
}

/// Names accepted by `theory eval`, with their parameters.
inline const std::map<std::string, std::string>& theory_formulas()
{
    static const std::map<std::string, std::string> table{
        {"var_after_absorption", "alpha N F"},
        {"delta_alpha_dr", "alpha N F"},
        {"fano_with_losses", "F0 eta"},
        {"diff_variance", "alpha N F sigma"},
        {"delta_alpha_df", "alpha N F sigma"},
        {"enhancement_ratios", "alpha sigma"},
        {"mode_counts", "L r delta"},
        {"eta_coll", "X D beta mu  (or L r delta beta mu)"},
        {"sigma_model", "X D beta mu gamma eta0  (or L r delta ...)"},
        {"sigma_eff", "sigma N_tot N_st read_noise"},
        {"mode_count_consistency", "X D beta mu  (or L r delta beta mu)"},
        {"coherence_radius", "pump_waist_um wavelength_nm focal_um"},
    };
    return table;
}

/// Evaluates one closed-form expression; returns "name = value" lines.
inline std::string cmd_theory_eval(const std::string& formula, const std::map<std::string, double>& args)
{
    if (!theory_formulas().count(formula))
        throw ConfigError("unknown formula '" + formula + "'");
    std::map<std::string, double> a = args;
    std::map<std::string, bool> used;
    auto get = [&](const std::string& k, double def) {
        used[k] = true;
        const auto it = a.find(k);
        return it == a.end() ? def : it->second;
    };
    auto need = [&](const std::string& k) {
        used[k] = true;
        const auto it = a.find(k);
        if (it == a.end())
            throw ConfigError("formula " + formula + " needs " + k + "=VALUE");
        return it->second;
    };
    auto geometry = [&] {
        theory::ModeGeometry g;
        if (a.count("X") || a.count("D")) {
            g.r = 1.0;
            g.L = 2.0 * need("X");
            g.delta = 2.0 * get("D", 0.0);
        } else {
            g.L = need("L");
            g.r = need("r");
            g.delta = get("delta", 0.0);
        }
        g.beta = get("beta", 0.5);
        g.mu = get("mu", 0.0);
        g.gamma = get("gamma", 1.0);
        g.eta0 = get("eta0", 1.0);
        return g;
    };
    auto scheme = [&] {
        return theory::SchemeNoiseInputs{get("alpha", 0.0), get("N", 1.0), get("F", 1.0), get("sigma", 1.0)};
    };
    std::ostringstream out;
    out << std::setprecision(17);
    if (formula == "var_after_absorption")
        out << formula << " = " << theory::var_after_absorption(scheme()) << "\n";
    else if (formula == "delta_alpha_dr")
        out << formula << " = " << theory::delta_alpha_dr(scheme()) << "\n";
    else if (formula == "fano_with_losses")
        out << formula << " = " << theory::fano_with_losses(need("F0"), need("eta")) << "\n";
    else if (formula == "diff_variance")
        out << formula << " = " << theory::diff_variance(scheme()) << "\n";
    else if (formula == "delta_alpha_df")
        out << formula << " = " << theory::delta_alpha_df(scheme()) << "\n";
    else if (formula == "enhancement_ratios") {
        const auto e = theory::enhancement_ratios(scheme());
        out << "ssn_over_dc = " << e.ssnOverDc << "\nssn_over_dr = " << e.ssnOverDr << "\n";
    } else if (formula == "mode_counts") {
        const auto m = theory::mode_counts(geometry());
        out << "M_u = " << m.uncorrelated << "\nM_c = " << m.correlated << "\nM_b = " << m.border << "\n";
    } else if (formula == "eta_coll")
        out << formula << " = " << theory::eta_coll(geometry()) << "\n";
    else if (formula == "sigma_model")
        out << formula << " = " << theory::sigma_model(geometry()) << "\n";
    else if (formula == "sigma_eff")
        out << formula << " = "
            << theory::sigma_eff(need("sigma"), {need("N_tot"), get("N_st", 0.0), get("read_noise", 0.0)}) << "\n";
    else if (formula == "mode_count_consistency") {
        const auto g = geometry();
        g.validate();
        out << formula << " = " << (theory::mode_count_consistency(g) ? "true" : "false") << "\n";
    } else if (formula == "coherence_radius") {
        OpticsConstants o;
        o.pumpWaistUm = get("pump_waist_um", o.pumpWaistUm);
        o.degenerateWavelengthNm = get("wavelength_nm", o.degenerateWavelengthNm);
        o.focalLengthUm = get("focal_um", o.focalLengthUm);
        out << formula << "_um = " << theory::coherence_radius(o) << "\n";
    }
    for (const auto& [k, v] : a)
        if (!used.count(k))
            throw ConfigError("formula " + formula + " does not take '" + k + "'");
    return out.str();
}

/// Formats the analysis tables of `dir` as aligned text.
inline std::string cmd_report(const fs::path& dir)
{
    std::ostringstream out;
    for (const char* name : {"nrf_vs_L.csv", "snr_vs_L.csv"}) {
        std::ifstream in(dir / name);
        if (!in)
            throw DataError("missing " + (dir / name).string());
        out << "== " << name << "\n";
        std::string line;
        while (std::getline(in, line)) {
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ','))
                out << std::setw(20) << cell << " ";
            out << "\n";
        }
        out << "\n";
    }
    if (std::ifstream rep(dir / "report.txt"); rep) {
        out << "== report.txt\n" << rep.rdbuf();
    }
    return out.str();
}

} // namespace twinbeam
