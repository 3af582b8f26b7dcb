#pragma once

// Weighted least-squares fit of a measured sigma_eff(L) curve to the mode
// model, with eta0, r and delta free.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "twinbeam/error.hpp"
#include "twinbeam/lm.hpp"
#include "twinbeam/theory.hpp"

namespace twinbeam {

struct CurvePoint {
    double L = 0.0;
    double sigmaEff = 0.0;
    /// 0 when unknown.
    double standardError = 0.0;
};

/// Measured sigma_eff against cell size L (micrometres, one plane for the
/// whole curve) with the photon budget it was taken at.
struct NrfCurve {
    std::vector<CurvePoint> points;
    double photonLevel = 1.0; ///< N_tot per pixel
    double strayN = 0.0;
    double readNoise = 0.0;

    theory::NoiseBudget budget() const { return {photonLevel, strayN, readNoise}; }

    bool has_errors() const
    {
        return !points.empty() &&
               std::all_of(points.begin(), points.end(), [](const CurvePoint& p) { return p.standardError > 0.0; });
    }

    /// Sorts by L and rejects duplicates and mixed presence of errors.
    void normalize()
    {
        std::sort(points.begin(), points.end(), [](const CurvePoint& a, const CurvePoint& b) { return a.L < b.L; });
        for (std::size_t i = 1; i < points.size(); ++i)
            if (points[i].L == points[i - 1].L)
                throw DataError("duplicate L = " + std::to_string(points[i].L) + " in curve");
        const auto withErr = std::count_if(points.begin(), points.end(),
                                           [](const CurvePoint& p) { return p.standardError > 0.0; });
        if (withErr != 0 && static_cast<std::size_t>(withErr) != points.size())
            throw DataError("standard errors must be given for every point or for none");
        for (const auto& p : points)
            if (!(p.L > 0.0) || !std::isfinite(p.sigmaEff) || p.standardError < 0.0)
                throw DataError("curve points need L > 0, finite sigma_eff and non-negative errors");
    }
};

namespace detail {

inline double parse_double(const std::string& text, std::size_t line, const char* what)
{
    std::string t = text;
    t.erase(0, t.find_first_not_of(" \t\r"));
    t.erase(t.find_last_not_of(" \t\r") + 1);
    double v = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
        throw FormatError("line " + std::to_string(line) + ": cannot parse " + what + " '" + t + "'");
    return v;
}

} // namespace detail

/// CSV `L_um,sigma_eff,stderr` with an optional header and `# key = value`
/// budget lines (N_tot, N_st, read_noise). An empty stderr field means unknown.
inline NrfCurve read_curve_csv(std::istream& in)
{
    NrfCurve curve;
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos)
            continue;
        if (line[line.find_first_not_of(" \t")] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                continue;
            std::string key = line.substr(line.find('#') + 1, eq - line.find('#') - 1);
            key.erase(0, key.find_first_not_of(" \t"));
            key.erase(key.find_last_not_of(" \t") + 1);
            const double v = detail::parse_double(line.substr(eq + 1), no, key.c_str());
            if (key == "N_tot")
                curve.photonLevel = v;
            else if (key == "N_st")
                curve.strayN = v;
            else if (key == "read_noise")
                curve.readNoise = v;
            continue;
        }
        if (line.rfind("L_um", 0) == 0)
            continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ','))
            fields.push_back(f);
        if (!line.empty() && line.back() == ',')
            fields.emplace_back();
        if (fields.size() < 2 || fields.size() > 3)
            throw FormatError("line " + std::to_string(no) + ": expected 2 or 3 comma-separated fields");
        CurvePoint p;
        p.L = detail::parse_double(fields[0], no, "L_um");
        p.sigmaEff = detail::parse_double(fields[1], no, "sigma_eff");
        if (fields.size() == 3 && fields[2].find_first_not_of(" \t") != std::string::npos)
            p.standardError = detail::parse_double(fields[2], no, "stderr");
        curve.points.push_back(p);
    }
    curve.normalize();
    curve.budget().validate();
    return curve;
}

inline NrfCurve load_curve_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open curve file " + path);
    return read_curve_csv(in);
}

inline void write_curve_csv(const NrfCurve& curve, std::ostream& out)
{
    out << std::setprecision(17);
    out << "# N_tot = " << curve.photonLevel << "\n";
    out << "# N_st = " << curve.strayN << "\n";
    out << "# read_noise = " << curve.readNoise << "\n";
    out << "L_um,sigma_eff,stderr\n";
    for (const auto& p : curve.points) {
        out << p.L << "," << p.sigmaEff << ",";
        if (p.standardError > 0.0)
            out << p.standardError;
        out << "\n";
    }
}

/// Parameters held fixed during the fit, and starting values of the free ones.
struct FitSettings {
    double beta = 0.5;
    double mu = 0.0;
    double gamma = 1.0;
    double eta0Guess = 0.8;
    /// Non-positive guesses are replaced by L_min / 3 and 0.1 r.
    double rGuess = 0.0;
    double deltaGuess = 0.0;
    LmOptions lm;
};

struct Estimate {
    double value = 0.0;
    double standardError = 0.0;
};

struct FitResult {
    Estimate eta0;
    Estimate r;
    Estimate delta;
    /// delta / 2r
    double D = 0.0;
    double chi2 = 0.0;
    bool converged = false;
    int iterations = 0;
    double condition = 0.0;
    std::vector<double> residuals;
};

/// sigma_eff(L) of the mode model with the unclamped collection efficiency.
inline double model_sigma_eff(double eta0, double r, double delta, double L, const FitSettings& s,
                              const theory::NoiseBudget& b)
{
    const double X = L / (2.0 * r);
    const double D = delta / (2.0 * r);
    const double sigma = (s.gamma + 1.0) / 2.0 - eta0 * theory::eta_coll_closed_form(X, D, s.beta, s.mu);
    return sigma * b.fTwb() + b.fNoise();
}

struct ModelGradient {
    double dEta0 = 0.0;
    double dR = 0.0;
    double dDelta = 0.0;
};

inline ModelGradient model_gradient(double eta0, double r, double delta, double L, const FitSettings& s,
                                    const theory::NoiseBudget& b)
{
    const double X = L / (2.0 * r);
    const double D = delta / (2.0 * r);
    const auto g = theory::eta_coll_gradient(X, D, s.beta, s.mu);
    const double f = b.fTwb();
    ModelGradient out;
    out.dEta0 = -f * theory::eta_coll_closed_form(X, D, s.beta, s.mu);
    out.dR = -f * eta0 * (g.dX * (-X / r) + g.dD * (-D / r));
    out.dDelta = -f * eta0 * g.dD / (2.0 * r);
    return out;
}

inline NrfCurve predict_curve(double eta0, double r, double delta, const FitSettings& s, const std::vector<double>& Ls,
                              const theory::NoiseBudget& b)
{
    b.validate();
    if (!(eta0 >= 0.0 && eta0 <= 1.0) || !(r > 0.0) || !(delta >= 0.0))
        throw ConfigError("model parameters need eta0 in [0, 1], r > 0, delta >= 0");
    NrfCurve c;
    c.photonLevel = b.totalN;
    c.strayN = b.strayN;
    c.readNoise = b.readNoise;
    for (double L : Ls)
        c.points.push_back({L, model_sigma_eff(eta0, r, delta, L, s, b), 0.0});
    return c;
}

/// Levenberg-Marquardt in transformed coordinates: eta0 = logistic(a),
/// r = exp(b), delta = exp(c). Weights are 1/stderr^2; without errors unit
/// weights are used and the covariance is scaled by chi2 / (n - 3).
inline FitResult fit_nrf_curve(NrfCurve curve, const FitSettings& s = {})
{
    curve.normalize();
    const auto budget = curve.budget();
    budget.validate();
    const auto n = static_cast<Eigen::Index>(curve.points.size());
    if (n < 4)
        throw DataError("three free parameters need at least 4 curve points (degrees of freedom), got " +
                        std::to_string(n));
    const bool weighted = curve.has_errors();
    std::vector<double> w(static_cast<std::size_t>(n), 1.0);
    if (weighted)
        for (std::size_t i = 0; i < w.size(); ++i)
            w[i] = 1.0 / curve.points[i].standardError;

    const double r0 = s.rGuess > 0.0 ? s.rGuess : curve.points.front().L / 3.0;
    const double d0 = s.deltaGuess > 0.0 ? s.deltaGuess : 0.1 * r0;
    const double e0 = std::clamp(s.eta0Guess, 1e-6, 1.0 - 1e-6);
    Eigen::VectorXd x(3);
    x << std::log(e0 / (1.0 - e0)), std::log(r0), std::log(d0);

    struct Natural {
        double eta0, r, delta;
    };
    auto natural = [](const Eigen::VectorXd& p) {
        return Natural{1.0 / (1.0 + std::exp(-p(0))), std::exp(p(1)), std::exp(p(2))};
    };
    auto residuals = [&](const Eigen::VectorXd& p) {
        const Natural q = natural(p);
        Eigen::VectorXd r(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& pt = curve.points[static_cast<std::size_t>(i)];
            r(i) = (pt.sigmaEff - model_sigma_eff(q.eta0, q.r, q.delta, pt.L, s, budget)) * w[static_cast<std::size_t>(i)];
        }
        return r;
    };
    auto jacobian = [&](const Eigen::VectorXd& p) {
        const Natural q = natural(p);
        Eigen::MatrixXd J(n, 3);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& pt = curve.points[static_cast<std::size_t>(i)];
            const auto g = model_gradient(q.eta0, q.r, q.delta, pt.L, s, budget);
            const double wi = w[static_cast<std::size_t>(i)];
            J(i, 0) = -wi * g.dEta0 * q.eta0 * (1.0 - q.eta0);
            J(i, 1) = -wi * g.dR * q.r;
            J(i, 2) = -wi * g.dDelta * q.delta;
        }
        return J;
    };

    // sigma_eff is linear in eta0: when the run from the given guess ends in
    // a degenerate corner, restart from the best eta0 for the initial r, delta.
    LmResult lm;
    try {
        lm = levenberg_marquardt(residuals, jacobian, x, s.lm);
    } catch (const NumericalError&) {
        const Natural q0 = natural(x);
        double num = 0.0, den = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& pt = curve.points[static_cast<std::size_t>(i)];
            const double wi = w[static_cast<std::size_t>(i)];
            const double base = model_sigma_eff(0.0, q0.r, q0.delta, pt.L, s, budget);
            const double slope = model_gradient(q0.eta0, q0.r, q0.delta, pt.L, s, budget).dEta0;
            num += wi * wi * slope * (pt.sigmaEff - base);
            den += wi * wi * slope * slope;
        }
        const double e1 = den > 0.0 ? std::clamp(num / den, 0.05, 0.95) : 0.5;
        if (std::abs(e1 - q0.eta0) < 1e-6)
            throw;
        x(0) = std::log(e1 / (1.0 - e1));
        lm = levenberg_marquardt(residuals, jacobian, x, s.lm);
    }
    const Natural q = natural(lm.params);
    Eigen::MatrixXd cov = lm.covariance;
    if (!weighted)
        cov *= n > 3 ? lm.chi2 / static_cast<double>(n - 3) : 0.0;
    const Eigen::Vector3d t(q.eta0 * (1.0 - q.eta0), q.r, q.delta);
    FitResult out;
    out.eta0 = {q.eta0, t(0) * std::sqrt(std::max(0.0, cov(0, 0)))};
    out.r = {q.r, t(1) * std::sqrt(std::max(0.0, cov(1, 1)))};
    out.delta = {q.delta, t(2) * std::sqrt(std::max(0.0, cov(2, 2)))};
    out.D = q.delta / (2.0 * q.r);
    out.chi2 = lm.chi2;
    out.converged = lm.converged;
    out.iterations = lm.iterations;
    out.condition = lm.condition;
    const Eigen::VectorXd res = residuals(lm.params);
    for (Eigen::Index i = 0; i < n; ++i)
        out.residuals.push_back(res(i) / w[static_cast<std::size_t>(i)]);
    return out;
}

inline void write_fit_report(const FitResult& f, const NrfCurve& curve, std::ostream& out)
{
    out << std::setprecision(10);
    out << "points      " << curve.points.size() << "\n";
    out << "eta0        " << f.eta0.value << " +- " << f.eta0.standardError << "\n";
    out << "r_um        " << f.r.value << " +- " << f.r.standardError << "\n";
    out << "delta_um    " << f.delta.value << " +- " << f.delta.standardError << "\n";
    out << "D           " << f.D << "\n";
    out << "chi2        " << f.chi2 << "\n";
    out << "iterations  " << f.iterations << "\n";
    out << "condition   " << f.condition << "\n";
    out << "converged   " << (f.converged ? "yes" : "no") << "\n";
}

inline void write_fit_csv(const FitResult& f, std::ostream& out)
{
    out << std::setprecision(17);
    out << "parameter,value,stderr\n";
    out << "eta0," << f.eta0.value << "," << f.eta0.standardError << "\n";
    out << "r_um," << f.r.value << "," << f.r.standardError << "\n";
    out << "delta_um," << f.delta.value << "," << f.delta.standardError << "\n";
    out << "D," << f.D << ",\n";
    out << "chi2," << f.chi2 << ",\n";
}

} // namespace twinbeam
