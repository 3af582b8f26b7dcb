#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <sstream>

#include "twinbeam/error.hpp"

namespace twinbeam {

struct LmOptions {
    int maxIterations = 200;
    double relativeTolerance = 1e-8;
    double initialDamping = 1e-3;
    double conditionLimit = 1e14;
};

struct LmResult {
    Eigen::VectorXd params;
    /// (J^T J)^-1 at the optimum, for weighted residuals.
    Eigen::MatrixXd covariance;
    double chi2 = 0.0;
    int iterations = 0;
    bool converged = false;
    double condition = 0.0;
};

/// Condition number of J^T J from the singular values of J.
inline double normal_condition(const Eigen::MatrixXd& J)
{
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s(s.size() - 1) == 0.0)
        return std::numeric_limits<double>::infinity();
    const double c = s(0) / s(s.size() - 1);
    return c * c;
}

/// Levenberg-Marquardt on weighted residuals. `residuals(x)` returns the
/// vector r_i = (y_i - f_i(x)) / s_i and `jacobian(x)` its derivative dr/dx.
/// Damping lambda diag(J^T J) is divided by 10 after an accepted step and
/// multiplied by 10 after a rejected one.
template <class ResidualFn, class JacobianFn>
LmResult levenberg_marquardt(ResidualFn&& residuals, JacobianFn&& jacobian, Eigen::VectorXd x,
                             const LmOptions& opt = {})
{
    Eigen::VectorXd r = residuals(x);
    double chi2 = r.squaredNorm();
    if (!std::isfinite(chi2))
        throw NumericalError("residuals are not finite at the initial guess");
    double lambda = opt.initialDamping;
    LmResult out;
    Eigen::MatrixXd J = jacobian(x);
    for (int it = 1; it <= opt.maxIterations; ++it) {
        out.iterations = it;
        const Eigen::MatrixXd A = J.transpose() * J;
        const Eigen::VectorXd g = J.transpose() * r;
        bool stepped = false;
        while (lambda < 1e20) {
            Eigen::MatrixXd damped = A;
            for (Eigen::Index k = 0; k < A.rows(); ++k)
                damped(k, k) += lambda * std::max(A(k, k), 1e-300);
            const Eigen::VectorXd step = damped.ldlt().solve(-g);
            if (!step.allFinite()) {
                lambda *= 10.0;
                continue;
            }
            const Eigen::VectorXd trial = x + step;
            const Eigen::VectorXd rt = residuals(trial);
            const double chi2t = rt.squaredNorm();
            const double rel = step.norm() / (x.norm() + 1e-30);
            if (std::isfinite(chi2t) && chi2t < chi2) {
                x = trial;
                r = rt;
                chi2 = chi2t;
                J = jacobian(x);
                lambda = std::max(lambda / 10.0, 1e-12);
                stepped = true;
                if (rel < opt.relativeTolerance)
                    out.converged = true;
                break;
            }
            // A step too small to matter that no longer lowers chi2: at the optimum.
            if (rel < opt.relativeTolerance) {
                out.converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if (out.converged)
            break;
        if (!stepped)
            break;
    }
    out.params = x;
    out.chi2 = chi2;
    out.condition = normal_condition(J);
    if (!(out.condition < opt.conditionLimit)) {
        std::ostringstream msg;
        msg << "singular normal equations (condition number " << out.condition << ")";
        throw NumericalError(msg.str());
    }
    if (!out.converged) {
        std::ostringstream msg;
        msg << "no convergence after " << out.iterations << " iterations (chi2 " << chi2 << ")";
        throw NumericalError(msg.str());
    }
    out.covariance = (J.transpose() * J).inverse();
    return out;
}

} // namespace twinbeam
