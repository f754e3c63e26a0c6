#include "phenoclass/harmonic.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "phenoclass/error.hpp"

namespace pheno {

double harmonic_eval(const std::array<double, 4>& beta, double t_years) {
    const double angle = 2.0 * M_PI * kHarmonicOmega * t_years;
    return beta[0] + beta[1] * t_years + beta[2] * std::cos(angle) +
           beta[3] * std::sin(angle);
}

namespace {

Eigen::Matrix<double, Eigen::Dynamic, 4> design_matrix(std::span<const double> t) {
    Eigen::Matrix<double, Eigen::Dynamic, 4> X(t.size(), 4);
    for (size_t i = 0; i < t.size(); ++i) {
        const double angle = 2.0 * M_PI * kHarmonicOmega * t[i];
        X(static_cast<Eigen::Index>(i), 0) = 1.0;
        X(static_cast<Eigen::Index>(i), 1) = t[i];
        X(static_cast<Eigen::Index>(i), 2) = std::cos(angle);
        X(static_cast<Eigen::Index>(i), 3) = std::sin(angle);
    }
    return X;
}

}  // namespace

HarmonicFit fit_harmonic(std::span<const std::optional<double>> monthly_signal,
                         BandId band, const HarmonicOptions& options) {
    std::vector<double> t, y;
    t.reserve(monthly_signal.size());
    for (size_t m = 0; m < monthly_signal.size(); ++m) {
        if (!monthly_signal[m]) continue;
        t.push_back(static_cast<double>(m) * kYearsPerMonth);
        y.push_back(*monthly_signal[m]);
    }
    const int n = static_cast<int>(t.size());
    require(n >= 4, "harmonic fit for band ", band_name(band), ": only ", n,
            " non-missing months, need at least 4");

    auto X = design_matrix(t);
    Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);

    Eigen::ColPivHouseholderQR<Eigen::Matrix<double, Eigen::Dynamic, 4>> qr(X);
    qr.setThreshold(1e-10);
    require(qr.rank() == 4, "harmonic fit for band ", band_name(band),
            ": rank-deficient design (rank ", qr.rank(), " < 4)");

    Eigen::Vector4d beta;
    if (!options.iterative) {
        beta = qr.solve(yv);
    } else {
        // Gauss-Newton refinement from the fixed initial guess. The model is
        // linear in beta, so each iteration solves for the full correction.
        beta << options.initial[0], options.initial[1], options.initial[2],
            options.initial[3];
        for (int it = 0; it < options.max_iterations; ++it) {
            Eigen::VectorXd residual = yv - X * beta;
            Eigen::Vector4d delta = qr.solve(residual);
            beta += delta;
            if (delta.norm() <= options.tolerance * (1.0 + beta.norm())) break;
        }
    }

    HarmonicFit fit;
    fit.beta0 = beta(0);
    fit.beta1 = beta(1);
    fit.beta2 = beta(2);
    fit.beta3 = beta(3);
    fit.amplitude = std::hypot(beta(2), beta(3));
    fit.phase = std::atan2(beta(3), beta(2));
    if (fit.phase <= -M_PI) fit.phase = M_PI;  // keep phase in (-pi, pi]
    fit.n_points = n;
    const double sse = (yv - X * beta).squaredNorm();
    fit.rmse = std::sqrt(sse / n);
    return fit;
}

}  // namespace pheno
