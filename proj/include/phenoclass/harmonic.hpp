#pragma once

#include <array>
#include <optional>
#include <span>

#include "phenoclass/bands.hpp"

namespace pheno {

// Time axis: t is in years, month m maps to m * kYearsPerMonth with
// January 2020 at 0. The model runs one cycle per year (omega = 1).
constexpr double kYearsPerMonth = 1.0 / 12.0;
constexpr double kHarmonicOmega = 1.0;

// First-order sinusoid-plus-trend fit of one band's monthly signal:
//   value(t) = beta0 + beta1*t + beta2*cos(2*pi*omega*t) + beta3*sin(2*pi*omega*t)
struct HarmonicFit {
    double beta0 = 0.0;
    double beta1 = 0.0;
    double beta2 = 0.0;
    double beta3 = 0.0;
    double amplitude = 0.0;  // sqrt(beta2^2 + beta3^2)
    double phase = 0.0;      // atan2(beta3, beta2), in (-pi, pi]
    double rmse = 0.0;
    int n_points = 0;
};

struct HarmonicOptions {
    // The closed-form orthogonal-factorization solve is the default; the
    // iterative mode refines from fixed initial coefficients instead and
    // must agree with it to 1e-6.
    bool iterative = false;
    std::array<double, 4> initial{0.1, 0.1, 0.4, 0.4};
    int max_iterations = 25;
    double tolerance = 1e-12;
};

double harmonic_eval(const std::array<double, 4>& beta, double t_years);

// Least-squares fit over the non-missing months. Needs at least 4 points
// and a full-rank design; failures name the band.
HarmonicFit fit_harmonic(std::span<const std::optional<double>> monthly_signal,
                         BandId band, const HarmonicOptions& options = {});

}  // namespace pheno
