#pragma once

#include "splatsim/core.hpp"

namespace splatsim {

struct Material {
    double youngs_modulus = 1e5;  // Pa
    double poisson_ratio = 0.3;
    double density = 1000.0;  // kg/m^3

    double mu() const { return youngs_modulus / (2.0 * (1.0 + poisson_ratio)); }
    double lambda() const {
        return youngs_modulus * poisson_ratio / ((1.0 + poisson_ratio) * (1.0 - 2.0 * poisson_ratio));
    }
    /// Dilatational wave speed used by the CFL check.
    double wave_speed() const;
    void validate() const;
};

/// Rotation factor R of F = R S with det R = +1.
Mat3 polar_rotation(const Mat3& f);

/// psi(F) = mu |F - R|_F^2 + lambda/2 (J - 1)^2
double fixed_corotated_energy(const Mat3& f, double mu, double lambda);

/// First Piola-Kirchhoff stress dpsi/dF = 2 mu (F - R) + lambda (J - 1) J F^-T.
Mat3 fixed_corotated_pk1(const Mat3& f, double mu, double lambda);

/// P(F) F^T, the stress entering the grid force.
Mat3 fixed_corotated_kirchhoff(const Mat3& f, double mu, double lambda);

}  // namespace splatsim
