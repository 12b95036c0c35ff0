#include "splatsim/constitutive.hpp"

#include <cmath>

#include <Eigen/SVD>

namespace splatsim {

double Material::wave_speed() const { return std::sqrt(youngs_modulus / density); }

void Material::validate() const {
    if (!(youngs_modulus > 0.0)) throw ConfigError("Young's modulus must be positive");
    if (!(poisson_ratio > 0.0 && poisson_ratio < 0.5)) throw ConfigError("Poisson ratio must lie in (0, 0.5)");
    if (!(density > 0.0)) throw ConfigError("density must be positive");
    if (!std::isfinite(mu()) || !std::isfinite(lambda())) throw ConfigError("Lame parameters are not finite");
}

Mat3 polar_rotation(const Mat3& f) {
    Eigen::JacobiSVD<Mat3> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 u = svd.matrixU();
    Mat3 v = svd.matrixV();
    // Move any reflection onto the smallest singular direction.
    if (u.determinant() < 0.0) u.col(2) *= -1.0;
    if (v.determinant() < 0.0) v.col(2) *= -1.0;
    return u * v.transpose();
}

double fixed_corotated_energy(const Mat3& f, double mu, double lambda) {
    const double j = f.determinant();
    return mu * (f - polar_rotation(f)).squaredNorm() + 0.5 * lambda * (j - 1.0) * (j - 1.0);
}

Mat3 fixed_corotated_pk1(const Mat3& f, double mu, double lambda) {
    const double j = f.determinant();
    // J F^-T is the cofactor matrix, which stays finite as J -> 0.
    Mat3 cof;
    cof.col(0) = f.col(1).cross(f.col(2));
    cof.col(1) = f.col(2).cross(f.col(0));
    cof.col(2) = f.col(0).cross(f.col(1));
    return 2.0 * mu * (f - polar_rotation(f)) + lambda * (j - 1.0) * cof;
}

Mat3 fixed_corotated_kirchhoff(const Mat3& f, double mu, double lambda) {
    return fixed_corotated_pk1(f, mu, lambda) * f.transpose();
}

}  // namespace splatsim
