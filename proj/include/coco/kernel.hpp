// Apache License, Version 2.0, refer to LICENSE.txt
#ifndef COCO_KERNEL_HPP
#define COCO_KERNEL_HPP
#pragma once

#include "coco/common.hpp"

#include <cmath>

namespace coco {

struct KernelParams {
    double lengthscale = 0.7;
    double signal_variance = 1.0;

    void validate() const {
        if (!(lengthscale > 0.0)) throw ConfigError("kernel: lengthscale must be > 0");
        if (!(signal_variance > 0.0)) throw ConfigError("kernel: signal_variance must be > 0");
    }
};

// Squared exponential kernel k(z, z') = sigma_f^2 exp(-|z - z'|^2 / (2 l^2)).
template <typename DerivedA, typename DerivedB>
double se_kernel(const Eigen::MatrixBase<DerivedA>& z, const Eigen::MatrixBase<DerivedB>& zp,
                 const KernelParams& params) {
    const double d2 = (z - zp).squaredNorm();
    return params.signal_variance * std::exp(-d2 / (2.0 * params.lengthscale * params.lengthscale));
}

// Unit-variance SE kernel matrix on one coordinate axis. The joint kernel on
// a product grid factorizes as sigma_f^2 times the tensor product of these.
inline Matrix axis_kernel_matrix(const Vector& coords, double lengthscale) {
    const Index n = coords.size();
    Matrix k(n, n);
    const double inv = 1.0 / (2.0 * lengthscale * lengthscale);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) {
            const double d = coords[i] - coords[j];
            k(i, j) = std::exp(-d * d * inv);
        }
    return k;
}

}  // namespace coco

#endif  // COCO_KERNEL_HPP
