// Apache License, Version 2.0, refer to LICENSE.txt
//
// Shared fixtures for the test suites. The identity basis makes a particle's
// coefficient vector equal its log-density values, so tests can hand-craft
// exact particle densities.
#ifndef COCO_TEST_SUPPORT_HPP
#define COCO_TEST_SUPPORT_HPP
#pragma once

#include "coco/smc.hpp"

#include <memory>

namespace coco_test {

using namespace coco;

inline KLBasis identity_basis(std::shared_ptr<const Grid> grid) {
    KLBasis basis;
    basis.grid = std::move(grid);
    basis.kernel = KernelParams{1.0, 1.0};
    const Index n = basis.grid->size();
    basis.eigenvalues = Vector::Ones(n);
    basis.eigenvectors = Matrix::Identity(n, n);
    basis.scaled_basis = basis.eigenvectors;
    return basis;
}

// Posterior with explicitly given particle coefficient columns.
inline MetaPosterior make_posterior(std::shared_ptr<const KLBasis> basis, const Matrix& particles,
                                    std::uint64_t seed = 0) {
    MetaPosterior posterior;
    posterior.basis = std::move(basis);
    posterior.particles = particles;
    posterior.weights =
        Vector::Constant(particles.cols(), 1.0 / static_cast<double>(particles.cols()));
    posterior.rng = Rng(seed);
    detail::refresh_cache_all(posterior);
    return posterior;
}

// Log-density coefficients whose softmax over the (context-free) grid equals
// the given probability vector.
inline Vector log_coefficients_for(const Vector& probs) {
    Vector xi(probs.size());
    for (Index i = 0; i < probs.size(); ++i)
        xi[i] = probs[i] > 0.0 ? std::log(probs[i]) : -800.0;
    return xi;
}

inline PointLikelihoods plain_likelihoods(const Vector& values) {
    PointLikelihoods g;
    g.scaled = values;
    g.log_scale = 0.0;
    return g;
}

}  // namespace coco_test

#endif  // COCO_TEST_SUPPORT_HPP
