// Apache License, Version 2.0, refer to LICENSE.txt
//
// Truncated Karhunen-Loeve basis of the SE kernel on a product grid.
//
// The SE kernel separates across coordinate axes, so on a product grid the
// L x L kernel matrix is a tensor product of small per-axis kernel matrices.
// Eigenpairs of the joint matrix are therefore products of per-axis
// eigenpairs, which makes the decomposition tractable at L = 20^3 * 10 and
// beyond, where a dense eigensolve is not.
#ifndef COCO_KL_BASIS_HPP
#define COCO_KL_BASIS_HPP
#pragma once

#include "coco/grid.hpp"
#include "coco/kernel.hpp"

#include <algorithm>
#include <memory>
#include <numeric>

namespace coco {

struct KLBasis {
    std::shared_ptr<const Grid> grid;
    KernelParams kernel;
    Vector eigenvalues;   // length M, non-increasing, >= 0
    Matrix eigenvectors;  // L x M, columns orthonormal on the grid
    Matrix scaled_basis;  // L x M, column m = sqrt(lambda_m) * phi_m

    Index truncation() const { return eigenvalues.size(); }

    // Rows of the scaled basis belonging to one context's mu-subgrid.
    auto context_slice(Index context_index) const {
        const Index lmu = grid->mu_subgrid_size();
        return scaled_basis.middleRows(context_index * lmu, lmu);
    }
};

namespace detail {

inline constexpr double kEigenvalueClampTol = 1e-10;

inline void clamp_eigenvalues(Vector& values, const char* what) {
    for (Index i = 0; i < values.size(); ++i) {
        if (values[i] < -kEigenvalueClampTol) {
            throw NumericalError(std::string(what) + ": eigenvalue " + std::to_string(values[i]) +
                                 " below PSD rounding tolerance");
        }
        if (values[i] < 0.0) values[i] = 0.0;
    }
}

struct AxisEigen {
    Vector values;  // sorted descending
    Matrix vectors; // columns aligned with values
};

inline AxisEigen axis_eigendecomposition(const Matrix& k) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(k);
    if (solver.info() != Eigen::Success) {
        const double residual = (k - solver.eigenvectors() *
                                         solver.eigenvalues().asDiagonal() *
                                         solver.eigenvectors().transpose())
                                    .norm();
        throw NumericalError("axis eigendecomposition did not converge, residual norm " +
                             std::to_string(residual));
    }
    AxisEigen out;
    out.values = solver.eigenvalues().reverse();            // descending
    out.vectors = solver.eigenvectors().rowwise().reverse();
    clamp_eigenvalues(out.values, "axis kernel");
    return out;
}

}  // namespace detail

inline Vector eval_particle(const Vector& xi, const KLBasis& basis) {
    if (xi.size() != basis.truncation())
        throw ConfigError("eval_particle: coefficient length does not match basis truncation");
    return basis.scaled_basis * xi;
}

inline KLBasis compute_kl_basis(std::shared_ptr<const Grid> grid, const KernelParams& params,
                                Index truncation) {
    params.validate();
    const Index total = grid->size();
    if (truncation < 1 || truncation > total)
        throw ConfigError("kl basis: truncation must be in [1, L]");

    const auto& axes = grid->axis_values();
    const std::size_t dims = axes.size();
    std::vector<detail::AxisEigen> axis_eigen;
    axis_eigen.reserve(dims);
    for (const Vector& coords : axes)
        axis_eigen.push_back(detail::axis_eigendecomposition(axis_kernel_matrix(coords, params.lengthscale)));

    // Joint eigenvalue for flat multi-index l (same stride layout as the grid):
    // sigma_f^2 * prod_a lambda_a[i_a]. Select the top M, breaking value ties
    // lexicographically on the multi-index so the basis is platform-stable.
    std::vector<Index> axis_sizes(dims);
    for (std::size_t a = 0; a < dims; ++a) axis_sizes[a] = axes[a].size();
    const auto decode = [&](Index l, std::vector<Index>& idx) {
        for (std::size_t a = 0; a < dims; ++a) {
            idx[a] = l % axis_sizes[a];
            l /= axis_sizes[a];
        }
    };

    std::vector<double> product_values(static_cast<std::size_t>(total));
    {
        std::vector<Index> idx(dims);
        for (Index l = 0; l < total; ++l) {
            decode(l, idx);
            double v = params.signal_variance;
            for (std::size_t a = 0; a < dims; ++a) v *= axis_eigen[a].values[idx[a]];
            product_values[static_cast<std::size_t>(l)] = v;
        }
    }

    std::vector<Index> order(static_cast<std::size_t>(total));
    std::iota(order.begin(), order.end(), Index{0});
    {
        std::vector<Index> ia(dims), ib(dims);
        const auto before = [&](Index a, Index b) {
            const double va = product_values[static_cast<std::size_t>(a)];
            const double vb = product_values[static_cast<std::size_t>(b)];
            if (va != vb) return va > vb;
            decode(a, ia);
            decode(b, ib);
            return std::lexicographical_compare(ia.begin(), ia.end(), ib.begin(), ib.end());
        };
        std::partial_sort(order.begin(), order.begin() + truncation, order.end(), before);
    }

    KLBasis basis;
    basis.grid = std::move(grid);
    basis.kernel = params;
    basis.eigenvalues.resize(truncation);
    basis.eigenvectors.resize(total, truncation);
    {
        std::vector<Index> idx(dims);
        std::vector<Index> point_idx(dims);
        for (Index m = 0; m < truncation; ++m) {
            const Index sel = order[static_cast<std::size_t>(m)];
            basis.eigenvalues[m] = product_values[static_cast<std::size_t>(sel)];
            decode(sel, idx);
            // phi_m(l) = prod_a V_a(point_idx_a, i_a)
            for (Index l = 0; l < total; ++l) {
                decode(l, point_idx);
                double v = 1.0;
                for (std::size_t a = 0; a < dims; ++a) v *= axis_eigen[a].vectors(point_idx[a], idx[a]);
                basis.eigenvectors(l, m) = v;
            }
        }
    }
    basis.scaled_basis = basis.eigenvectors * basis.eigenvalues.cwiseSqrt().asDiagonal();
    return basis;
}

// Action of the full (untruncated) kernel matrix on a vector, via the
// per-axis factorization. Used to cross-check the factorized representation
// against the dense matrix without ever forming it.
inline Vector kernel_matvec_factorized(const Grid& grid, const KernelParams& params, const Vector& v) {
    if (v.size() != grid.size()) throw ConfigError("kernel_matvec: length mismatch");
    const auto& axes = grid.axis_values();
    Vector cur = v;
    Index inner = 1;  // product of axis sizes already processed
    for (const Vector& coords : axes) {
        const Index n = coords.size();
        const Index outer = grid.size() / (inner * n);
        const Matrix k = axis_kernel_matrix(coords, params.lengthscale);
        Vector next(grid.size());
        for (Index o = 0; o < outer; ++o) {
            for (Index i = 0; i < inner; ++i) {
                // gather the length-n fiber along this axis, apply k, scatter back
                Vector fiber(n);
                for (Index j = 0; j < n; ++j) fiber[j] = cur[o * inner * n + j * inner + i];
                Vector out = k * fiber;
                for (Index j = 0; j < n; ++j) next[o * inner * n + j * inner + i] = out[j];
            }
        }
        cur = std::move(next);
        inner *= n;
    }
    return params.signal_variance * cur;
}

}  // namespace coco

#endif  // COCO_KL_BASIS_HPP
