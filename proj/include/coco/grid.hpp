// Apache License, Version 2.0, refer to LICENSE.txt
#ifndef COCO_GRID_HPP
#define COCO_GRID_HPP
#pragma once

#include "coco/common.hpp"

#include <cmath>
#include <sstream>
#include <utility>

namespace coco {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

// Discretization request for the joint (mu, x_obs) space. Every mu dimension
// shares one point count, as does every context dimension; ranges are per-dim.
struct GridSpec {
    int arms = 1;                           // K
    std::vector<Interval> mu_ranges;        // one per arm; size K
    int mu_points_per_dim = 2;
    std::vector<Interval> context_ranges;   // one per observed-context dim; may be empty
    int context_points_per_dim = 2;

    static GridSpec uniform_mu(int arms, Interval mu_range, int mu_points,
                               std::vector<Interval> context_ranges = {},
                               int context_points = 2) {
        GridSpec s;
        s.arms = arms;
        s.mu_ranges.assign(static_cast<std::size_t>(arms), mu_range);
        s.mu_points_per_dim = mu_points;
        s.context_ranges = std::move(context_ranges);
        s.context_points_per_dim = context_points;
        return s;
    }
};

inline constexpr Index kDefaultMaxGridPoints = 4'000'000;

// Product grid over (mu, x_obs). Flat index layout: mu dimensions vary
// fastest (mu_0 fastest of all), context dimensions slowest, so the mu-subgrid
// for a fixed context index is one contiguous block of length mu_subgrid_size.
class Grid {
public:
    Grid(std::vector<Vector> axis_values, int arms)
        : axis_values_(std::move(axis_values)), arms_(arms) {
        strides_.resize(axis_values_.size());
        Index stride = 1;
        for (std::size_t a = 0; a < axis_values_.size(); ++a) {
            strides_[a] = stride;
            stride *= axis_values_[a].size();
        }
        total_points_ = stride;
        mu_subgrid_size_ = 1;
        for (int a = 0; a < arms_; ++a) mu_subgrid_size_ *= axis_values_[a].size();
        context_count_ = total_points_ / mu_subgrid_size_;

        points_.resize(total_points_, static_cast<Index>(axis_values_.size()));
        for (Index l = 0; l < total_points_; ++l) {
            Index rem = l;
            for (std::size_t a = 0; a < axis_values_.size(); ++a) {
                const Index n = axis_values_[a].size();
                points_(l, static_cast<Index>(a)) = axis_values_[a][rem % n];
                rem /= n;
            }
        }
    }

    int arms() const { return arms_; }
    int context_dims() const { return static_cast<int>(axis_values_.size()) - arms_; }
    Index size() const { return total_points_; }
    Index mu_subgrid_size() const { return mu_subgrid_size_; }
    Index context_count() const { return context_count_; }

    const std::vector<Vector>& axis_values() const { return axis_values_; }
    const Matrix& points() const { return points_; }

    // mu coordinate of mu-subgrid point l_mu for a given arm. Valid because
    // the first mu_subgrid_size rows enumerate all mu combinations.
    double mu_value(Index l_mu, int arm) const { return points_(l_mu, arm); }

    Index flat_index(const std::vector<Index>& mu_multi_index, Index context_index) const {
        Index l = 0;
        for (int a = 0; a < arms_; ++a) l += mu_multi_index[static_cast<std::size_t>(a)] * strides_[static_cast<std::size_t>(a)];
        return l + context_index * mu_subgrid_size_;
    }

    std::pair<std::vector<Index>, Index> unflatten(Index l) const {
        std::vector<Index> mu(static_cast<std::size_t>(arms_));
        Index rem = l;
        for (int a = 0; a < arms_; ++a) {
            const Index n = axis_values_[static_cast<std::size_t>(a)].size();
            mu[static_cast<std::size_t>(a)] = rem % n;
            rem /= n;
        }
        return {std::move(mu), rem};
    }

    // Index of the context grid value nearest to a continuous scalar context.
    // Only meaningful for 1-d contexts, which is all the environments use.
    Index snap_context(double x_obs) const {
        if (context_dims() == 0) return 0;
        const Vector& values = axis_values_.back();
        Index best = 0;
        double best_dist = std::abs(values[0] - x_obs);
        for (Index i = 1; i < values.size(); ++i) {
            const double d = std::abs(values[i] - x_obs);
            if (d < best_dist) {
                best_dist = d;
                best = i;
            }
        }
        return best;
    }

private:
    std::vector<Vector> axis_values_;  // per-axis coordinates, mu axes first
    int arms_ = 0;
    std::vector<Index> strides_;
    Index total_points_ = 0;
    Index mu_subgrid_size_ = 0;
    Index context_count_ = 0;
    Matrix points_;  // L x (K + d_obs)
};

inline Vector linspace(double lo, double hi, int n) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / (n - 1);
    return v;
}

inline Grid build_grid(const GridSpec& spec, Index max_points = kDefaultMaxGridPoints) {
    if (spec.arms < 1) throw ConfigError("grid: arms must be >= 1");
    if (static_cast<int>(spec.mu_ranges.size()) != spec.arms)
        throw ConfigError("grid: need one mu range per arm");
    if (spec.mu_points_per_dim < 2 || (!spec.context_ranges.empty() && spec.context_points_per_dim < 2))
        throw ConfigError("grid: points_per_dim must be >= 2");
    for (const auto& r : spec.mu_ranges)
        if (!(r.lo < r.hi)) throw ConfigError("grid: mu range lower bound must be < upper bound");
    for (const auto& r : spec.context_ranges)
        if (!(r.lo < r.hi)) throw ConfigError("grid: context range lower bound must be < upper bound");

    double product = 1.0;
    for (int a = 0; a < spec.arms; ++a) product *= spec.mu_points_per_dim;
    for (std::size_t c = 0; c < spec.context_ranges.size(); ++c) product *= spec.context_points_per_dim;
    if (product > static_cast<double>(max_points)) {
        std::ostringstream msg;
        msg << "grid: " << spec.mu_points_per_dim << "^" << spec.arms;
        if (!spec.context_ranges.empty())
            msg << " * " << spec.context_points_per_dim << "^" << spec.context_ranges.size();
        msg << " = " << product << " points exceeds the configured maximum " << max_points;
        throw ConfigError(msg.str());
    }

    std::vector<Vector> axes;
    axes.reserve(static_cast<std::size_t>(spec.arms) + spec.context_ranges.size());
    for (const auto& r : spec.mu_ranges) axes.push_back(linspace(r.lo, r.hi, spec.mu_points_per_dim));
    for (const auto& r : spec.context_ranges) axes.push_back(linspace(r.lo, r.hi, spec.context_points_per_dim));
    return Grid(std::move(axes), spec.arms);
}

}  // namespace coco

#endif  // COCO_GRID_HPP
