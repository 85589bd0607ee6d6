// Apache License, Version 2.0, refer to LICENSE.txt
//
// Discrete densities induced by a particle's log-density values: softmax
// normalization over the grid, conditioning on an observed context, and
// Bayes updates against a user's reward history.
//
// Products of Gaussian reward densities are carried as (scaled values,
// log-scale) pairs: the scaled vector is exp(log g - max log g), so histories
// of any length stay representable. The common scale cancels wherever ratios
// across particles matter and is reapplied where the absolute value does.
#ifndef COCO_DENSITY_HPP
#define COCO_DENSITY_HPP
#pragma once

#include "coco/grid.hpp"

#include <cmath>
#include <utility>

namespace coco {

struct NoiseModel {
    double sigma = 0.1;

    void validate() const {
        if (!(sigma > 0.0)) throw ConfigError("noise model: sigma must be > 0");
    }
};

// One user's interaction record: (arm, reward) pairs in order.
struct History {
    std::vector<std::pair<int, double>> samples;

    bool empty() const { return samples.empty(); }
    std::size_t size() const { return samples.size(); }
    void add(int arm, double reward) { samples.emplace_back(arm, reward); }
};

// Probability vector over the full joint grid, aligned with Grid ordering.
struct JointDensity {
    Vector probs;
};

// Probability vector over the mu-subgrid at one fixed context index.
struct ConditionalDensity {
    Vector probs;
    Index context_index = 0;
};

// Per-point history likelihoods g_l = prod_(a,r) N(r | mu_l[a], sigma^2)
// over the mu-subgrid, stored as scaled = exp(log g - log_scale) with
// log_scale = max_l log g_l. True value: scaled[l] * exp(log_scale).
struct PointLikelihoods {
    Vector scaled;
    double log_scale = 0.0;

    double value(Index l) const { return scaled[l] * std::exp(log_scale); }
    double log_value(Index l) const { return std::log(scaled[l]) + log_scale; }
};

inline JointDensity normalize_on_grid(const Vector& f_values) {
    if (!f_values.allFinite())
        throw NumericalError("normalize_on_grid: non-finite log-density value");
    const double max = f_values.maxCoeff();
    JointDensity d;
    d.probs = (f_values.array() - max).exp();
    d.probs /= d.probs.sum();
    return d;
}

inline ConditionalDensity condition_on_context(const JointDensity& joint, const Grid& grid,
                                               Index context_index) {
    if (context_index < 0 || context_index >= grid.context_count())
        throw ConfigError("condition_on_context: context index out of range");
    const Index lmu = grid.mu_subgrid_size();
    ConditionalDensity cond;
    cond.context_index = context_index;
    cond.probs = joint.probs.segment(context_index * lmu, lmu);
    const double mass = cond.probs.sum();
    if (!(mass > 0.0))
        throw DegenerateDensityError("condition_on_context: zero mass at context index " +
                                     std::to_string(context_index));
    cond.probs /= mass;
    return cond;
}

// Conditional at a context directly from log-density values: the softmax of
// the slice equals conditioning the joint softmax, without forming it.
inline ConditionalDensity conditional_from_log_values(const Vector& f_values, const Grid& grid,
                                                      Index context_index) {
    if (context_index < 0 || context_index >= grid.context_count())
        throw ConfigError("conditional_from_log_values: context index out of range");
    const Index lmu = grid.mu_subgrid_size();
    auto slice = f_values.segment(context_index * lmu, lmu);
    if (!slice.allFinite())
        throw NumericalError("conditional_from_log_values: non-finite log-density value");
    ConditionalDensity cond;
    cond.context_index = context_index;
    cond.probs = (slice.array() - slice.maxCoeff()).exp();
    cond.probs /= cond.probs.sum();
    return cond;
}

inline ConditionalDensity uniform_conditional(const Grid& grid, Index context_index = 0) {
    ConditionalDensity cond;
    cond.context_index = context_index;
    cond.probs = Vector::Constant(grid.mu_subgrid_size(), 1.0 / static_cast<double>(grid.mu_subgrid_size()));
    return cond;
}

inline double gaussian_log_pdf(double x, double mean, double sigma) {
    static const double kLogSqrt2Pi = 0.5 * std::log(2.0 * M_PI);
    const double z = (x - mean) / sigma;
    return -0.5 * z * z - std::log(sigma) - kLogSqrt2Pi;
}

inline PointLikelihoods history_point_likelihoods(const Grid& grid, const History& history,
                                                  const NoiseModel& noise) {
    noise.validate();
    const Index lmu = grid.mu_subgrid_size();
    PointLikelihoods out;
    if (history.empty()) {
        out.scaled = Vector::Ones(lmu);
        out.log_scale = 0.0;
        return out;
    }
    Vector log_g = Vector::Zero(lmu);
    for (const auto& [arm, reward] : history.samples) {
        if (arm < 0 || arm >= grid.arms())
            throw ConfigError("history: arm index " + std::to_string(arm) + " out of range");
        for (Index l = 0; l < lmu; ++l)
            log_g[l] += gaussian_log_pdf(reward, grid.mu_value(l, arm), noise.sigma);
    }
    out.log_scale = log_g.maxCoeff();
    out.scaled = (log_g.array() - out.log_scale).exp();
    return out;
}

inline PointLikelihoods single_observation_likelihoods(const Grid& grid, int arm, double reward,
                                                       const NoiseModel& noise) {
    History h;
    h.add(arm, reward);
    return history_point_likelihoods(grid, h, noise);
}

// Sum cond_l * scaled_l: the history likelihood up to the common factor
// exp(log_scale). This is the quantity particle reweighting consumes, since
// the scale is identical for every particle.
inline double scaled_marginal_likelihood(const ConditionalDensity& cond, const PointLikelihoods& g) {
    if (cond.probs.size() != g.scaled.size())
        throw ConfigError("marginal_likelihood: length mismatch");
    return cond.probs.dot(g.scaled);
}

inline double log_marginal_likelihood(const ConditionalDensity& cond, const PointLikelihoods& g) {
    return std::log(scaled_marginal_likelihood(cond, g)) + g.log_scale;
}

// True-scale grid-sum estimate of P(H | x_obs). May underflow for histories
// no grid point explains; use log_marginal_likelihood in that regime.
inline double marginal_likelihood(const ConditionalDensity& cond, const PointLikelihoods& g) {
    const double scaled = scaled_marginal_likelihood(cond, g);
    if (g.log_scale == 0.0) return scaled;
    return scaled * std::exp(g.log_scale);
}

inline ConditionalDensity condition_on_history(const ConditionalDensity& cond,
                                               const PointLikelihoods& g) {
    if (cond.probs.size() != g.scaled.size())
        throw ConfigError("condition_on_history: length mismatch");
    ConditionalDensity post;
    post.context_index = cond.context_index;
    post.probs = cond.probs.cwiseProduct(g.scaled);
    const double evidence = post.probs.sum();
    if (!(evidence > 0.0))
        throw DegenerateDensityError("condition_on_history: zero evidence");
    post.probs /= evidence;
    return post;
}

}  // namespace coco

#endif  // COCO_DENSITY_HPP
