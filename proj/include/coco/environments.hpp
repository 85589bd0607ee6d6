// Apache License, Version 2.0, refer to LICENSE.txt
//
// The three synthetic task generators: a context-dependent mixture of
// Gaussians, a partially observed linear bandit, and a Bayesian linear mixed
// model with aligned or misaligned population prior. Policies never see a
// Task; the harness exposes only the observed context and realized rewards.
#ifndef COCO_ENVIRONMENTS_HPP
#define COCO_ENVIRONMENTS_HPP
#pragma once

#include "coco/density.hpp"
#include "coco/grid.hpp"

#include <cmath>
#include <memory>

namespace coco {

struct Task {
    Vector mu;                    // true arm means; env-internal
    double x_obs = 0.0;           // observed context value
    std::vector<double> latents;  // hidden draw record, diagnostics only
};

inline double observe_reward(const Task& task, int arm, const NoiseModel& noise, Rng& rng) {
    if (arm < 0 || arm >= task.mu.size()) throw ConfigError("observe_reward: arm out of range");
    return task.mu[arm] + noise.sigma * draw_normal(rng);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

namespace detail {

inline Index nearest_axis_index(const Vector& coords, double value) {
    Index best = 0;
    double best_dist = std::abs(coords[0] - value);
    for (Index i = 1; i < coords.size(); ++i) {
        const double d = std::abs(coords[i] - value);
        if (d < best_dist) {
            best_dist = d;
            best = i;
        }
    }
    return best;
}

// Flat mu-subgrid index of the grid point nearest to a mu vector
// (component-wise nearest on this product grid).
inline Index nearest_mu_index(const Grid& grid, const Vector& mu) {
    Index flat = 0;
    Index stride = 1;
    for (int a = 0; a < grid.arms(); ++a) {
        const Vector& coords = grid.axis_values()[static_cast<std::size_t>(a)];
        flat += nearest_axis_index(coords, mu[a]) * stride;
        stride *= coords.size();
    }
    return flat;
}

inline double logsumexp2(double a, double b) {
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Environment 1: mixture of Gaussians with context-dependent modes
// ---------------------------------------------------------------------------

struct MoGEnvParams {
    Vector mean1 = (Vector(3) << 1.8, 1.0, -1.0).finished();
    Vector mean2 = (Vector(3) << 1.0, 1.9, -1.8).finished();
    double std_base = 0.2;   // std(x) = std_base + std_slope * x
    double std_slope = 0.1;
    Interval context{-1.0, 1.0};

    double component_std(double x_obs) const { return std_base + std_slope * x_obs; }
    double mixing_weight(double x_obs) const { return sigmoid(x_obs); }
};

inline Task mog_sample_task(const MoGEnvParams& params, Rng& rng) {
    Task task;
    task.x_obs = params.context.lo + (params.context.hi - params.context.lo) * draw_uniform01(rng);
    const double v1 = params.mixing_weight(task.x_obs);
    const bool first = draw_uniform01(rng) < v1;
    const Vector& mean = first ? params.mean1 : params.mean2;
    const double sd = params.component_std(task.x_obs);
    task.mu = mean + sd * draw_standard_normal(mean.size(), rng);
    task.latents = {first ? 1.0 : 2.0};
    return task;
}

inline ConditionalDensity mog_oracle_conditional(const MoGEnvParams& params, double x_obs,
                                                 const Grid& grid) {
    const double v1 = params.mixing_weight(x_obs);
    const double sd = params.component_std(x_obs);
    const Index lmu = grid.mu_subgrid_size();
    Vector log_density(lmu);
    for (Index l = 0; l < lmu; ++l) {
        double lp1 = std::log(v1), lp2 = std::log(1.0 - v1);
        for (int a = 0; a < grid.arms(); ++a) {
            const double v = grid.mu_value(l, a);
            lp1 += gaussian_log_pdf(v, params.mean1[a], sd);
            lp2 += gaussian_log_pdf(v, params.mean2[a], sd);
        }
        log_density[l] = detail::logsumexp2(lp1, lp2);
    }
    ConditionalDensity cond;
    cond.context_index = grid.snap_context(x_obs);
    cond.probs = (log_density.array() - log_density.maxCoeff()).exp();
    cond.probs /= cond.probs.sum();
    return cond;
}

// ---------------------------------------------------------------------------
// Environment 2: partially observed linear contextual bandit
// ---------------------------------------------------------------------------

struct PartialLinearEnvParams {
    Matrix weights = (Matrix(3, 4) << 0.6, 0.1, 1.0, -0.9,
                                      0.3, 0.3, -1.0, 0.9,
                                      0.1, -0.2, -0.3, 0.1).finished();
    double latent_mean = 0.5;  // x_c ~ N(latent_mean, latent_std^2)
    double latent_std = 0.1;
    Interval context{-1.0, 1.0};
};

inline Task partial_linear_sample_task(const PartialLinearEnvParams& params, Rng& rng) {
    Task task;
    task.x_obs = params.context.lo + (params.context.hi - params.context.lo) * draw_uniform01(rng);
    const double x_c = params.latent_mean + params.latent_std * draw_normal(rng);
    const double x_d = draw_uniform01(rng) < sigmoid(task.x_obs) ? 1.0 : 0.0;
    Vector x(4);
    x << task.x_obs, x_c, x_d, 1.0;
    task.mu = params.weights * x;
    task.latents = {x_c, x_d};
    return task;
}

// ---------------------------------------------------------------------------
// Environment 3: Bayesian linear mixed model
// ---------------------------------------------------------------------------

struct LMMEnvParams {
    Vector slopes = (Vector(3) << 0.9, -1.1, 0.2).finished();
    double theta_variance = 0.25;  // Sigma_theta = theta_variance * I_2
    double random_effect_std = 0.05;
    bool aligned = true;  // aligned: theta ~ N(1_2, .); misaligned: fair mixture of N(+-1_2, .)
    Interval context{-1.0, 1.0};

    void validate() const {
        if (!(theta_variance > 0.0) || !(random_effect_std > 0.0))
            throw ConfigError("lmm: covariance parameters must be positive");
    }
};

inline Vector lmm_sample_population(const LMMEnvParams& params, Rng& rng) {
    Vector mean = Vector::Ones(2);
    if (!params.aligned && draw_uniform01(rng) < 0.5) mean = -mean;
    return mean + std::sqrt(params.theta_variance) * draw_standard_normal(2, rng);
}

inline Task lmm_sample_task(const LMMEnvParams& params, const Vector& theta, Rng& rng) {
    Task task;
    task.x_obs = params.context.lo + (params.context.hi - params.context.lo) * draw_uniform01(rng);
    const Vector delta = params.random_effect_std * draw_standard_normal(params.slopes.size(), rng);
    task.mu.resize(params.slopes.size());
    for (Index a = 0; a < params.slopes.size(); ++a)
        task.mu[a] = params.slopes[a] * task.x_obs * theta[0] + theta[1] + delta[a];
    task.latents = {theta[0], theta[1]};
    for (Index a = 0; a < delta.size(); ++a) task.latents.push_back(delta[a]);
    return task;
}

// ---------------------------------------------------------------------------
// Common environment interface for the harness
// ---------------------------------------------------------------------------

class Environment {
public:
    virtual ~Environment() = default;
    virtual const char* name() const = 0;
    virtual int num_arms() const = 0;
    virtual Interval context_range() const = 0;
    // Per-run population draw (one theta per simulation for the LMM).
    virtual void initialize_run(Rng&) {}
    virtual Task sample_task(Rng& rng) const = 0;
    // Discretized P*(mu | x_obs) on the grid's mu-subgrid.
    virtual ConditionalDensity oracle_conditional(double x_obs, const Grid& grid, Rng& rng) const = 0;
};

inline constexpr int kOracleHistogramDraws = 10000;

class MoGEnvironment final : public Environment {
public:
    explicit MoGEnvironment(MoGEnvParams params = {}) : params_(std::move(params)) {}
    const char* name() const override { return "mog"; }
    int num_arms() const override { return static_cast<int>(params_.mean1.size()); }
    Interval context_range() const override { return params_.context; }
    Task sample_task(Rng& rng) const override { return mog_sample_task(params_, rng); }
    ConditionalDensity oracle_conditional(double x_obs, const Grid& grid, Rng&) const override {
        return mog_oracle_conditional(params_, x_obs, grid);
    }
    const MoGEnvParams& params() const { return params_; }

private:
    MoGEnvParams params_;
};

class PartialLinearEnvironment final : public Environment {
public:
    explicit PartialLinearEnvironment(PartialLinearEnvParams params = {}) : params_(std::move(params)) {}
    const char* name() const override { return "partial_linear"; }
    int num_arms() const override { return static_cast<int>(params_.weights.rows()); }
    Interval context_range() const override { return params_.context; }
    Task sample_task(Rng& rng) const override { return partial_linear_sample_task(params_, rng); }
    ConditionalDensity oracle_conditional(double x_obs, const Grid& grid, Rng& rng) const override {
        Vector counts = Vector::Zero(grid.mu_subgrid_size());
        for (int i = 0; i < kOracleHistogramDraws; ++i) {
            const double x_c = params_.latent_mean + params_.latent_std * draw_normal(rng);
            const double x_d = draw_uniform01(rng) < sigmoid(x_obs) ? 1.0 : 0.0;
            Vector x(4);
            x << x_obs, x_c, x_d, 1.0;
            counts[detail::nearest_mu_index(grid, params_.weights * x)] += 1.0;
        }
        ConditionalDensity cond;
        cond.context_index = grid.snap_context(x_obs);
        cond.probs = counts / counts.sum();
        return cond;
    }
    const PartialLinearEnvParams& params() const { return params_; }

private:
    PartialLinearEnvParams params_;
};

class LMMEnvironment final : public Environment {
public:
    explicit LMMEnvironment(LMMEnvParams params = {}) : params_(std::move(params)) {
        params_.validate();
        theta_ = Vector::Ones(2);  // overwritten by initialize_run
    }
    const char* name() const override { return params_.aligned ? "lmm_aligned" : "lmm_misaligned"; }
    int num_arms() const override { return static_cast<int>(params_.slopes.size()); }
    Interval context_range() const override { return params_.context; }
    void initialize_run(Rng& rng) override { theta_ = lmm_sample_population(params_, rng); }
    Task sample_task(Rng& rng) const override { return lmm_sample_task(params_, theta_, rng); }
    ConditionalDensity oracle_conditional(double x_obs, const Grid& grid, Rng& rng) const override {
        Vector counts = Vector::Zero(grid.mu_subgrid_size());
        for (int i = 0; i < kOracleHistogramDraws; ++i) {
            const Vector theta = lmm_sample_population(params_, rng);
            Vector mu(params_.slopes.size());
            for (Index a = 0; a < mu.size(); ++a)
                mu[a] = params_.slopes[a] * x_obs * theta[0] + theta[1] +
                        params_.random_effect_std * draw_normal(rng);
            counts[detail::nearest_mu_index(grid, mu)] += 1.0;
        }
        ConditionalDensity cond;
        cond.context_index = grid.snap_context(x_obs);
        cond.probs = counts / counts.sum();
        return cond;
    }
    const LMMEnvParams& params() const { return params_; }
    const Vector& population_theta() const { return theta_; }

private:
    LMMEnvParams params_;
    Vector theta_;
};

}  // namespace coco

#endif  // COCO_ENVIRONMENTS_HPP
