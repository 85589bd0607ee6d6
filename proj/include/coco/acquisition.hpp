// Apache License, Version 2.0, refer to LICENSE.txt
//
// Arm selection policies: Thompson sampling against the nonparametric
// meta-posterior (NPM-TS), global information-directed sampling (GIDS),
// independent per-user TS, and TS with the environment's true prior.
#ifndef COCO_ACQUISITION_HPP
#define COCO_ACQUISITION_HPP
#pragma once

#include "coco/smc.hpp"
#include "coco/user.hpp"

#include <functional>
#include <iostream>
#include <numeric>
#include <optional>

namespace coco {

struct ArmDistribution {
    Vector probs;
};

struct GIDSConfig {
    Vector reward_grid;           // hypothetical reward outcomes R
    double ratio_epsilon = 1e-8;  // added to EIG denominators
    int eg_steps = 200;
    double eg_learning_rate = 0.5;

    void validate() const {
        if (reward_grid.size() == 0) throw ConfigError("gids: reward grid must be non-empty");
        if (!(ratio_epsilon > 0.0)) throw ConfigError("gids: ratio_epsilon must be > 0");
        if (eg_steps < 1 || !(eg_learning_rate > 0.0))
            throw ConfigError("gids: invalid exponentiated-gradient settings");
    }
};

// Default outcome set: 21 equally spaced values spanning the grid's mu range
// padded by three noise standard deviations on each side.
inline Vector default_reward_grid(const Grid& grid, const NoiseModel& noise, int count = 21) {
    double lo = grid.mu_value(0, 0), hi = lo;
    for (Index l = 0; l < grid.mu_subgrid_size(); ++l)
        for (int a = 0; a < grid.arms(); ++a) {
            lo = std::min(lo, grid.mu_value(l, a));
            hi = std::max(hi, grid.mu_value(l, a));
        }
    return linspace(lo - 3.0 * noise.sigma, hi + 3.0 * noise.sigma, count);
}

// Hook for rare-path warnings (selector fallbacks). Tests may replace it.
inline std::function<void(const std::string&)>& warning_handler() {
    static std::function<void(const std::string&)> handler = [](const std::string& msg) {
        std::cerr << "[coco] warning: " << msg << "\n";
    };
    return handler;
}

// Arm with the highest mu coordinate at one mu-subgrid point; ties go to the
// lowest arm index, so each point belongs to exactly one arm.
inline int best_arm_at_point(const Grid& grid, Index l_mu) {
    int best = 0;
    double best_value = grid.mu_value(l_mu, 0);
    for (int a = 1; a < grid.arms(); ++a) {
        const double v = grid.mu_value(l_mu, a);
        if (v > best_value) {
            best_value = v;
            best = a;
        }
    }
    return best;
}

inline ArmDistribution arm_optimality_probs(const ConditionalDensity& cond, const Grid& grid) {
    ArmDistribution dist;
    dist.probs = Vector::Zero(grid.arms());
    for (Index l = 0; l < cond.probs.size(); ++l)
        dist.probs[best_arm_at_point(grid, l)] += cond.probs[l];
    return dist;
}

// Expected regret of each arm under a conditional density:
// delta_a = sum_l pi_l (max_a' mu_l[a'] - mu_l[a]).
inline Vector gids_per_arm_regret(const ConditionalDensity& cond, const Grid& grid) {
    Vector delta = Vector::Zero(grid.arms());
    for (Index l = 0; l < cond.probs.size(); ++l) {
        double best = grid.mu_value(l, 0);
        for (int a = 1; a < grid.arms(); ++a) best = std::max(best, grid.mu_value(l, a));
        for (int a = 0; a < grid.arms(); ++a)
            delta[a] += cond.probs[l] * (best - grid.mu_value(l, a));
    }
    return delta;
}

namespace detail {

// History-conditioned conditional of particle s for this user, or nullopt if
// the particle puts no mass where the history has support.
inline std::optional<ConditionalDensity> particle_user_conditional(const MetaPosterior& posterior,
                                                                   Index s, const UserRecord& user,
                                                                   const PointLikelihoods& history_g) {
    const Grid& grid = *posterior.basis->grid;
    ConditionalDensity cond =
        conditional_from_log_values(posterior.log_density_values(s), grid, user.context_index);
    try {
        return condition_on_history(cond, history_g);
    } catch (const DegenerateDensityError&) {
        return std::nullopt;
    }
}

// Sample a particle, falling back to the remaining particles in descending
// weight order when the sampled one is degenerate for this user.
template <typename TryParticle>
std::optional<Index> sample_viable_particle(const MetaPosterior& posterior, Rng& rng,
                                            TryParticle&& viable) {
    const Index sampled = draw_categorical(posterior.weights, rng);
    if (viable(sampled)) return sampled;
    std::vector<Index> order(static_cast<std::size_t>(posterior.count()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        return posterior.weights[a] > posterior.weights[b];
    });
    for (Index s : order) {
        if (s == sampled) continue;
        if (viable(s)) return s;
    }
    return std::nullopt;
}

inline int uniform_arm(const Grid& grid, Rng& rng) {
    return static_cast<int>(draw_categorical(
        Vector::Constant(grid.arms(), 1.0 / static_cast<double>(grid.arms())), rng));
}

inline double entropy(const Vector& w) {
    double h = 0.0;
    for (Index i = 0; i < w.size(); ++i)
        if (w[i] > 0.0) h -= w[i] * std::log(w[i]);
    return h;
}

}  // namespace detail

// Variant taking precomputed history point likelihoods.
inline int npm_ts_select(const MetaPosterior& posterior, const UserRecord& user,
                         const PointLikelihoods& g, Rng& rng) {
    const Grid& grid = *posterior.basis->grid;
    std::optional<ConditionalDensity> chosen;
    const auto viable = [&](Index s) {
        chosen = detail::particle_user_conditional(posterior, s, user, g);
        return chosen.has_value();
    };
    if (!detail::sample_viable_particle(posterior, rng, viable)) {
        warning_handler()("npm_ts_select: no viable particle for user " + std::to_string(user.id) +
                          ", selecting a uniform random arm");
        return detail::uniform_arm(grid, rng);
    }
    const ArmDistribution dist = arm_optimality_probs(*chosen, grid);
    return static_cast<int>(draw_categorical(dist.probs, rng));
}

inline int npm_ts_select(const MetaPosterior& posterior, const UserRecord& user,
                         const NoiseModel& noise, Rng& rng) {
    return npm_ts_select(
        posterior, user, history_point_likelihoods(*posterior.basis->grid, user.history, noise),
        rng);
}

// Expected information gain of every arm, measured as expected reduction in
// particle-weight entropy over the hypothetical outcome set. The outcome
// distribution is the sampled particle's predictive mass renormalized over R.
inline Vector gids_all_arm_eig(const MetaPosterior& posterior, const UserRecord& user,
                               const PointLikelihoods& g, const NoiseModel& noise,
                               const GIDSConfig& config, Index sampled_particle) {
    const Grid& grid = *posterior.basis->grid;
    const Index n = posterior.count();
    const Index lmu = grid.mu_subgrid_size();
    const Index nr = config.reward_grid.size();

    Matrix conditionals(lmu, n);  // column s' = q^(s') (zero if degenerate)
    for (Index s = 0; s < n; ++s) {
        auto q = detail::particle_user_conditional(posterior, s, user, g);
        conditionals.col(s) = q ? q->probs : Vector::Zero(lmu);
    }

    const double base_entropy = detail::entropy(posterior.weights);
    Vector eig(grid.arms());
    for (int a = 0; a < grid.arms(); ++a) {
        Matrix gauss(nr, lmu);
        for (Index r = 0; r < nr; ++r)
            for (Index l = 0; l < lmu; ++l)
                gauss(r, l) = std::exp(gaussian_log_pdf(config.reward_grid[r], grid.mu_value(l, a),
                                                        noise.sigma));
        const Matrix predictive = gauss * conditionals;  // nr x n, entry (r, s') = L^(s')(r | a)

        Vector outcome = predictive.col(sampled_particle);
        const double outcome_mass = outcome.sum();
        if (!(outcome_mass > 0.0)) {
            eig[a] = 0.0;
            continue;
        }
        outcome /= outcome_mass;

        double expected_posterior_entropy = 0.0;
        for (Index r = 0; r < nr; ++r) {
            Vector updated = posterior.weights.cwiseProduct(predictive.row(r).transpose());
            const double total = updated.sum();
            if (!(total > 0.0)) continue;  // outcome impossible under every particle
            updated /= total;
            expected_posterior_entropy += outcome[r] * detail::entropy(updated);
        }
        eig[a] = std::max(0.0, base_entropy - expected_posterior_entropy);
    }
    return eig;
}

inline Vector gids_all_arm_eig(const MetaPosterior& posterior, const UserRecord& user,
                               const NoiseModel& noise, const GIDSConfig& config,
                               Index sampled_particle) {
    return gids_all_arm_eig(
        posterior, user, history_point_likelihoods(*posterior.basis->grid, user.history, noise),
        noise, config, sampled_particle);
}

inline double gids_per_arm_eig(const MetaPosterior& posterior, const UserRecord& user, int arm,
                               const NoiseModel& noise, const GIDSConfig& config,
                               Index sampled_particle) {
    return gids_all_arm_eig(posterior, user, noise, config, sampled_particle)[arm];
}

// Minimize (pi . delta)^2 / (pi . eig + epsilon) over the simplex by
// exponentiated gradient from a uniform start. A zero-regret arm attains the
// optimum value 0 directly; among those the one with the largest EIG wins.
inline ArmDistribution gids_policy(const Vector& delta, const Vector& eig, const GIDSConfig& config) {
    config.validate();
    const Index k = delta.size();
    ArmDistribution policy;
    for (Index a = 0; a < k; ++a) {
        if (delta[a] == 0.0) {
            Index pick = a;
            for (Index b = a + 1; b < k; ++b)
                if (delta[b] == 0.0 && eig[b] > eig[pick]) pick = b;
            policy.probs = Vector::Zero(k);
            policy.probs[pick] = 1.0;
            return policy;
        }
    }
    policy.probs = Vector::Constant(k, 1.0 / static_cast<double>(k));
    for (int step = 0; step < config.eg_steps; ++step) {
        const double num = policy.probs.dot(delta);
        const double den = policy.probs.dot(eig) + config.ratio_epsilon;
        const Vector grad = (2.0 * num * den) / (den * den) * delta - (num * num) / (den * den) * eig;
        Vector scores = -config.eg_learning_rate * grad;
        scores.array() -= scores.maxCoeff();  // shift cancels in the normalization
        policy.probs = policy.probs.cwiseProduct(scores.array().exp().matrix());
        policy.probs /= policy.probs.sum();
    }
    return policy;
}

inline int gids_select(const MetaPosterior& posterior, const UserRecord& user,
                       const PointLikelihoods& g, const NoiseModel& noise,
                       const GIDSConfig& config, Rng& rng) {
    const Grid& grid = *posterior.basis->grid;
    std::optional<ConditionalDensity> chosen;
    const auto viable = [&](Index s) {
        chosen = detail::particle_user_conditional(posterior, s, user, g);
        return chosen.has_value();
    };
    const auto particle = detail::sample_viable_particle(posterior, rng, viable);
    if (!particle) {
        warning_handler()("gids_select: no viable particle for user " + std::to_string(user.id) +
                          ", selecting a uniform random arm");
        return detail::uniform_arm(grid, rng);
    }
    const Vector delta = gids_per_arm_regret(*chosen, grid);
    const Vector eig = gids_all_arm_eig(posterior, user, g, noise, config, *particle);
    const ArmDistribution policy = gids_policy(delta, eig, config);
    return static_cast<int>(draw_categorical(policy.probs, rng));
}

inline int gids_select(const MetaPosterior& posterior, const UserRecord& user,
                       const NoiseModel& noise, const GIDSConfig& config, Rng& rng) {
    return gids_select(
        posterior, user, history_point_likelihoods(*posterior.basis->grid, user.history, noise),
        noise, config, rng);
}

// Independent per-user Thompson sampling: uniform prior over the mu-subgrid,
// conditioned on this user's own history only.
inline int ind_ts_select(const UserRecord& user, const Grid& grid, const NoiseModel& noise,
                         Rng& rng) {
    const ConditionalDensity prior = uniform_conditional(grid, user.context_index);
    const PointLikelihoods g = history_point_likelihoods(grid, user.history, noise);
    const ConditionalDensity post = condition_on_history(prior, g);
    const ArmDistribution dist = arm_optimality_probs(post, grid);
    return static_cast<int>(draw_categorical(dist.probs, rng));
}

// Thompson sampling with the environment's discretized true conditional.
inline int oracle_ts_select(const ConditionalDensity& oracle_conditional, const UserRecord& user,
                            const Grid& grid, const NoiseModel& noise, Rng& rng) {
    const PointLikelihoods g = history_point_likelihoods(grid, user.history, noise);
    ConditionalDensity post;
    try {
        post = condition_on_history(oracle_conditional, g);
    } catch (const DegenerateDensityError&) {
        warning_handler()("oracle_ts_select: history outside the oracle support for user " +
                          std::to_string(user.id) + ", falling back to the prior conditional");
        post = oracle_conditional;
    }
    const ArmDistribution dist = arm_optimality_probs(post, grid);
    return static_cast<int>(draw_categorical(dist.probs, rng));
}

// Diagnostic only: the marginal best-arm distribution averaged over the
// particle posterior. Selection never uses this.
inline ArmDistribution marginal_best_arm_distribution(const MetaPosterior& posterior,
                                                      const UserRecord& user,
                                                      const NoiseModel& noise) {
    const Grid& grid = *posterior.basis->grid;
    const PointLikelihoods g = history_point_likelihoods(grid, user.history, noise);
    Vector probs = Vector::Zero(grid.arms());
    double mass = 0.0;
    for (Index s = 0; s < posterior.count(); ++s) {
        auto q = detail::particle_user_conditional(posterior, s, user, g);
        if (!q) continue;
        probs += posterior.weights[s] * arm_optimality_probs(*q, grid).probs;
        mass += posterior.weights[s];
    }
    if (!(mass > 0.0)) throw DegenerateDensityError("marginal_best_arm_distribution: no viable particle");
    ArmDistribution dist;
    dist.probs = probs / mass;
    return dist;
}

}  // namespace coco

#endif  // COCO_ACQUISITION_HPP
