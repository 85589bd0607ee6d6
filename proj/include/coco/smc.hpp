// Apache License, Version 2.0, refer to LICENSE.txt
//
// Sequential Monte Carlo over KL coefficient vectors: importance reweighting
// on new observations, ESS-triggered systematic resampling, MALA rejuvenation
// against the full accumulated posterior, and adaptive tempering.
//
// The target for a coefficient vector xi is
//   log pi(xi) = -|xi|^2 / 2 + beta * sum_users log P(H_u | x_u,obs, xi) + const,
// where each user's history likelihood is the grid-sum marginal of the
// particle's context conditional. The gradient flows analytically through the
// softmax: d log P(H_u) / d f_slice = q_u - p, with p the conditional and q_u
// its history-conditioned posterior, pulled back through the linear basis.
#ifndef COCO_SMC_HPP
#define COCO_SMC_HPP
#pragma once

#include "coco/density.hpp"
#include "coco/kl_basis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>

namespace coco {

struct SMCConfig {
    Index particles = 200;               // N
    double ess_threshold = 0.5;          // tau: resample when ESS < tau * N
    double langevin_step = 0.05;         // eta
    int max_update_rounds = 5;           // n_max in the per-observation repeat
    int mcmc_steps_per_rejuvenation = 5;
    double temper_target = 0.5;          // target ESS fraction for adaptive beta

    void validate() const {
        if (particles < 1) throw ConfigError("smc: particle count must be >= 1");
        if (!(ess_threshold > 0.0 && ess_threshold < 1.0))
            throw ConfigError("smc: ess_threshold must be in (0, 1)");
        if (!(langevin_step > 0.0)) throw ConfigError("smc: langevin_step must be > 0");
        if (max_update_rounds < 1) throw ConfigError("smc: max_update_rounds must be >= 1");
        if (mcmc_steps_per_rejuvenation < 1)
            throw ConfigError("smc: mcmc_steps_per_rejuvenation must be >= 1");
        if (!(temper_target > 0.0 && temper_target <= 1.0))
            throw ConfigError("smc: temper_target must be in (0, 1]");
    }
};

// One user's contribution to the posterior target: context slice plus the
// point likelihoods of the user's full history.
struct UserEvidence {
    Index context_index = 0;
    PointLikelihoods likelihoods;
};

// Users sorted by context index so the target evaluation computes each
// context slice softmax once per particle.
struct Dataset {
    std::vector<UserEvidence> users;
};

inline Dataset make_dataset(std::vector<UserEvidence> users) {
    std::stable_sort(users.begin(), users.end(),
                     [](const UserEvidence& a, const UserEvidence& b) {
                         return a.context_index < b.context_index;
                     });
    return Dataset{std::move(users)};
}

// The observation triggering one SMC update: the serviced user's context,
// the point likelihoods of their history before the new sample, and the
// point likelihoods of the new sample alone.
struct Observation {
    Index context_index = 0;
    PointLikelihoods history_before;
    PointLikelihoods increment;
};

inline Observation make_observation(const Grid& grid, Index context_index,
                                    const History& history_before, int arm, double reward,
                                    const NoiseModel& noise) {
    Observation obs;
    obs.context_index = context_index;
    obs.history_before = history_point_likelihoods(grid, history_before, noise);
    obs.increment = single_observation_likelihoods(grid, arm, reward, noise);
    return obs;
}

struct MetaPosterior {
    std::shared_ptr<const KLBasis> basis;
    Matrix particles;  // M x N, column s = xi^(s)
    Vector weights;    // simplex over N
    std::vector<Vector> log_density_cache;  // f^(s) over the full grid
    Rng rng;

    Index count() const { return particles.cols(); }
    Index coeff_dim() const { return particles.rows(); }
    const Vector& log_density_values(Index s) const { return log_density_cache[static_cast<std::size_t>(s)]; }
};

namespace detail {

inline void refresh_cache_all(MetaPosterior& posterior) {
    const Matrix f = posterior.basis->scaled_basis * posterior.particles;
    posterior.log_density_cache.resize(static_cast<std::size_t>(posterior.count()));
    for (Index s = 0; s < posterior.count(); ++s)
        posterior.log_density_cache[static_cast<std::size_t>(s)] = f.col(s);
}

}  // namespace detail

inline MetaPosterior init_posterior(std::shared_ptr<const KLBasis> basis, const SMCConfig& config,
                                    std::uint64_t seed) {
    config.validate();
    MetaPosterior posterior;
    posterior.rng = make_stream(seed, /*stream_tag=*/0x534d43u);  // "SMC"
    posterior.basis = std::move(basis);
    const Index m = posterior.basis->truncation();
    posterior.particles.resize(m, config.particles);
    for (Index s = 0; s < config.particles; ++s)
        for (Index i = 0; i < m; ++i) posterior.particles(i, s) = draw_normal(posterior.rng);
    posterior.weights = Vector::Constant(config.particles, 1.0 / static_cast<double>(config.particles));
    detail::refresh_cache_all(posterior);
    return posterior;
}

inline double effective_sample_size(const Vector& weights) {
    return 1.0 / weights.squaredNorm();
}

inline void reweight(MetaPosterior& posterior, const Vector& per_particle_likelihoods) {
    if (per_particle_likelihoods.size() != posterior.count())
        throw ConfigError("reweight: likelihood vector length mismatch");
    if (per_particle_likelihoods.minCoeff() < 0.0)
        throw ConfigError("reweight: negative likelihood");
    Vector w = posterior.weights.cwiseProduct(per_particle_likelihoods);
    const double total = w.sum();
    if (!(total > 0.0))
        throw EvidenceCollapseError("reweight: every particle has zero likelihood");
    posterior.weights = w / total;
}

inline void systematic_resample(MetaPosterior& posterior, Rng& rng) {
    const Index n = posterior.count();
    const double offset = draw_uniform01(rng);
    std::vector<Index> ancestors(static_cast<std::size_t>(n));
    double cum = posterior.weights[0];
    Index s = 0;
    for (Index k = 0; k < n; ++k) {
        const double position = (static_cast<double>(k) + offset) / static_cast<double>(n);
        while (position >= cum && s + 1 < n) cum += posterior.weights[++s];
        ancestors[static_cast<std::size_t>(k)] = s;
    }
    Matrix new_particles(posterior.coeff_dim(), n);
    std::vector<Vector> new_cache(static_cast<std::size_t>(n));
    for (Index k = 0; k < n; ++k) {
        new_particles.col(k) = posterior.particles.col(ancestors[static_cast<std::size_t>(k)]);
        new_cache[static_cast<std::size_t>(k)] =
            posterior.log_density_cache[static_cast<std::size_t>(ancestors[static_cast<std::size_t>(k)])];
    }
    posterior.particles = std::move(new_particles);
    posterior.log_density_cache = std::move(new_cache);
    posterior.weights.setConstant(1.0 / static_cast<double>(n));
}

struct TargetValue {
    double log_target = 0.0;
    Vector grad;
};

inline TargetValue log_target_and_grad(const Vector& xi, const KLBasis& basis,
                                       const Dataset& dataset, double beta = 1.0) {
    TargetValue out;
    out.log_target = -0.5 * xi.squaredNorm();
    out.grad = -xi;
    std::size_t i = 0;
    while (i < dataset.users.size()) {
        const Index ctx = dataset.users[i].context_index;
        const auto slice = basis.context_slice(ctx);
        const Vector f = slice * xi;
        Vector p = (f.array() - f.maxCoeff()).exp();
        p /= p.sum();
        Vector df = Vector::Zero(p.size());
        for (; i < dataset.users.size() && dataset.users[i].context_index == ctx; ++i) {
            const PointLikelihoods& g = dataset.users[i].likelihoods;
            const double evidence = p.dot(g.scaled);
            if (!(evidence > 0.0)) {
                out.log_target = -std::numeric_limits<double>::infinity();
                continue;
            }
            out.log_target += beta * (std::log(evidence) + g.log_scale);
            df += p.cwiseProduct(g.scaled) / evidence - p;
        }
        out.grad.noalias() += beta * (slice.transpose() * df);
    }
    return out;
}

// ---------------------------------------------------------------------------
// MALA
// ---------------------------------------------------------------------------

struct MalaState {
    Vector xi;
    double log_target = 0.0;
    Vector grad;
};

// One Metropolis-adjusted Langevin step. Consumes a fixed number of rng draws
// (dim normals + one uniform) whether or not the proposal is accepted, so a
// trajectory is a pure function of the initial engine state.
template <typename TargetFn>
bool mala_step_inplace(MalaState& state, TargetFn&& target, double eta, Rng& rng) {
    const Index dim = state.xi.size();
    const Vector noise = draw_standard_normal(dim, rng);
    const Vector forward_mean = state.xi + 0.5 * eta * state.grad;
    const Vector proposal = forward_mean + std::sqrt(eta) * noise;
    TargetValue prop = target(proposal);
    const double log_q_forward = -(proposal - forward_mean).squaredNorm() / (2.0 * eta);
    const double log_q_reverse =
        -(state.xi - (proposal + 0.5 * eta * prop.grad)).squaredNorm() / (2.0 * eta);
    const double log_alpha = prop.log_target - state.log_target + log_q_reverse - log_q_forward;
    const bool accept = std::log(draw_uniform01(rng)) < log_alpha;  // NaN ratio rejects
    if (accept) {
        state.xi = proposal;
        state.log_target = prop.log_target;
        state.grad = std::move(prop.grad);
    }
    return accept;
}

template <typename TargetFn>
std::pair<Vector, bool> mala_step(const Vector& xi, TargetFn&& target, double eta, Rng& rng) {
    MalaState state;
    state.xi = xi;
    TargetValue cur = target(xi);
    state.log_target = cur.log_target;
    state.grad = std::move(cur.grad);
    const bool accepted = mala_step_inplace(state, target, eta, rng);
    return {std::move(state.xi), accepted};
}

// ---------------------------------------------------------------------------
// Adaptive tempering
// ---------------------------------------------------------------------------

// Next inverse temperature: the beta for which reweighting by
// exp((beta - beta_prev) * loglik) leaves ESS at temper_target * N (within
// 1%), or 1 if even the full step keeps ESS above the target.
inline double adaptive_beta_schedule(double beta_prev, const Vector& incremental_loglik,
                                     double temper_target) {
    if (!(beta_prev >= 0.0 && beta_prev < 1.0))
        throw ConfigError("adaptive_beta_schedule: beta_prev must be in [0, 1)");
    const Index n = incremental_loglik.size();
    const double target = temper_target * static_cast<double>(n);
    const auto ess_at = [&](double beta) {
        Vector x = (beta - beta_prev) * incremental_loglik;
        Vector w = (x.array() - x.maxCoeff()).exp();
        w /= w.sum();
        return effective_sample_size(w);
    };
    if (ess_at(1.0) >= target) return 1.0;
    double lo = beta_prev, hi = 1.0;
    for (int iter = 0; iter < 100; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double ess = ess_at(mid);
        if (std::abs(ess - target) <= 0.01 * target) return mid;
        (ess > target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Per-observation SMC update (the Alg. 2 inner loop)
// ---------------------------------------------------------------------------

struct UpdateDiagnostics {
    int rounds = 0;
    int resamples = 0;
    int mala_steps = 0;
    int mala_accepts = 0;
    double ess_after = 0.0;
    bool collapse_recovered = false;

    double acceptance_rate() const {
        return mala_steps == 0 ? 0.0 : static_cast<double>(mala_accepts) / mala_steps;
    }
};

namespace detail {

// Scaled likelihood of the triggering observation under each particle's
// history-conditioned conditional. Degenerate conditionals score zero.
inline Vector observation_likelihoods(const MetaPosterior& posterior, const Observation& obs) {
    const Grid& grid = *posterior.basis->grid;
    Vector lik(posterior.count());
    parallel_for(posterior.count(), [&](Index s) {
        ConditionalDensity cond =
            conditional_from_log_values(posterior.log_density_values(s), grid, obs.context_index);
        try {
            cond = condition_on_history(cond, obs.history_before);
        } catch (const DegenerateDensityError&) {
            lik[s] = 0.0;
            return;
        }
        lik[s] = scaled_marginal_likelihood(cond, obs.increment);
    });
    return lik;
}

inline void rejuvenate(MetaPosterior& posterior, const Dataset& dataset, const SMCConfig& config,
                       int steps_per_particle, double beta, UpdateDiagnostics& diag) {
    const Index n = posterior.count();
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(n));
    for (auto& s : seeds) s = posterior.rng();
    std::vector<int> accepts(static_cast<std::size_t>(n), 0);
    parallel_for(n, [&](Index s) {
        Rng chain_rng(seeds[static_cast<std::size_t>(s)]);
        const auto target = [&](const Vector& xi) {
            return log_target_and_grad(xi, *posterior.basis, dataset, beta);
        };
        MalaState state;
        state.xi = posterior.particles.col(s);
        TargetValue cur = target(state.xi);
        state.log_target = cur.log_target;
        state.grad = std::move(cur.grad);
        for (int step = 0; step < steps_per_particle; ++step)
            accepts[static_cast<std::size_t>(s)] +=
                mala_step_inplace(state, target, config.langevin_step, chain_rng) ? 1 : 0;
        posterior.particles.col(s) = state.xi;
        posterior.log_density_cache[static_cast<std::size_t>(s)] =
            posterior.basis->scaled_basis * state.xi;
    });
    for (Index s = 0; s < n; ++s) {
        diag.mala_steps += steps_per_particle;
        diag.mala_accepts += accepts[static_cast<std::size_t>(s)];
    }
}

// Recovery from total particle death: walk the particles from the prior to
// the full posterior with an adaptive beta ladder, one MALA sweep per rung.
inline void rejuvenate_from_prior_tempered(MetaPosterior& posterior, const Dataset& dataset,
                                           const SMCConfig& config, UpdateDiagnostics& diag,
                                           int total_sweeps = 20) {
    posterior.weights.setConstant(1.0 / static_cast<double>(posterior.count()));
    double beta = 0.0;
    const auto full_loglik = [&](Vector& out) {
        out.resize(posterior.count());
        parallel_for(posterior.count(), [&](Index s) {
            out[s] = log_target_and_grad(posterior.particles.col(s), *posterior.basis, dataset, 1.0)
                         .log_target +
                     0.5 * posterior.particles.col(s).squaredNorm();
        });
    };
    Vector loglik;
    for (int sweep = 0; sweep < total_sweeps; ++sweep) {
        if (beta < 1.0) {
            full_loglik(loglik);
            const double beta_next = adaptive_beta_schedule(beta, loglik, config.temper_target);
            Vector x = (beta_next - beta) * loglik;
            Vector incr = (x.array() - x.maxCoeff()).exp();
            reweight(posterior, incr);
            systematic_resample(posterior, posterior.rng);
            beta = beta_next;
        }
        rejuvenate(posterior, dataset, config, 1, beta, diag);
    }
    diag.collapse_recovered = true;
}

}  // namespace detail

inline UpdateDiagnostics smc_update(MetaPosterior& posterior, const Observation& obs,
                                    const Dataset& dataset, const SMCConfig& config) {
    config.validate();
    UpdateDiagnostics diag;
    const double ess_floor = config.ess_threshold * static_cast<double>(posterior.count());
    bool recovered_once = false;
    for (int round = 0; round < config.max_update_rounds; ++round) {
        ++diag.rounds;
        const Vector lik = detail::observation_likelihoods(posterior, obs);
        try {
            reweight(posterior, lik);
        } catch (const EvidenceCollapseError&) {
            if (recovered_once)
                throw EvidenceCollapseError(
                    "smc_update: evidence collapse recurred after tempered recovery");
            detail::rejuvenate_from_prior_tempered(posterior, dataset, config, diag);
            recovered_once = true;
            continue;  // retry the observation once
        }
        diag.ess_after = effective_sample_size(posterior.weights);
        if (diag.ess_after >= ess_floor) break;
        systematic_resample(posterior, posterior.rng);
        ++diag.resamples;
        detail::rejuvenate(posterior, dataset, config, config.mcmc_steps_per_rejuvenation,
                           /*beta=*/1.0, diag);
        diag.ess_after = effective_sample_size(posterior.weights);
    }
    return diag;
}

// Weighted mixture of per-particle history-conditioned conditionals,
// a diagnostic view of the posterior belief about one user.
inline ConditionalDensity mixture_conditional(const MetaPosterior& posterior, Index context_index,
                                              const PointLikelihoods& history_likelihoods) {
    const Grid& grid = *posterior.basis->grid;
    Vector mix = Vector::Zero(grid.mu_subgrid_size());
    double mass = 0.0;
    for (Index s = 0; s < posterior.count(); ++s) {
        ConditionalDensity cond =
            conditional_from_log_values(posterior.log_density_values(s), grid, context_index);
        try {
            cond = condition_on_history(cond, history_likelihoods);
        } catch (const DegenerateDensityError&) {
            continue;
        }
        mix += posterior.weights[s] * cond.probs;
        mass += posterior.weights[s];
    }
    if (!(mass > 0.0)) throw DegenerateDensityError("mixture_conditional: no viable particle");
    ConditionalDensity out;
    out.context_index = context_index;
    out.probs = mix / mass;
    return out;
}

}  // namespace coco

#endif  // COCO_SMC_HPP
