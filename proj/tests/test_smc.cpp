// Apache License, Version 2.0, refer to LICENSE.txt
#include <catch2/catch_amalgamated.hpp>

#include "coco/smc.hpp"
#include "support/test_support.hpp"

#include <algorithm>
#include <cmath>

using namespace coco;
using coco_test::identity_basis;
using coco_test::make_posterior;
using coco_test::plain_likelihoods;

namespace {

std::shared_ptr<const KLBasis> small_basis() {
    auto grid = std::make_shared<const Grid>(
        build_grid(GridSpec::uniform_mu(2, {-1.0, 1.0}, 3, {{0.0, 1.0}}, 2)));
    return std::make_shared<const KLBasis>(compute_kl_basis(grid, KernelParams{0.7, 1.0}, 6));
}

Dataset random_dataset(const Grid& grid, std::mt19937_64& rng, int users, int observations) {
    const NoiseModel noise{0.3};
    std::vector<UserEvidence> evidences;
    for (int u = 0; u < users; ++u) {
        History h;
        for (int i = 0; i < observations; ++i)
            h.add(static_cast<int>(rng() % grid.arms()), 0.7 * draw_normal(rng));
        evidences.push_back({static_cast<Index>(rng() % grid.context_count()),
                             history_point_likelihoods(grid, h, noise)});
    }
    return make_dataset(std::move(evidences));
}

// standard-normal target in any dimension
TargetValue standard_normal_target(const Vector& xi) {
    return {-0.5 * xi.squaredNorm(), -xi};
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("init_posterior contract", "[smc]") {
    auto basis = small_basis();
    SMCConfig config;
    config.particles = 8;
    const MetaPosterior a = init_posterior(basis, config, 123);
    REQUIRE(a.count() == 8);
    for (Index s = 0; s < 8; ++s) REQUIRE(a.weights[s] == 1.0 / 8.0);

    const MetaPosterior b = init_posterior(basis, config, 123);
    REQUIRE(a.particles == b.particles);  // bitwise

    const MetaPosterior c = init_posterior(basis, config, 124);
    REQUIRE(a.particles != c.particles);
}

TEST_CASE("init_posterior draws standard normal coefficients", "[smc]") {
    auto grid = std::make_shared<const Grid>(build_grid(GridSpec::uniform_mu(1, {-2.0, 2.0}, 80)));
    auto basis = std::make_shared<const KLBasis>(compute_kl_basis(grid, KernelParams{0.7, 1.0}, 80));
    SMCConfig config;
    config.particles = 200;  // N * M = 16000 draws
    const MetaPosterior posterior = init_posterior(basis, config, 7);
    const double mean = posterior.particles.mean();
    REQUIRE(std::abs(mean) < 3.0 / std::sqrt(16000.0));
}

TEST_CASE("reweight closed forms", "[smc]") {
    auto basis = std::make_shared<const KLBasis>(
        identity_basis(std::make_shared<const Grid>(build_grid(GridSpec::uniform_mu(1, {0.0, 1.0}, 2)))));
    MetaPosterior posterior = make_posterior(basis, Matrix::Zero(2, 2));

    reweight(posterior, Vector::Constant(2, 3.7));
    REQUIRE(posterior.weights[0] == 0.5);
    REQUIRE(posterior.weights[1] == 0.5);

    Vector lik(2);
    lik << 1.0, 3.0;
    reweight(posterior, lik);
    REQUIRE_THAT(posterior.weights[0], Catch::Matchers::WithinAbs(0.25, 1e-15));
    REQUIRE_THAT(posterior.weights[1], Catch::Matchers::WithinAbs(0.75, 1e-15));

    lik << 0.0, 1.0;
    reweight(posterior, lik);
    REQUIRE(posterior.weights[0] == 0.0);

    REQUIRE_THROWS_AS(reweight(posterior, Vector::Zero(2)), EvidenceCollapseError);
    REQUIRE_THROWS_AS(reweight(posterior, Vector::Ones(3)), ConfigError);
}

TEST_CASE("reweight by any constant is the identity on weights", "[smc]") {
    auto basis = std::make_shared<const KLBasis>(
        identity_basis(std::make_shared<const Grid>(build_grid(GridSpec::uniform_mu(1, {0.0, 1.0}, 2)))));
    MetaPosterior posterior = make_posterior(basis, Matrix::Zero(2, 4));
    Vector w(4);
    w << 0.1, 0.2, 0.3, 0.4;
    posterior.weights = w;
    for (double c : {1e-6, 0.5, 1.0, 42.0}) {
        reweight(posterior, Vector::Constant(4, c));
        REQUIRE((posterior.weights - w).cwiseAbs().maxCoeff() < 1e-15);
    }
}

TEST_CASE("effective sample size closed forms", "[smc]") {
    REQUIRE(effective_sample_size(Vector::Constant(10, 0.1)) ==
            Catch::Approx(10.0).margin(1e-12));
    Vector one_hot = Vector::Zero(6);
    one_hot[2] = 1.0;
    REQUIRE(effective_sample_size(one_hot) == 1.0);
    Vector half(4);
    half << 0.5, 0.5, 0.0, 0.0;
    REQUIRE(effective_sample_size(half) == 2.0);
}

TEST_CASE("systematic resampling degenerate and uniform cases", "[smc]") {
    auto basis = std::make_shared<const KLBasis>(
        identity_basis(std::make_shared<const Grid>(build_grid(GridSpec::uniform_mu(1, {0.0, 1.0}, 2)))));
    Matrix particles(2, 4);
    particles << 0, 1, 2, 3,
                 0, 10, 20, 30;

    MetaPosterior posterior = make_posterior(basis, particles, 5);
    posterior.weights = Vector::Zero(4);
    posterior.weights[2] = 1.0;
    systematic_resample(posterior, posterior.rng);
    for (Index s = 0; s < 4; ++s) {
        REQUIRE(posterior.particles(0, s) == 2.0);
        REQUIRE(posterior.weights[s] == 0.25);
    }

    MetaPosterior uniform = make_posterior(basis, particles, 6);
    systematic_resample(uniform, uniform.rng);
    REQUIRE(uniform.particles == particles);  // each particle exactly once
}

TEST_CASE("systematic resampling offspring counts", "[smc]") {
    auto basis = std::make_shared<const KLBasis>(
        identity_basis(std::make_shared<const Grid>(build_grid(GridSpec::uniform_mu(1, {0.0, 1.0}, 2)))));
    Matrix particles(1, 10);
    for (Index s = 0; s < 10; ++s) particles(0, s) = static_cast<double>(s);

    MetaPosterior posterior = make_posterior(basis, particles, 9);
    Vector weights = Vector::Constant(10, 0.3 / 9.0);
    weights[0] = 0.7;

    Rng rng(2024);
    double offspring_sum = 0.0;
    const int trials = 10000;
    for (int trial = 0; trial < trials; ++trial) {
        posterior.particles = particles;
        posterior.weights = weights;
        systematic_resample(posterior, rng);
        int count = 0;
        for (Index s = 0; s < 10; ++s)
            if (posterior.particles(0, s) == 0.0) ++count;
        REQUIRE(std::abs(count - 7.0) <= 1.0);  // systematic: within +-1 of N*w
        offspring_sum += count;
    }
    REQUIRE_THAT(offspring_sum / trials, Catch::Matchers::WithinAbs(7.0, 0.1));
}

TEST_CASE("systematic resampling is unbiased for test functions", "[smc]") {
    auto basis = std::make_shared<const KLBasis>(
        identity_basis(std::make_shared<const Grid>(build_grid(GridSpec::uniform_mu(1, {0.0, 1.0}, 2)))));
    Matrix particles(1, 5);
    particles << -2, -1, 0, 1, 3;
    Vector weights(5);
    weights << 0.05, 0.3, 0.25, 0.1, 0.3;
    const auto h = [](double x) { return x * x; };
    double expected = 0.0;
    for (Index s = 0; s < 5; ++s) expected += weights[s] * h(particles(0, s));

    MetaPosterior posterior = make_posterior(basis, particles, 11);
    Rng rng(31);
    const int trials = 10000;
    std::vector<double> estimates(trials);
    for (int trial = 0; trial < trials; ++trial) {
        posterior.particles = particles;
        posterior.weights = weights;
        systematic_resample(posterior, rng);
        double est = 0.0;
        for (Index s = 0; s < 5; ++s) est += h(posterior.particles(0, s));
        estimates[static_cast<std::size_t>(trial)] = est / 5.0;
    }
    double mean = 0.0, var = 0.0;
    for (double e : estimates) mean += e;
    mean /= trials;
    for (double e : estimates) var += (e - mean) * (e - mean);
    var /= (trials - 1);
    const double se = std::sqrt(var / trials);
    REQUIRE(std::abs(mean - expected) <= 3.0 * std::max(se, 1e-12));
}

TEST_CASE("log target reduces to the prior on an empty dataset", "[smc]") {
    auto basis = small_basis();
    std::mt19937_64 rng(21);
    const Vector xi = draw_standard_normal(basis->truncation(), rng);
    const TargetValue at_xi = log_target_and_grad(xi, *basis, Dataset{});
    REQUIRE((at_xi.grad + xi).cwiseAbs().maxCoeff() < 1e-14);

    const TargetValue at_zero = log_target_and_grad(Vector::Zero(basis->truncation()), *basis, Dataset{});
    REQUIRE(at_zero.log_target == 0.0);
    REQUIRE(at_zero.grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("analytic gradient matches central finite differences", "[smc]") {
    auto basis = small_basis();
    std::mt19937_64 rng(77);
    const double h = 1e-5;
    for (int trial = 0; trial < 10; ++trial) {
        const Dataset dataset = random_dataset(*basis->grid, rng, trial % 3 + 1, 2);
        const double beta = trial % 2 == 0 ? 1.0 : 0.4;
        const Vector xi = draw_standard_normal(basis->truncation(), rng);
        const TargetValue analytic = log_target_and_grad(xi, *basis, dataset, beta);
        for (Index i = 0; i < xi.size(); ++i) {
            Vector lo = xi, hi = xi;
            lo[i] -= h;
            hi[i] += h;
            const double fd = (log_target_and_grad(hi, *basis, dataset, beta).log_target -
                               log_target_and_grad(lo, *basis, dataset, beta).log_target) /
                              (2.0 * h);
            const double denom = std::max(std::abs(analytic.grad[i]), 1e-6);
            REQUIRE(std::abs(analytic.grad[i] - fd) / denom < 1e-4);
        }
    }
}

TEST_CASE("mala accepts nearly always in the vanishing-step limit", "[smc]") {
    Rng rng(5);
    MalaState state;
    state.xi = Vector::Zero(1);
    const TargetValue init = standard_normal_target(state.xi);
    state.log_target = init.log_target;
    state.grad = init.grad;
    int accepted = 0;
    for (int step = 0; step < 1000; ++step)
        accepted += mala_step_inplace(state, standard_normal_target, 1e-6, rng) ? 1 : 0;
    REQUIRE(accepted > 990);
}

TEST_CASE("mala long-run moments match the standard normal", "[smc]") {
    Rng rng(2);
    MalaState state;
    state.xi = Vector::Zero(1);
    const TargetValue init = standard_normal_target(state.xi);
    state.log_target = init.log_target;
    state.grad = init.grad;
    const int steps = 100000;
    double sum = 0.0, sum_sq = 0.0;
    std::vector<double> thinned;
    for (int step = 0; step < steps; ++step) {
        mala_step_inplace(state, standard_normal_target, 0.05, rng);
        sum += state.xi[0];
        sum_sq += state.xi[0] * state.xi[0];
        if (step % 20 == 19) thinned.push_back(state.xi[0]);
    }
    const double mean = sum / steps;
    const double var = sum_sq / steps - mean * mean;
    REQUIRE(std::abs(mean) < 0.05);
    REQUIRE(std::abs(var - 1.0) < 0.1);

    // Kolmogorov-Smirnov against the target CDF, 1% critical value
    std::sort(thinned.begin(), thinned.end());
    const double n = static_cast<double>(thinned.size());
    double ks = 0.0;
    for (std::size_t i = 0; i < thinned.size(); ++i) {
        const double cdf = normal_cdf(thinned[i]);
        ks = std::max(ks, std::abs(cdf - static_cast<double>(i) / n));
        ks = std::max(ks, std::abs(static_cast<double>(i + 1) / n - cdf));
    }
    REQUIRE(ks < 1.628 / std::sqrt(n));
}

TEST_CASE("mala step matches an independent implementation", "[smc]") {
    // anisotropic Gaussian target, gradient -D xi
    Vector d(2);
    d << 1.0, 4.0;
    const auto target = [&](const Vector& xi) {
        return TargetValue{-0.5 * xi.dot(d.cwiseProduct(xi)), -d.cwiseProduct(xi)};
    };
    const double eta = 0.3;
    std::mt19937_64 seed_rng(17);
    for (int trial = 0; trial < 25; ++trial) {
        const std::uint64_t seed = seed_rng();
        Vector xi(2);
        xi << draw_normal(seed_rng), draw_normal(seed_rng);

        Rng rng_impl(seed);
        const auto [next, accepted] = mala_step(xi, target, eta, rng_impl);

        // independent replay: same draws, ratio coded from the MALA definition
        Rng rng_oracle(seed);
        const Vector noise = draw_standard_normal(2, rng_oracle);
        const Vector proposal = xi + 0.5 * eta * (-d.cwiseProduct(xi)) + std::sqrt(eta) * noise;
        const auto log_q = [&](const Vector& to, const Vector& from) {
            const Vector mean = from + 0.5 * eta * target(from).grad;
            return -(to - mean).squaredNorm() / (2.0 * eta);
        };
        const double log_alpha = target(proposal).log_target - target(xi).log_target +
                                 log_q(xi, proposal) - log_q(proposal, xi);
        const bool oracle_accept = std::log(draw_uniform01(rng_oracle)) < log_alpha;

        REQUIRE(accepted == oracle_accept);
        REQUIRE((next - (accepted ? proposal : xi)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("adaptive beta jumps to one for flat increments", "[smc]") {
    REQUIRE(adaptive_beta_schedule(0.0, Vector::Constant(5, -3.2), 0.5) == 1.0);
    REQUIRE(adaptive_beta_schedule(0.7, Vector::Constant(5, 1.0), 0.9) == 1.0);
}

TEST_CASE("adaptive beta matches a scalar root-finder", "[smc]") {
    Vector loglik(2);
    loglik << 0.0, -10.0;
    const double temper_target = 0.95;  // target ESS = 1.9
    const double beta = adaptive_beta_schedule(0.0, loglik, temper_target);

    // independent root-finder on ESS(beta) = 1.9 with p = 1 / (1 + e^(-10 beta))
    const auto ess = [](double b) {
        const double p = 1.0 / (1.0 + std::exp(-10.0 * b));
        return 1.0 / (p * p + (1.0 - p) * (1.0 - p));
    };
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (ess(mid) > 1.9 ? lo : hi) = mid;
    }
    const double root = 0.5 * (lo + hi);
    REQUIRE(std::abs(beta - root) < 0.01);
    REQUIRE(std::abs(ess(beta) - 1.9) <= 0.019 + 1e-12);
}

TEST_CASE("adaptive beta is monotone and bounded", "[smc]") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 30; ++trial) {
        const double beta_prev = 0.99 * draw_uniform01(rng);
        const Vector loglik = 5.0 * draw_standard_normal(8, rng);
        const double target = 0.3 + 0.6 * draw_uniform01(rng);
        const double beta = adaptive_beta_schedule(beta_prev, loglik, target);
        REQUIRE(beta > beta_prev);
        REQUIRE(beta <= 1.0);
    }
    REQUIRE_THROWS_AS(adaptive_beta_schedule(1.0, Vector::Zero(3), 0.5), ConfigError);
}

TEST_CASE("flat observation likelihood leaves the posterior untouched", "[smc]") {
    auto basis = small_basis();
    SMCConfig config;
    config.particles = 20;
    MetaPosterior posterior = init_posterior(basis, config, 3);
    const Matrix before = posterior.particles;

    Observation obs;
    obs.context_index = 0;
    obs.history_before = plain_likelihoods(Vector::Ones(basis->grid->mu_subgrid_size()));
    obs.increment = plain_likelihoods(Vector::Ones(basis->grid->mu_subgrid_size()));

    const UpdateDiagnostics diag = smc_update(posterior, obs, Dataset{}, config);
    REQUIRE(diag.rounds == 1);
    REQUIRE(diag.resamples == 0);
    REQUIRE(posterior.particles == before);
    for (Index s = 0; s < 20; ++s)
        REQUIRE_THAT(posterior.weights[s], Catch::Matchers::WithinAbs(0.05, 1e-12));
}

TEST_CASE("weights stay a simplex and ess stays in range across updates", "[smc]") {
    auto basis = small_basis();
    const Grid& grid = *basis->grid;
    SMCConfig config;
    config.particles = 30;
    MetaPosterior posterior = init_posterior(basis, config, 19);
    std::mt19937_64 rng(4);
    const NoiseModel noise{0.3};

    History history;
    std::vector<UserEvidence> evidences;
    for (int step = 0; step < 6; ++step) {
        const int arm = static_cast<int>(rng() % grid.arms());
        const double reward = 0.5 * draw_normal(rng);
        const Observation obs = make_observation(grid, 0, history, arm, reward, noise);
        history.add(arm, reward);
        evidences.assign(1, {0, history_point_likelihoods(grid, history, noise)});
        smc_update(posterior, obs, make_dataset(evidences), config);

        REQUIRE(posterior.weights.minCoeff() >= 0.0);
        REQUIRE(std::abs(posterior.weights.sum() - 1.0) < 1e-10);
        const double ess = effective_sample_size(posterior.weights);
        REQUIRE(ess >= 1.0);
        REQUIRE(ess <= 30.0 + 1e-9);
    }
}

TEST_CASE("smc posterior tracks the conjugate Normal-Normal mean", "[smc]") {
    // K = 1 arm, fine mu grid, single (absent) context; truth mu* drawn from
    // a Gaussian prior; after 20 observations the particle-mixture mean must
    // match the analytic conjugate posterior mean.
    auto grid = std::make_shared<const Grid>(build_grid(GridSpec::uniform_mu(1, {-2.0, 2.0}, 161)));
    auto basis = std::make_shared<const KLBasis>(compute_kl_basis(grid, KernelParams{0.7, 1.0}, 40));
    SMCConfig config;
    config.particles = 60;
    const NoiseModel noise{0.1};
    const double prior_mean = 0.0, prior_var = 0.25;

    for (std::uint64_t seed : {1u, 2u}) {
        Rng rng = make_stream(seed, 99);
        const double truth = prior_mean + std::sqrt(prior_var) * draw_normal(rng);
        MetaPosterior posterior = init_posterior(basis, config, seed);
        History history;
        double reward_sum = 0.0;
        const int n = 20;
        for (int i = 0; i < n; ++i) {
            const double reward = truth + noise.sigma * draw_normal(rng);
            const Observation obs = make_observation(*grid, 0, history, 0, reward, noise);
            history.add(0, reward);
            reward_sum += reward;
            std::vector<UserEvidence> evidences{{0, history_point_likelihoods(*grid, history, noise)}};
            smc_update(posterior, obs, make_dataset(evidences), config);
        }
        const ConditionalDensity mix =
            mixture_conditional(posterior, 0, history_point_likelihoods(*grid, history, noise));
        double posterior_mean = 0.0;
        for (Index l = 0; l < mix.probs.size(); ++l)
            posterior_mean += mix.probs[l] * grid->mu_value(l, 0);

        const double sigma2 = noise.sigma * noise.sigma;
        const double conjugate_mean =
            (prior_mean / prior_var + reward_sum / sigma2) / (1.0 / prior_var + n / sigma2);
        REQUIRE_THAT(posterior_mean, Catch::Matchers::WithinAbs(conjugate_mean, 0.05));
    }
}

TEST_CASE("evidence collapse triggers tempered recovery", "[smc]") {
    // Two-point grid; every particle concentrated on point 0 (the other
    // entry of the softmax bottoms out at a subnormal), and the observation
    // carries a tiny weight on point 1 only, so every per-particle
    // likelihood underflows to exactly zero.
    auto grid = std::make_shared<const Grid>(build_grid(GridSpec::uniform_mu(1, {0.0, 1.0}, 2)));
    auto basis = std::make_shared<const KLBasis>(identity_basis(grid));
    Matrix particles(2, 6);
    for (Index s = 0; s < 6; ++s) particles.col(s) << 800.0, 0.0;
    MetaPosterior posterior = make_posterior(basis, particles, 13);

    Observation obs;
    obs.context_index = 0;
    obs.history_before = plain_likelihoods(Vector::Ones(2));
    obs.increment = plain_likelihoods((Vector(2) << 0.0, 1e-20).finished());
    REQUIRE(coco::detail::observation_likelihoods(posterior, obs).maxCoeff() == 0.0);

    Vector support(2);
    support << 0.0, 1.0;
    std::vector<UserEvidence> evidences{{0, plain_likelihoods(support)}};
    SMCConfig config;
    config.particles = 6;
    config.langevin_step = 0.5;

    const UpdateDiagnostics diag = smc_update(posterior, obs, make_dataset(evidences), config);
    REQUIRE(diag.collapse_recovered);
    REQUIRE(posterior.weights.sum() == Catch::Approx(1.0).margin(1e-10));
    // recovered particles now put mass on the supported point
    const Vector lik = coco::detail::observation_likelihoods(posterior, obs);
    REQUIRE(lik.maxCoeff() > 0.0);
}

TEST_CASE("recurring evidence collapse aborts with a diagnostic", "[smc]") {
    auto grid = std::make_shared<const Grid>(build_grid(GridSpec::uniform_mu(1, {0.0, 1.0}, 2)));
    auto basis = std::make_shared<const KLBasis>(identity_basis(grid));
    MetaPosterior posterior = make_posterior(basis, Matrix::Zero(2, 4), 17);

    Observation obs;  // no outcome is possible under any particle
    obs.context_index = 0;
    obs.history_before = plain_likelihoods(Vector::Ones(2));
    obs.increment = plain_likelihoods(Vector::Zero(2));

    SMCConfig config;
    config.particles = 4;
    REQUIRE_THROWS_AS(smc_update(posterior, obs, Dataset{}, config), EvidenceCollapseError);
}
