// Apache License, Version 2.0, refer to LICENSE.txt
//
// Simulation harness: batched recruitment, round-robin service, per-step
// meta-posterior updates, a paired oracle-TS run over the same task stream
// (common random numbers for the environment, independent policy streams),
// and a fixed-evaluation-batch protocol replayed against frozen posteriors.
#ifndef COCO_HARNESS_HPP
#define COCO_HARNESS_HPP
#pragma once

#include "coco/acquisition.hpp"
#include "coco/environments.hpp"

#include <chrono>
#include <deque>
#include <map>
#include <memory>
#include <optional>

namespace coco {

enum class PolicyKind { npm_ts, gids, ind_ts, oracle_ts };

inline const char* policy_name(PolicyKind p) {
    switch (p) {
        case PolicyKind::npm_ts: return "npm_ts";
        case PolicyKind::gids: return "gids";
        case PolicyKind::ind_ts: return "ind_ts";
        case PolicyKind::oracle_ts: return "oracle_ts";
    }
    return "?";
}

inline PolicyKind parse_policy(const std::string& name) {
    if (name == "npm_ts") return PolicyKind::npm_ts;
    if (name == "gids") return PolicyKind::gids;
    if (name == "ind_ts") return PolicyKind::ind_ts;
    if (name == "oracle_ts") return PolicyKind::oracle_ts;
    throw ConfigError("unknown policy '" + name + "'");
}

struct GridOptions {
    double mu_min = -2.0;
    double mu_max = 2.0;
    int mu_points = 20;
    int context_points = 10;
    std::optional<Interval> context_range;  // defaults to the environment's range
    Index max_points = kDefaultMaxGridPoints;
};

struct GIDSOptions {
    int reward_grid_points = 21;
    double ratio_epsilon = 1e-8;
    int eg_steps = 200;
    double eg_learning_rate = 0.5;
};

struct EvalProtocol {
    int batch_size = 20;   // 0 disables evaluation
    int pull_rounds = 10;
    int every_rounds = 1;
};

struct EnvironmentConfig {
    std::string name = "mog";  // mog | partial_linear | lmm_aligned | lmm_misaligned
    MoGEnvParams mog;
    PartialLinearEnvParams partial_linear;
    LMMEnvParams lmm;

    std::unique_ptr<Environment> build() const {
        if (name == "mog") return std::make_unique<MoGEnvironment>(mog);
        if (name == "partial_linear") return std::make_unique<PartialLinearEnvironment>(partial_linear);
        if (name == "lmm_aligned" || name == "lmm_misaligned") {
            LMMEnvParams p = lmm;
            p.aligned = (name == "lmm_aligned");
            return std::make_unique<LMMEnvironment>(p);
        }
        throw ConfigError("unknown environment '" + name + "'");
    }
};

struct SimConfig {
    EnvironmentConfig environment;
    PolicyKind policy = PolicyKind::npm_ts;
    int t_user = 5;
    int batch_size = 5;          // m
    int recruitment_rounds = 30; // total batches, including the initial one
    GridOptions grid;
    KernelParams kernel;
    Index kl_truncation = 80;    // M
    SMCConfig smc;
    GIDSOptions gids;
    double noise_sigma = 0.1;
    std::uint64_t seed = 0;
    int update_every = 1;
    EvalProtocol eval;

    void validate() const {
        if (t_user < 1 || batch_size < 1 || recruitment_rounds < 1)
            throw ConfigError("sim: t_user, batch_size and recruitment_rounds must be >= 1");
        if (update_every < 1) throw ConfigError("sim: update_every must be >= 1");
        if (eval.batch_size < 0 || eval.pull_rounds < 1 || eval.every_rounds < 1)
            throw ConfigError("sim: invalid eval protocol");
        if (kl_truncation < 1) throw ConfigError("sim: kl_truncation must be >= 1");
        kernel.validate();
        smc.validate();
        if (!(noise_sigma > 0.0)) throw ConfigError("sim: noise_sigma must be > 0");
    }

    GridSpec grid_spec(const Environment& env) const {
        const Interval ctx = grid.context_range.value_or(env.context_range());
        return GridSpec::uniform_mu(env.num_arms(), {grid.mu_min, grid.mu_max}, grid.mu_points,
                                    {ctx}, grid.context_points);
    }
};

struct StepRecord {
    long t = 0;
    int user_id = 0;
    int arm = 0;
    double reward = 0.0;       // realized
    Vector true_mu;            // environment truth, for regret accounting only
    double regret_expected = 0.0;  // max_a mu - mu[arm]
    double regret_realized = 0.0;  // max_a mu - reward
};

struct RegretLedger {
    std::vector<StepRecord> steps;
};

struct RoundSnapshot {
    int round = 0;
    long steps_so_far = 0;
    double ess = 0.0;
    double mala_acceptance = 0.0;
    int smc_rounds = 0;
    int resamples = 0;
};

struct Trajectory {
    std::vector<RoundSnapshot> snapshots;
    long step_count = 0;
};

struct EvalPoint {
    int round = 0;
    double avg_cum_bayes_regret = 0.0;
};

inline Vector bayes_regret_series(const RegretLedger& ledger) {
    Vector series(static_cast<Index>(ledger.steps.size()));
    double cum = 0.0;
    for (std::size_t i = 0; i < ledger.steps.size(); ++i) {
        cum += ledger.steps[i].regret_expected;
        series[static_cast<Index>(i)] = cum;
    }
    return series;
}

inline Vector multi_task_regret_series(const RegretLedger& ledger, const RegretLedger& oracle) {
    if (ledger.steps.size() != oracle.steps.size())
        throw PairingError("multi_task_regret: runs have different lengths");
    Vector series(static_cast<Index>(ledger.steps.size()));
    double cum = 0.0;
    for (std::size_t i = 0; i < ledger.steps.size(); ++i) {
        const StepRecord& a = ledger.steps[i];
        const StepRecord& o = oracle.steps[i];
        if (a.t != o.t || a.user_id != o.user_id)
            throw PairingError("multi_task_regret: schedule mismatch at step " + std::to_string(a.t));
        cum += a.true_mu[o.arm] - a.true_mu[a.arm];
        series[static_cast<Index>(i)] = cum;
    }
    return series;
}

// One evaluation pass: fresh histories for every evaluation user, pull_rounds
// TS interactions against a frozen prior, expected-regret accounting.
template <typename SelectorFn>
double evaluate_batch(const std::vector<Task>& eval_tasks, const NoiseModel& noise,
                      int pull_rounds, const Grid& grid, SelectorFn&& select, Rng& rng) {
    if (eval_tasks.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t j = 0; j < eval_tasks.size(); ++j) {
        const Task& task = eval_tasks[j];
        UserRecord user;
        user.id = static_cast<int>(j);
        user.x_obs = task.x_obs;
        user.context_index = grid.snap_context(task.x_obs);
        const double best = task.mu.maxCoeff();
        for (int round = 0; round < pull_rounds; ++round) {
            const int arm = select(user, rng);
            total += best - task.mu[arm];
            user.history.add(arm, observe_reward(task, arm, noise, rng));
        }
    }
    return total / static_cast<double>(eval_tasks.size());
}

struct RunDiagnostics {
    double mean_ess = 0.0;
    double mala_acceptance = 0.0;
    long smc_updates = 0;
    long resamples = 0;
    double seconds = 0.0;
};

struct SimResult {
    Trajectory trajectory;
    RegretLedger ledger;
    RegretLedger oracle_ledger;
    std::vector<EvalPoint> eval;
    Vector mtr_series;  // paired against the oracle run
    RunDiagnostics diagnostics;
};

namespace detail {

// rng stream tags (arbitrary distinct constants)
inline constexpr std::uint64_t kTagEnv = 1;
inline constexpr std::uint64_t kTagEvalUsers = 2;
inline constexpr std::uint64_t kTagAlgoPolicy = 3;
inline constexpr std::uint64_t kTagAlgoReward = 4;
inline constexpr std::uint64_t kTagOraclePolicy = 5;
inline constexpr std::uint64_t kTagOracleReward = 6;
inline constexpr std::uint64_t kTagSmcSeed = 7;
inline constexpr std::uint64_t kTagOracleCond = 100;
inline constexpr std::uint64_t kTagEvalEpisode = 10000;

// Oracle conditionals cached per snapped context index, each computed with
// its own derived stream so the cache fill order cannot matter.
class OracleCache {
public:
    OracleCache(const Environment& env, const Grid& grid, std::uint64_t seed)
        : env_(env), grid_(grid), seed_(seed) {}

    const ConditionalDensity& at(Index context_index) {
        auto it = cache_.find(context_index);
        if (it == cache_.end()) {
            Rng rng = make_stream(seed_, kTagOracleCond + static_cast<std::uint64_t>(context_index));
            const double x = grid_.context_dims() == 0
                                 ? 0.0
                                 : grid_.axis_values().back()[context_index];
            it = cache_.emplace(context_index, env_.oracle_conditional(x, grid_, rng)).first;
        }
        return it->second;
    }

private:
    const Environment& env_;
    const Grid& grid_;
    std::uint64_t seed_;
    std::map<Index, ConditionalDensity> cache_;
};

struct PassState {
    std::vector<UserRecord> users;
    std::vector<Task> tasks;                // aligned with users by id
    std::vector<Vector> log_history_g;      // per user, log point likelihoods of full history
    std::vector<int> active;                // ids in recruitment order
};

struct PassResult {
    RegretLedger ledger;
    std::vector<RoundSnapshot> snapshots;
    std::vector<EvalPoint> eval;
    RunDiagnostics diagnostics;
};

inline PointLikelihoods point_likelihoods_from_log(const Vector& log_g) {
    PointLikelihoods out;
    out.log_scale = log_g.maxCoeff();
    out.scaled = (log_g.array() - out.log_scale).exp();
    return out;
}

}  // namespace detail

inline SimResult run_simulation(const SimConfig& config) {
    config.validate();
    const auto started = std::chrono::steady_clock::now();

    const auto env = config.environment.build();
    const NoiseModel noise{config.noise_sigma};
    const GridSpec spec = config.grid_spec(*env);
    auto grid = std::make_shared<const Grid>(build_grid(spec, config.grid.max_points));
    if (config.kl_truncation > grid->size())
        throw ConfigError("sim: kl_truncation exceeds the number of grid points");

    Rng env_rng = make_stream(config.seed, detail::kTagEnv);
    env->initialize_run(env_rng);

    const int total_users = config.recruitment_rounds * config.batch_size;
    std::vector<Task> tasks;
    tasks.reserve(static_cast<std::size_t>(total_users));
    for (int i = 0; i < total_users; ++i) tasks.push_back(env->sample_task(env_rng));

    std::vector<Task> eval_tasks;
    if (config.eval.batch_size > 0) {
        Rng eval_rng = make_stream(config.seed, detail::kTagEvalUsers);
        for (int i = 0; i < config.eval.batch_size; ++i)
            eval_tasks.push_back(env->sample_task(eval_rng));
    }

    detail::OracleCache oracle_cache(*env, *grid, config.seed);

    const bool needs_posterior =
        config.policy == PolicyKind::npm_ts || config.policy == PolicyKind::gids;
    std::shared_ptr<const KLBasis> basis;
    if (needs_posterior)
        basis = std::make_shared<const KLBasis>(
            compute_kl_basis(grid, config.kernel, config.kl_truncation));

    GIDSConfig gids_config;
    gids_config.reward_grid = default_reward_grid(*grid, noise, config.gids.reward_grid_points);
    gids_config.ratio_epsilon = config.gids.ratio_epsilon;
    gids_config.eg_steps = config.gids.eg_steps;
    gids_config.eg_learning_rate = config.gids.eg_learning_rate;

    const auto run_pass = [&](PolicyKind policy, std::uint64_t policy_tag, std::uint64_t reward_tag,
                              bool with_eval) -> detail::PassResult {
        detail::PassResult result;
        Rng policy_rng = make_stream(config.seed, policy_tag);
        Rng reward_rng = make_stream(config.seed, reward_tag);
        const bool use_smc = policy == PolicyKind::npm_ts || policy == PolicyKind::gids;

        std::optional<MetaPosterior> posterior;
        if (use_smc) posterior = init_posterior(basis, config.smc, make_stream(config.seed, detail::kTagSmcSeed)());

        detail::PassState state;
        std::vector<Observation> pending;
        int recruited_batches = 0;
        const auto recruit = [&]() {
            for (int i = 0; i < config.batch_size; ++i) {
                const int id = static_cast<int>(state.users.size());
                const Task& task = tasks[static_cast<std::size_t>(id)];
                UserRecord user;
                user.id = id;
                user.x_obs = task.x_obs;
                user.context_index = grid->snap_context(task.x_obs);
                state.users.push_back(std::move(user));
                state.tasks.push_back(task);
                state.log_history_g.push_back(Vector::Zero(grid->mu_subgrid_size()));
                state.active.push_back(id);
            }
            ++recruited_batches;
        };
        const auto build_dataset = [&]() {
            std::vector<UserEvidence> evidences;
            for (const UserRecord& u : state.users)
                if (!u.history.empty())
                    evidences.push_back(
                        {u.context_index,
                         detail::point_likelihoods_from_log(
                             state.log_history_g[static_cast<std::size_t>(u.id)])});
            return make_dataset(std::move(evidences));
        };
        const auto select_arm = [&](const UserRecord& user) -> int {
            switch (policy) {
                case PolicyKind::npm_ts:
                    return npm_ts_select(*posterior, user, noise, policy_rng);
                case PolicyKind::gids:
                    return gids_select(*posterior, user, noise, gids_config, policy_rng);
                case PolicyKind::ind_ts:
                    return ind_ts_select(user, *grid, noise, policy_rng);
                case PolicyKind::oracle_ts:
                    return oracle_ts_select(oracle_cache.at(user.context_index), user, *grid, noise,
                                            policy_rng);
            }
            throw ConfigError("unreachable policy");
        };
        const auto run_eval = [&](int round) {
            if (!with_eval || eval_tasks.empty() || (round % config.eval.every_rounds) != 0) return;
            // Same stream at every snapshot: evaluation points differ only
            // through the posterior, not through fresh evaluation noise.
            Rng eval_rng = make_stream(config.seed, detail::kTagEvalEpisode);
            const auto selector = [&](const UserRecord& u, Rng& r) -> int {
                switch (policy) {
                    case PolicyKind::npm_ts:
                    case PolicyKind::gids:
                        return npm_ts_select(*posterior, u, noise, r);
                    case PolicyKind::ind_ts:
                        return ind_ts_select(u, *grid, noise, r);
                    case PolicyKind::oracle_ts:
                        return oracle_ts_select(oracle_cache.at(u.context_index), u, *grid, noise, r);
                }
                throw ConfigError("unreachable policy");
            };
            result.eval.push_back(
                {round, evaluate_batch(eval_tasks, noise, config.eval.pull_rounds, *grid, selector,
                                       eval_rng)});
        };

        recruit();
        long t = 0;
        int round = 0;
        long ess_samples = 0;
        double ess_sum = 0.0;
        long mala_steps = 0, mala_accepts = 0;
        run_eval(0);
        while (!state.active.empty()) {
            ++round;
            RoundSnapshot snap;
            snap.round = round;
            const std::vector<int> roster = state.active;
            for (int uid : roster) {
                ++t;
                UserRecord& user = state.users[static_cast<std::size_t>(uid)];
                const Task& task = state.tasks[static_cast<std::size_t>(uid)];
                try {
                    if (use_smc && !pending.empty() && (t - 1) % config.update_every == 0) {
                        const Dataset dataset = build_dataset();
                        for (const Observation& obs : pending) {
                            const UpdateDiagnostics diag = smc_update(*posterior, obs, dataset, config.smc);
                            snap.smc_rounds += diag.rounds;
                            snap.resamples += diag.resamples;
                            mala_steps += diag.mala_steps;
                            mala_accepts += diag.mala_accepts;
                            ess_sum += diag.ess_after;
                            ++ess_samples;
                        }
                        pending.clear();
                    }
                    const int arm = select_arm(user);
                    const double reward = observe_reward(task, arm, noise, reward_rng);

                    StepRecord record;
                    record.t = t;
                    record.user_id = uid;
                    record.arm = arm;
                    record.reward = reward;
                    record.true_mu = task.mu;
                    const double best = task.mu.maxCoeff();
                    record.regret_expected = best - task.mu[arm];
                    record.regret_realized = best - reward;
                    result.ledger.steps.push_back(std::move(record));

                    if (use_smc)
                        pending.push_back(
                            make_observation(*grid, user.context_index, user.history, arm, reward, noise));
                    for (Index l = 0; l < grid->mu_subgrid_size(); ++l)
                        state.log_history_g[static_cast<std::size_t>(uid)][l] +=
                            gaussian_log_pdf(reward, grid->mu_value(l, arm), noise.sigma);
                    user.history.add(arm, reward);
                    ++user.interactions;
                    if (user.interactions >= config.t_user) {
                        user.active = false;
                        state.active.erase(std::find(state.active.begin(), state.active.end(), uid));
                    }
                } catch (const NumericalError& err) {
                    throw NumericalError("t=" + std::to_string(t) + " user=" + std::to_string(uid) +
                                         ": " + err.what());
                }
            }
            if (recruited_batches < config.recruitment_rounds) recruit();
            snap.steps_so_far = t;
            snap.ess = use_smc ? effective_sample_size(posterior->weights) : 0.0;
            snap.mala_acceptance =
                mala_steps > 0 ? static_cast<double>(mala_accepts) / mala_steps : 0.0;
            result.snapshots.push_back(snap);
            run_eval(round);
        }
        result.diagnostics.mean_ess = ess_samples > 0 ? ess_sum / ess_samples : 0.0;
        result.diagnostics.mala_acceptance =
            mala_steps > 0 ? static_cast<double>(mala_accepts) / mala_steps : 0.0;
        result.diagnostics.smc_updates = ess_samples;
        return result;
    };

    detail::PassResult algo =
        run_pass(config.policy, detail::kTagAlgoPolicy, detail::kTagAlgoReward, true);
    detail::PassResult oracle =
        run_pass(PolicyKind::oracle_ts, detail::kTagOraclePolicy, detail::kTagOracleReward, false);

    SimResult out;
    out.trajectory.snapshots = std::move(algo.snapshots);
    out.trajectory.step_count = static_cast<long>(algo.ledger.steps.size());
    out.ledger = std::move(algo.ledger);
    out.oracle_ledger = std::move(oracle.ledger);
    out.eval = std::move(algo.eval);
    out.mtr_series = multi_task_regret_series(out.ledger, out.oracle_ledger);
    out.diagnostics = algo.diagnostics;
    out.diagnostics.resamples = 0;
    for (const auto& s : out.trajectory.snapshots) out.diagnostics.resamples += s.resamples;
    out.diagnostics.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return out;
}

}  // namespace coco

#endif  // COCO_HARNESS_HPP
