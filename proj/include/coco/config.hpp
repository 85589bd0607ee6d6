// Apache License, Version 2.0, refer to LICENSE.txt
//
// JSON <-> SimConfig. Every field is addressable, all keys optional with the
// defaults built into the structs, and unknown keys are rejected with the
// offending path so typos fail loudly instead of being ignored.
#ifndef COCO_CONFIG_HPP
#define COCO_CONFIG_HPP
#pragma once

#include "coco/harness.hpp"

#include <json.hpp>

#include <fstream>
#include <initializer_list>
#include <set>

namespace coco {

namespace detail {

using Json = nlohmann::json;

inline void require_object(const Json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError("config: '" + path + "' must be an object");
}

inline void reject_unknown_keys(const Json& j, const std::string& path,
                                std::initializer_list<const char*> allowed) {
    const std::set<std::string> allowed_set(allowed.begin(), allowed.end());
    for (const auto& item : j.items())
        if (!allowed_set.count(item.key()))
            throw ConfigError("config: unknown key '" + (path.empty() ? item.key() : path + "." + item.key()) + "'");
}

template <typename T>
void read(const Json& j, const char* key, const std::string& path, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const Json::exception&) {
        throw ConfigError("config: field '" + (path.empty() ? key : path + "." + key) +
                          "' has the wrong type");
    }
}

inline Vector read_vector(const Json& j, const char* key, const std::string& path, Vector fallback) {
    if (!j.contains(key)) return fallback;
    std::vector<double> v;
    read(j, key, path, v);
    Vector out(static_cast<Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Index>(i)] = v[i];
    return out;
}

inline Matrix read_matrix(const Json& j, const char* key, const std::string& path, Matrix fallback) {
    if (!j.contains(key)) return fallback;
    std::vector<std::vector<double>> rows;
    read(j, key, path, rows);
    if (rows.empty()) throw ConfigError("config: field '" + path + "." + key + "' must be non-empty");
    Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(rows[0].size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows[0].size())
            throw ConfigError("config: field '" + path + "." + key + "' must be rectangular");
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            out(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
    }
    return out;
}

inline std::vector<double> to_std(const Vector& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace detail

inline SimConfig parse_config(const nlohmann::json& j) {
    using detail::read;
    detail::require_object(j, "");
    detail::reject_unknown_keys(j, "", {"environment", "policy", "t_user", "batch_size",
                                        "recruitment_rounds", "grid", "kernel", "kl_truncation",
                                        "smc", "gids", "noise_sigma", "seed", "update_every",
                                        "eval"});
    SimConfig c;

    if (j.contains("environment")) {
        const auto& env = j.at("environment");
        detail::require_object(env, "environment");
        detail::reject_unknown_keys(env, "environment",
                                    {"name", "mean1", "mean2", "std_base", "std_slope", "weights",
                                     "latent_mean", "latent_std", "slopes", "theta_variance",
                                     "random_effect_std"});
        read(env, "name", "environment", c.environment.name);
        c.environment.mog.mean1 = detail::read_vector(env, "mean1", "environment", c.environment.mog.mean1);
        c.environment.mog.mean2 = detail::read_vector(env, "mean2", "environment", c.environment.mog.mean2);
        read(env, "std_base", "environment", c.environment.mog.std_base);
        read(env, "std_slope", "environment", c.environment.mog.std_slope);
        c.environment.partial_linear.weights =
            detail::read_matrix(env, "weights", "environment", c.environment.partial_linear.weights);
        read(env, "latent_mean", "environment", c.environment.partial_linear.latent_mean);
        read(env, "latent_std", "environment", c.environment.partial_linear.latent_std);
        c.environment.lmm.slopes = detail::read_vector(env, "slopes", "environment", c.environment.lmm.slopes);
        read(env, "theta_variance", "environment", c.environment.lmm.theta_variance);
        read(env, "random_effect_std", "environment", c.environment.lmm.random_effect_std);
    }

    if (j.contains("policy")) {
        std::string name;
        read(j, "policy", "", name);
        c.policy = parse_policy(name);
    }
    read(j, "t_user", "", c.t_user);
    read(j, "batch_size", "", c.batch_size);
    read(j, "recruitment_rounds", "", c.recruitment_rounds);

    if (j.contains("grid")) {
        const auto& g = j.at("grid");
        detail::require_object(g, "grid");
        detail::reject_unknown_keys(g, "grid", {"mu_min", "mu_max", "mu_points", "context_points",
                                                "context_min", "context_max", "max_points"});
        read(g, "mu_min", "grid", c.grid.mu_min);
        read(g, "mu_max", "grid", c.grid.mu_max);
        read(g, "mu_points", "grid", c.grid.mu_points);
        read(g, "context_points", "grid", c.grid.context_points);
        if (g.contains("context_min") != g.contains("context_max"))
            throw ConfigError("config: grid.context_min and grid.context_max must be given together");
        if (g.contains("context_min")) {
            Interval range;
            read(g, "context_min", "grid", range.lo);
            read(g, "context_max", "grid", range.hi);
            c.grid.context_range = range;
        }
        std::int64_t max_points = c.grid.max_points;
        read(g, "max_points", "grid", max_points);
        c.grid.max_points = max_points;
    }

    if (j.contains("kernel")) {
        const auto& k = j.at("kernel");
        detail::require_object(k, "kernel");
        detail::reject_unknown_keys(k, "kernel", {"lengthscale", "signal_variance"});
        read(k, "lengthscale", "kernel", c.kernel.lengthscale);
        read(k, "signal_variance", "kernel", c.kernel.signal_variance);
    }

    std::int64_t truncation = c.kl_truncation;
    read(j, "kl_truncation", "", truncation);
    c.kl_truncation = truncation;

    if (j.contains("smc")) {
        const auto& s = j.at("smc");
        detail::require_object(s, "smc");
        detail::reject_unknown_keys(s, "smc",
                                    {"particles", "ess_threshold", "langevin_step",
                                     "max_update_rounds", "mcmc_steps_per_rejuvenation",
                                     "temper_target"});
        std::int64_t particles = c.smc.particles;
        read(s, "particles", "smc", particles);
        c.smc.particles = particles;
        read(s, "ess_threshold", "smc", c.smc.ess_threshold);
        read(s, "langevin_step", "smc", c.smc.langevin_step);
        read(s, "max_update_rounds", "smc", c.smc.max_update_rounds);
        read(s, "mcmc_steps_per_rejuvenation", "smc", c.smc.mcmc_steps_per_rejuvenation);
        read(s, "temper_target", "smc", c.smc.temper_target);
    }

    if (j.contains("gids")) {
        const auto& g = j.at("gids");
        detail::require_object(g, "gids");
        detail::reject_unknown_keys(g, "gids", {"reward_grid_points", "ratio_epsilon", "eg_steps",
                                                "eg_learning_rate"});
        read(g, "reward_grid_points", "gids", c.gids.reward_grid_points);
        read(g, "ratio_epsilon", "gids", c.gids.ratio_epsilon);
        read(g, "eg_steps", "gids", c.gids.eg_steps);
        read(g, "eg_learning_rate", "gids", c.gids.eg_learning_rate);
    }

    read(j, "noise_sigma", "", c.noise_sigma);
    read(j, "seed", "", c.seed);
    read(j, "update_every", "", c.update_every);

    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        detail::require_object(e, "eval");
        detail::reject_unknown_keys(e, "eval", {"batch_size", "pull_rounds", "every_rounds"});
        read(e, "batch_size", "eval", c.eval.batch_size);
        read(e, "pull_rounds", "eval", c.eval.pull_rounds);
        read(e, "every_rounds", "eval", c.eval.every_rounds);
    }

    c.validate();
    c.environment.build();  // surfaces an unknown environment name now
    return c;
}

inline nlohmann::json config_to_json(const SimConfig& c) {
    using detail::to_std;
    nlohmann::json env{{"name", c.environment.name}};
    if (c.environment.name == "mog") {
        env["mean1"] = to_std(c.environment.mog.mean1);
        env["mean2"] = to_std(c.environment.mog.mean2);
        env["std_base"] = c.environment.mog.std_base;
        env["std_slope"] = c.environment.mog.std_slope;
    } else if (c.environment.name == "partial_linear") {
        std::vector<std::vector<double>> rows;
        for (Index r = 0; r < c.environment.partial_linear.weights.rows(); ++r) {
            rows.emplace_back();
            for (Index col = 0; col < c.environment.partial_linear.weights.cols(); ++col)
                rows.back().push_back(c.environment.partial_linear.weights(r, col));
        }
        env["weights"] = rows;
        env["latent_mean"] = c.environment.partial_linear.latent_mean;
        env["latent_std"] = c.environment.partial_linear.latent_std;
    } else {
        env["slopes"] = to_std(c.environment.lmm.slopes);
        env["theta_variance"] = c.environment.lmm.theta_variance;
        env["random_effect_std"] = c.environment.lmm.random_effect_std;
    }
    return nlohmann::json{
        {"environment", env},
        {"policy", policy_name(c.policy)},
        {"t_user", c.t_user},
        {"batch_size", c.batch_size},
        {"recruitment_rounds", c.recruitment_rounds},
        {"grid",
         {{"mu_min", c.grid.mu_min},
          {"mu_max", c.grid.mu_max},
          {"mu_points", c.grid.mu_points},
          {"context_points", c.grid.context_points}}},
        {"kernel",
         {{"lengthscale", c.kernel.lengthscale}, {"signal_variance", c.kernel.signal_variance}}},
        {"kl_truncation", c.kl_truncation},
        {"smc",
         {{"particles", c.smc.particles},
          {"ess_threshold", c.smc.ess_threshold},
          {"langevin_step", c.smc.langevin_step},
          {"max_update_rounds", c.smc.max_update_rounds},
          {"mcmc_steps_per_rejuvenation", c.smc.mcmc_steps_per_rejuvenation},
          {"temper_target", c.smc.temper_target}}},
        {"gids",
         {{"reward_grid_points", c.gids.reward_grid_points},
          {"ratio_epsilon", c.gids.ratio_epsilon},
          {"eg_steps", c.gids.eg_steps},
          {"eg_learning_rate", c.gids.eg_learning_rate}}},
        {"noise_sigma", c.noise_sigma},
        {"seed", c.seed},
        {"update_every", c.update_every},
        {"eval",
         {{"batch_size", c.eval.batch_size},
          {"pull_rounds", c.eval.pull_rounds},
          {"every_rounds", c.eval.every_rounds}}}};
}

inline SimConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot read '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: invalid JSON in '" + path + "': " + e.what());
    }
    return parse_config(j);
}

}  // namespace coco

#endif  // COCO_CONFIG_HPP
