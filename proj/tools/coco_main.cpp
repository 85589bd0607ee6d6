// Apache License, Version 2.0, refer to LICENSE.txt
//
// coco: multi-task bandit simulator CLI.
//   run       -- simulate one or many seeds, write trajectory/eval CSVs + summary.json
//   evaluate  -- simulate, but write only the evaluation series + summary.json
//   validate  -- check a config file and exit
#include "coco/coco.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

struct SeedRange {
    std::uint64_t first = 0;
    std::uint64_t last = 0;
    bool given = false;
};

SeedRange parse_seed_range(const std::string& text) {
    SeedRange range;
    range.given = true;
    const auto dots = text.find("..");
    try {
        if (dots == std::string::npos) {
            range.first = range.last = std::stoull(text);
        } else {
            range.first = std::stoull(text.substr(0, dots));
            range.last = std::stoull(text.substr(dots + 2));
        }
    } catch (const std::exception&) {
        throw coco::ConfigError("invalid --seeds value '" + text + "', expected A or A..B");
    }
    if (range.last < range.first)
        throw coco::ConfigError("invalid --seeds range '" + text + "': end before start");
    return range;
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double stddev(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

int run_command(const std::string& config_path, const SeedRange& seeds, const std::string& out_dir,
                const std::string& policy_override, int update_every_override,
                bool write_trajectories) {
    coco::SimConfig config = coco::load_config(config_path);
    if (!policy_override.empty()) config.policy = coco::parse_policy(policy_override);
    if (update_every_override > 0) config.update_every = update_every_override;

    std::vector<std::uint64_t> seed_list;
    if (seeds.given)
        for (std::uint64_t s = seeds.first; s <= seeds.last; ++s) seed_list.push_back(s);
    else
        seed_list.push_back(config.seed);

    std::filesystem::create_directories(out_dir);

    nlohmann::json summary;
    summary["config"] = coco::config_to_json(config);
    summary["policy"] = coco::policy_name(config.policy);
    summary["seeds"] = seed_list;
    if (config.update_every != 1) summary["update_every_deviation"] = config.update_every;

    std::vector<double> final_bayes, final_mtr, oracle_final_bayes;
    std::vector<double> ess_means, acceptance_rates;
    double total_seconds = 0.0;
    for (std::uint64_t seed : seed_list) {
        coco::SimConfig run_config = config;
        run_config.seed = seed;
        const coco::SimResult result = coco::run_simulation(run_config);

        const std::filesystem::path seed_dir =
            std::filesystem::path(out_dir) / ("seed_" + std::to_string(seed));
        std::filesystem::create_directories(seed_dir);
        if (write_trajectories) {
            std::ofstream traj(seed_dir / "trajectory.csv");
            coco::write_trajectory_csv(traj, result);
        }
        std::ofstream eval(seed_dir / "eval.csv");
        coco::write_eval_csv(eval, result.eval);

        const coco::Vector bayes = coco::bayes_regret_series(result.ledger);
        const coco::Vector oracle_bayes = coco::bayes_regret_series(result.oracle_ledger);
        final_bayes.push_back(bayes[bayes.size() - 1]);
        final_mtr.push_back(result.mtr_series[result.mtr_series.size() - 1]);
        oracle_final_bayes.push_back(oracle_bayes[oracle_bayes.size() - 1]);
        ess_means.push_back(result.diagnostics.mean_ess);
        acceptance_rates.push_back(result.diagnostics.mala_acceptance);
        total_seconds += result.diagnostics.seconds;
        std::cout << "seed " << seed << ": final bayes regret " << bayes[bayes.size() - 1]
                  << ", final multi-task regret " << result.mtr_series[result.mtr_series.size() - 1]
                  << "\n";
    }

    summary["final_bayes_regret"] = {{"mean", mean(final_bayes)}, {"sd", stddev(final_bayes)}};
    summary["final_multi_task_regret"] = {{"mean", mean(final_mtr)}, {"sd", stddev(final_mtr)}};
    summary["oracle_final_bayes_regret"] = {{"mean", mean(oracle_final_bayes)},
                                            {"sd", stddev(oracle_final_bayes)}};
    summary["diagnostics"] = {{"mean_ess", mean(ess_means)},
                              {"mala_acceptance", mean(acceptance_rates)},
                              {"runtime_seconds", total_seconds}};
    std::ofstream summary_out(std::filesystem::path(out_dir) / "summary.json");
    summary_out << summary.dump(2) << "\n";
    std::cout << "wrote " << out_dir << "/summary.json\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CoCo-Bandits: multi-task contextual bandit simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "results", seeds_text, policy_override;
    int update_every = 0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file")->required();
        cmd->add_option("--seeds", seeds_text, "seed or inclusive range A..B");
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--policy", policy_override, "override the config's policy");
        cmd->add_option("--update-every", update_every, "meta-posterior update period override");
    };
    CLI::App* run = app.add_subcommand("run", "simulate and write trajectory + eval CSVs");
    add_common(run);
    CLI::App* evaluate = app.add_subcommand("evaluate", "simulate and write the eval series only");
    add_common(evaluate);
    CLI::App* validate = app.add_subcommand("validate", "check a config file");
    validate->add_option("--config", config_path, "JSON config file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (validate->parsed()) {
            coco::load_config(config_path);
            std::cout << "config ok: " << config_path << "\n";
            return 0;
        }
        const SeedRange seeds = seeds_text.empty() ? SeedRange{} : parse_seed_range(seeds_text);
        return run_command(config_path, seeds, out_dir, policy_override, update_every,
                           run->parsed());
    } catch (const coco::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
