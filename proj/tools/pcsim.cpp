// pcsim: prompt-cache simulator command line.
//
//   pcsim simulate <config.json> [--jobs N] [--seed S] [--out DIR]
//   pcsim ablate <config.json> --dimension prompt-size|tool-count [--values v ...]
//   pcsim policies
//   pcsim verify <run-dir>
//
// Exit codes: 0 success, 1 validation or configuration error, 2 I/O error.

#include <pcsim/pcsim.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

struct CommonFlags {
    unsigned jobs = 1;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

pcsim::ExperimentConfig load_with_overrides(const std::string& path, const CommonFlags& flags) {
    auto cfg = pcsim::load_config(path);
    if (flags.seed) cfg.seed = *flags.seed;
    if (flags.out) cfg.output_dir = *flags.out;
    return cfg;
}

int cmd_simulate(const std::string& config_path, const CommonFlags& flags) {
    const auto cfg = load_with_overrides(config_path, flags);
    const auto sessions = pcsim::load_sessions(cfg);
    const auto results = pcsim::run_matrix(cfg, sessions, flags.jobs);
    const auto report = pcsim::summarize_experiment(results, cfg.summary);
    pcsim::write_run(cfg.output_dir, cfg, results, report);
    pcsim::print_report_table(report, std::cout);
    std::cout << "wrote " << cfg.output_dir << "/{calls,sessions,warmup,summary}.csv, summary.json\n";
    return kExitOk;
}

int cmd_ablate(const std::string& config_path, const std::string& dimension, const std::vector<std::int64_t>& values,
               const CommonFlags& flags) {
    const auto cfg = load_with_overrides(config_path, flags);
    auto dim = pcsim::parse_dimension(dimension);
    if (!dim) throw pcsim::ConfigError("--dimension: expected prompt-size or tool-count");
    pcsim::AblationGrid grid{*dim, values.empty() ? pcsim::default_grid_values(*dim) : values};
    const auto result = pcsim::run_ablation(cfg, grid, flags.jobs);
    pcsim::write_ablation(cfg.output_dir, cfg, grid, result);
    pcsim::write_ablation_csv(result, std::cout);
    return kExitOk;
}

int cmd_verify(const std::string& run_dir) {
    const auto v = pcsim::verify_run(run_dir);
    if (v.ok) {
        std::cout << "verify: summary matches calls.csv\n";
        return kExitOk;
    }
    for (const auto& d : v.differences) std::cout << "verify: " << d << '\n';
    return kExitValidation;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Prompt-cache simulator for multi-turn tool-calling agent sessions"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string config_path;
    std::string run_dir;
    std::string dimension;
    std::vector<std::int64_t> values;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--jobs", flags.jobs, "Worker threads for independent conditions")->check(CLI::PositiveNumber);
        sub->add_option("--seed", flags.seed, "Override the master seed");
        sub->add_option("--out", flags.out, "Override the output directory");
    };

    auto* simulate = app.add_subcommand("simulate", "Run every (policy, mode) condition and write reports");
    simulate->add_option("config", config_path, "Experiment config (JSON)")->required();
    add_common(simulate);

    auto* ablate = app.add_subcommand("ablate", "Sweep prompt size or tool count");
    ablate->add_option("config", config_path, "Experiment config (JSON)")->required();
    ablate->add_option("--dimension", dimension, "prompt-size or tool-count")->required();
    ablate->add_option("--values", values, "Grid values (ascending); defaults per dimension");
    add_common(ablate);

    auto* policies = app.add_subcommand("policies", "Print the built-in provider policies");

    auto* verify = app.add_subcommand("verify", "Recompute a run's summary from its per-call CSV");
    verify->add_option("run_dir", run_dir, "Output directory of a simulate run")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (*simulate) return cmd_simulate(config_path, flags);
        if (*ablate) return cmd_ablate(config_path, dimension, values, flags);
        if (*policies) {
            pcsim::write_policy_table(pcsim::builtin_policies(), std::cout);
            return kExitOk;
        }
        if (*verify) return cmd_verify(run_dir);
    } catch (const pcsim::IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const pcsim::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    }
    return kExitValidation;
}
