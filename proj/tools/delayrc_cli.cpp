#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "delayrc/delayrc.hpp"

namespace {

void add_common_options(CLI::App* cmd, std::string& config_path, std::string& out_dir,
                        std::string& engine, long long& seed, int& threads) {
    cmd->add_option("config", config_path, "experiment config file")->required();
    cmd->add_option("--out", out_dir, "output directory (default: config, then $DELAYRC_OUT)");
    cmd->add_option("--seed", seed, "master seed override");
    cmd->add_option("--engine", engine, "engine override")
        ->check(CLI::IsMember({"dde", "map", "elm"}));
    cmd->add_option("--threads", threads, "sweep worker threads (default: all cores)");
}

delayrc::RunOptions make_options(const std::string& out_dir, const std::string& engine,
                                 long long seed, int threads) {
    delayrc::RunOptions opt;
    if (!out_dir.empty()) opt.out_dir = out_dir;
    if (seed >= 0) opt.seed = static_cast<std::uint64_t>(seed);
    if (engine == "dde") opt.engine = delayrc::EngineMode::ContinuousDDE;
    if (engine == "map") opt.engine = delayrc::EngineMode::DiscreteMap;
    if (engine == "elm") opt.engine = delayrc::EngineMode::ELM;
    opt.threads = threads;
    return opt;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"delayrc: delay-based reservoir computing simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir, engine;
    long long seed = -1;
    int threads = 0;

    auto* run_cmd = app.add_subcommand("run", "run an experiment and write results.csv");
    add_common_options(run_cmd, config_path, out_dir, engine, seed, threads);
    auto* sweep_cmd = app.add_subcommand("sweep", "run a parameter-sweep config (alias of run)");
    add_common_options(sweep_cmd, config_path, out_dir, engine, seed, threads);
    auto* mc_cmd = app.add_subcommand("mc", "memory-capacity report over the config grid");
    add_common_options(mc_cmd, config_path, out_dir, engine, seed, threads);
    auto* validate_cmd = app.add_subcommand("validate", "validate a config and print regime notes");
    validate_cmd->add_option("config", config_path, "experiment config file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate_cmd->parsed())
            return delayrc::validate_command(config_path, std::cout, std::cerr);
        const delayrc::RunOptions opt = make_options(out_dir, engine, seed, threads);
        const bool mc_mode = mc_cmd->parsed();
        return delayrc::run_experiment(config_path, opt, std::cout, std::cerr, mc_mode);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
