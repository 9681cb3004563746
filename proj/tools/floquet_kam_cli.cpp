#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "floquet_kam/cli.hpp"

namespace fk = floquet_kam;
namespace cli = floquet_kam::cli;

int main(int argc, char** argv) {
    CLI::App app{"KAM-type diagonalization of driven quantum systems"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<double> omega;
    std::string out;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file");
        sub->add_option("--set", overrides, "override, key=value (dotted keys reach into nested objects)");
        sub->add_option("--out", out, "output path");
    };

    auto* constants = app.add_subcommand("constants", "report eps_star, delta_star and the smallness tests");
    auto* run = app.add_subcommand("run", "iterate at one frequency and write a JSON report");
    auto* sweep = app.add_subcommand("sweep", "stage-wise resonance exclusion over the frequency window");
    auto* oracle = app.add_subcommand("oracle", "compare with a dense diagonalization");
    auto* dump = app.add_subcommand("model-dump", "write the model operator as JSON");
    for (auto* sub : {constants, run, sweep, oracle, dump}) add_common(sub);
    for (auto* sub : {run, oracle}) sub->add_option("--omega", omega, "driving frequency");

    CLI11_PARSE(app, argc, argv);

    try {
        if (omega) overrides.push_back("omega=" + cli::fmt(*omega));
        if (!out.empty()) overrides.push_back("out=\"" + out + "\"");
        const cli::RunConfig cfg = cli::load_config(config_path, overrides);
        if (*constants) return cli::cmd_constants(cfg, std::cout);
        if (*run) return cli::cmd_run(cfg, std::cout);
        if (*sweep) return cli::cmd_sweep(cfg, std::cout);
        if (*oracle) return cli::cmd_oracle(cfg, std::cout);
        if (*dump) return cli::cmd_model_dump(cfg, std::cout);
    } catch (const fk::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return cli::kConfigError;
    } catch (const fk::DivergenceError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return cli::kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::kToleranceFailure;
    }
    return cli::kOk;
}
