// bpac: command-line front end for the risk-controlled router.
#include "commands.hpp"

#include "CLI11.hpp"

#include <functional>
#include <iostream>

namespace {

using bpac::cli::Options;

void add_common(CLI::App* cmd, Options& o, bool synthetic) {
    cmd->add_option("--config", o.config_path, "router config JSON (defaults when omitted)");
    if (synthetic) cmd->add_option("--spec", o.spec_path, "synthetic stream spec JSON (uniform-linear when omitted)");
    cmd->add_option("--horizon", o.horizon, "number of steps T");
    cmd->add_option("--seeds", o.seeds, "comma-separated seeds")->delimiter(',');
    cmd->add_option("--n-seeds", o.n_seeds, "number of consecutive seeds");
    cmd->add_option("--base-seed", o.base_seed, "first seed for --n-seeds");
    cmd->add_option("--out", o.out_dir, "output directory");
    cmd->add_option("--method", o.methods, "BPac, ONaive or IpsHoeff (comma-separated where allowed)")->delimiter(',');
    cmd->add_option("--emit-wealth-every", o.emit_wealth_every, "log-wealth snapshot period; 0 disables");
    cmd->add_option("--hoeff-variant", o.hoeff_variant, "per-point or union");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bpac: risk-controlled routing between a cheap and an expensive model"};
    app.require_subcommand(1);
    Options o;
    std::function<int(const Options&)> run;

    auto* sim = app.add_subcommand("simulate", "run synthetic replications");
    add_common(sim, o, true);
    sim->callback([&] { run = bpac::cli::cmd_simulate; });

    auto* replay = app.add_subcommand("replay", "replay a recorded trace");
    add_common(replay, o, false);
    replay->add_option("--trace", o.trace_path, "trace CSV")->required();
    replay->callback([&] { run = bpac::cli::cmd_replay; });

    auto* sweep = app.add_subcommand("sweep", "simulate over a list of tolerances");
    add_common(sweep, o, true);
    sweep->add_option("--epsilons", o.epsilons, "comma-separated tolerances")->delimiter(',');
    sweep->callback([&] { run = bpac::cli::cmd_sweep; });

    auto* compare = app.add_subcommand("compare", "run several methods on shared streams");
    add_common(compare, o, true);
    compare->callback([&] { run = bpac::cli::cmd_compare; });

    auto* mc = app.add_subcommand("mc-safety", "Monte Carlo violation frequency");
    add_common(mc, o, true);
    mc->callback([&] { run = bpac::cli::cmd_mc_safety; });

    auto* ablate = app.add_subcommand("ablate", "hyperparameter ablations");
    add_common(ablate, o, true);
    ablate->add_option("--preset", o.preset, "lambda, rho or twarm")->required();
    ablate->callback([&] { run = bpac::cli::cmd_ablate; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cout << bpac::cli::json{{"error", bpac::cli::error_document("UsageError", e.what(), 2)}}.dump(2) << "\n";
        return bpac::cli::kValidation;
    }

    try {
        return run(o);
    } catch (...) {
        auto [code, doc] = bpac::cli::describe_current_exception();
        std::cout << doc.dump(2) << "\n";
        return code;
    }
}
