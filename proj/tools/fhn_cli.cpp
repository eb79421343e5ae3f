// Batch command-line surface: one subcommand per experiment, deterministic
// artifacts under --out, machine-readable summary.json per run.
//
// Exit codes: 0 success, 2 config error, 3 numerical divergence, 4 I/O error.

#include "fhnet/dataio.hpp"
#include "fhnet/errors.hpp"
#include "fhnet/experiments.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

namespace {

using fhnet::experiments::RunConfig;
using fhnet::experiments::RunContext;

struct CliOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    bool dry_run = false;
    int threads = 1;
};

RunConfig resolve_config(const CliOptions& opts) {
    RunConfig cfg = opts.config_path.empty() ? RunConfig{} : fhnet::io::load_config(opts.config_path);
    if (opts.seed) cfg.seed = *opts.seed;
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    return cfg;
}

using Driver = std::function<nlohmann::json(const RunConfig&, const std::string&, const RunContext&)>;

int run_command(const std::string& name, const CliOptions& opts, const Driver& driver) {
    try {
        const RunConfig cfg = resolve_config(opts);
        if (opts.dry_run) {
            std::cout << "config ok: experiment=" << cfg.experiment << " seed=" << cfg.seed
                      << " hash=" << fhnet::io::fnv1a_hex(fhnet::io::serialize_config(cfg))
                      << "\n";
            return 0;
        }
        RunContext ctx{opts.threads};
        const auto t0 = std::chrono::steady_clock::now();
        const nlohmann::json metrics = driver(cfg, cfg.out_dir, ctx);
        fhnet::experiments::write_summary(cfg, name, metrics, cfg.out_dir);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << metrics.dump(2) << "\n";
        // Wall clock goes to stderr only, so result files stay byte-identical
        // across reruns of the same config and seed.
        std::cerr << "[fhnet] " << name << " finished in " << secs << " s; artifacts in "
                  << cfg.out_dir << "\n";
        return 0;
    } catch (const fhnet::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const fhnet::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const fhnet::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Diffusive FitzHugh-Nagumo networks: simulation, equilibrium-propagation "
                 "training, and layer-wise Hamiltonian inference"};
    app.require_subcommand(1);

    CliOptions opts;
    app.add_option("--config", opts.config_path, "JSON run configuration");
    app.add_option("--seed", opts.seed, "Override the config seed");
    app.add_option("--out", opts.out_dir, "Override the output directory");
    app.add_flag("--dry-run", opts.dry_run, "Validate the config and exit");
    app.add_option("--threads", opts.threads, "Worker thread cap for probe columns")
        ->check(CLI::PositiveNumber);

    namespace ex = fhnet::experiments;
    struct Sub {
        const char* name;
        const char* help;
        Driver driver;
    };
    const Sub subs[] = {
        {"simulate", "Integrate the time dynamics and export the trajectory",
         [](const RunConfig& c, const std::string& o, const RunContext&) {
             return ex::simulate_run(c, o);
         }},
        {"relax", "Relax to a steady state and export it",
         [](const RunConfig& c, const std::string& o, const RunContext&) {
             return ex::relax_run(c, o);
         }},
        {"selfadjoint-check", "Response-matrix symmetry check on random diffusive nets",
         [](const RunConfig& c, const std::string& o, const RunContext& ctx) {
             return ex::selfadjoint_run(c, o, ctx);
         }},
        {"gradcheck", "EqProp update vs finite-difference equilibrium-loss gradients",
         [](const RunConfig& c, const std::string& o, const RunContext&) {
             return ex::gradcheck_run(c, o);
         }},
        {"train", "Train a layered FHN net with centered-difference EqProp",
         [](const RunConfig& c, const std::string& o, const RunContext&) {
             return ex::train_run(c, o);
         }},
        {"eval", "Evaluate a checkpoint on a dataset",
         [](const RunConfig& c, const std::string& o, const RunContext&) {
             return ex::eval_run(c, o);
         }},
        {"ham-infer", "Layer-wise Hamiltonian forward inference on a residual net",
         [](const RunConfig& c, const std::string& o, const RunContext&) {
             return ex::ham_infer_run(c, o);
         }},
        {"ebm-infer", "Layer-wise (v, p) recursion vs relaxed EBM equilibria",
         [](const RunConfig& c, const std::string& o, const RunContext&) {
             return ex::ebm_infer_run(c, o);
         }},
        {"fig2", "Recursion-vs-time-dynamics depth comparison on a residual net",
         [](const RunConfig& c, const std::string& o, const RunContext&) {
             return ex::fig2_run(c, o);
         }},
        {"export-plot-data", "Derive plotting-ready CSVs from a completed run directory",
         [](const RunConfig& c, const std::string& o, const RunContext&) {
             return ex::export_plot_data(c, o);
         }},
    };

    int exit_code = 0;
    for (const auto& sub : subs) {
        CLI::App* cmd = app.add_subcommand(sub.name, sub.help);
        cmd->fallthrough();  // let --config etc. after the subcommand reach the parent
        cmd->callback([&, driver = sub.driver, name = std::string(sub.name)]() {
            exit_code = run_command(name, opts, driver);
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    return exit_code;
}
