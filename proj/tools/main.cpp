#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "ckoop/config.hpp"
#include "ckoop/errors.hpp"
#include "ckoop/pipeline.hpp"

namespace {

int fail(ckoop::ExitCode code, const std::string& msg) {
    std::cerr << "error: " << msg << '\n';
    return static_cast<int>(code);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Koopman tracking with conformal error bounds"};
    app.require_subcommand(1, 1);
    app.fallthrough();

    std::string config_path;
    std::string out_dir;
    std::string preset;
    std::uint64_t seed = 0;
    int jobs = 1;
    bool quiet = false;
    auto* seed_opt = app.add_option("--seed", seed, "Root seed (overrides experiment.seed)");
    app.add_option("--config", config_path, "Configuration file")->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "Output directory (overrides report.output_dir)");
    app.add_option("--preset", preset, "Base preset: dubins-paper or flapper-doc");
    app.add_option("--jobs", jobs, "Worker threads for rollouts")->check(CLI::PositiveNumber);
    app.add_flag("--quiet", quiet, "Suppress progress output");

    const std::pair<const char*, const char*> commands[] = {
        {"collect", "Simulate training and identification datasets"},
        {"fit", "Fit the lifted linear model"},
        {"synth", "Synthesize the contraction metric and gain"},
        {"calibrate", "Calibrate conformal quantiles"},
        {"run", "Run seeded closed-loop rollouts"},
        {"validate", "Check logs against the bounds"},
        {"report", "Render plots and the markdown report"},
        {"all", "Run every stage in order"},
        {"show-config", "Print the effective configuration"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ckoop::ExitCode::Config);
    }

    try {
        ckoop::PipelineContext ctx;
        ctx.config = config_path.empty() ? ckoop::preset_config(preset.empty() ? "dubins-paper" : preset)
                                         : ckoop::load_config_file(config_path, preset);
        if (*seed_opt) ctx.config.seed = seed;
        if (!out_dir.empty()) ctx.config.report.output_dir = out_dir;
        ctx.config.validate();
        ctx.out_dir = ctx.config.report.output_dir;
        ctx.jobs = jobs;
        ctx.log = quiet ? nullptr : &std::cerr;

        const std::string cmd = app.get_subcommands().front()->get_name();
        if (cmd == "show-config") {
            std::cout << ckoop::serialize_config(ctx.config);
        } else if (cmd == "collect") {
            ckoop::cmd_collect(ctx);
        } else if (cmd == "fit") {
            ckoop::cmd_fit(ctx);
        } else if (cmd == "synth") {
            ckoop::cmd_synth(ctx);
        } else if (cmd == "calibrate") {
            ckoop::cmd_calibrate(ctx);
        } else if (cmd == "run") {
            ckoop::cmd_run(ctx);
        } else if (cmd == "validate") {
            (void)ckoop::cmd_validate(ctx);
        } else if (cmd == "report") {
            ckoop::cmd_report(ctx);
        } else if (cmd == "all") {
            ckoop::cmd_all(ctx);
        }
    } catch (const ckoop::Error& e) {
        return fail(e.exit_code(), e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        return fail(ckoop::ExitCode::Io, e.what());
    } catch (const std::exception& e) {
        return fail(ckoop::ExitCode::Numerical, e.what());
    }
    return 0;
}
