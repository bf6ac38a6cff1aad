#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "ckoop/csv.hpp"
#include "ckoop/errors.hpp"
#include "ckoop/pipeline.hpp"
#include "ckoop/svg.hpp"

namespace fs = std::filesystem;

namespace ckoop {

namespace {

std::vector<double> column_values(const csv::Table& t, std::string_view name) {
    const auto c = t.column(name);
    std::vector<double> v;
    v.reserve(t.rows.size());
    for (const auto& row : t.rows) v.push_back(parse_double(row[c]));
    return v;
}

std::string stem_of(const std::string& file) { return fs::path(file).stem().string(); }

}  // namespace

void cmd_report(const PipelineContext& ctx) {
    const auto& c = ctx.config;
    const std::string summary_path = ctx.path("validation/summary.csv");
    if (!fs::exists(summary_path)) throw IoError("validation summary not found: " + summary_path);
    const csv::Table summary = csv::read_file(summary_path);
    const csv::Table index = csv::read_file(ctx.path("logs/index.csv"));

    std::ostringstream md;
    md << "# Tracking report: " << c.name << "\n\n";
    md << "Preset `" << c.preset << "`, root seed " << c.seed << ", alpha " << format_double(c.conformal.alpha)
       << ", beta " << format_double(c.conformal.beta) << ", horizon " << c.conformal.horizon << ".\n\n";
    md << "## Fraction within bound\n\n";
    md << "| controller | bound | runs | fraction_within_bound | fraction_runs_all_within | target | pass |\n";
    md << "|---|---|---|---|---|---|---|\n";
    for (const auto& row : summary.rows) {
        md << "| " << row[summary.column("controller")] << " | " << row[summary.column("bound")] << " | "
           << row[summary.column("runs")] << " | " << row[summary.column("fraction_within_bound")] << " | "
           << row[summary.column("fraction_runs_all_within")] << " | " << row[summary.column("target")] << " | "
           << row[summary.column("pass")] << " |\n";
    }
    const std::string cov_path = ctx.path("validation/coverage.csv");
    if (fs::exists(cov_path)) {
        const csv::Table cov = csv::read_file(cov_path);
        if (!cov.rows.empty()) {
            md << "\n## Held-out coverage\n\n| score | q | delta | coverage | target | pass |\n|---|---|---|---|---|---|\n";
            for (const auto& row : cov.rows) {
                md << "| " << row[cov.column("score")] << " | " << row[cov.column("q")] << " | "
                   << row[cov.column("delta")] << " | " << row[cov.column("coverage")] << " | "
                   << row[cov.column("target")] << " | " << row[cov.column("pass")] << " |\n";
            }
        }
    }

    md << "\n## Runs\n\n| log | controller | seed | saturated steps | terminal position error |";
    if (c.report.plots) md << " plots |";
    md << "\n|---|---|---|---|---|" << (c.report.plots ? "---|" : "") << "\n";
    if (c.report.plots) fs::remove_all(ctx.path("report/plots"));
    for (const auto& row : index.rows) {
        const std::string file = row[index.column("file")];
        const std::string stem = stem_of(file);
        md << "| " << file << " | " << row[index.column("controller")] << " | " << row[index.column("seed")] << " | "
           << row[index.column("saturated_steps")] << " | " << row[index.column("terminal_pos_err")] << " |";
        if (c.report.plots) {
            const csv::Table log = csv::read_file(ctx.path("logs/" + file));
            const auto k = column_values(log, "k");
            svg::LineChart err;
            err.title = stem + ": position error vs state bound";
            err.x_label = "step k";
            err.y_label = "error";
            err.series.push_back({"position error", k, column_values(log, "pos_err"), "#1f77b4"});
            err.series.push_back({"state bound", k, column_values(log, "state_bound"), "#d62728"});
            csv::write_text_file(ctx.path("report/plots/" + stem + "_error.svg"), svg::render(err));

            svg::LineChart xy;
            xy.title = stem + ": XY trajectory";
            xy.x_label = "x";
            xy.y_label = "y";
            xy.equal_aspect = true;
            const double r = c.rollout.radius;
            std::vector<double> rx;
            std::vector<double> ry;
            for (int i = 0; i <= 200; ++i) {
                const double phi = 2.0 * std::numbers::pi * i / 200.0;
                rx.push_back(r * std::sin(phi));
                ry.push_back(r * (1.0 - std::cos(phi)));
            }
            xy.series.push_back({"reference", rx, ry, "#7f7f7f"});
            xy.series.push_back({"vehicle", column_values(log, "x"), column_values(log, "y"), "#1f77b4"});
            csv::write_text_file(ctx.path("report/plots/" + stem + "_xy.svg"), svg::render(xy));
            md << " [error](plots/" << stem << "_error.svg), [xy](plots/" << stem << "_xy.svg) |";
        }
        md << '\n';
    }
    csv::write_text_file(ctx.path("report/report.md"), md.str());
    if (ctx.log != nullptr) *ctx.log << "report: " << ctx.path("report/report.md") << '\n';
}

}  // namespace ckoop
