#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "ckoop/config.hpp"

namespace ckoop {

struct PipelineContext {
    ExperimentConfig config;
    std::string out_dir;  // defaults to config.report.output_dir
    int jobs = 1;
    std::ostream* log = nullptr;  // progress messages; nullptr silences them

    [[nodiscard]] std::string path(const std::string& relative) const;
};

// Seed streams split from the root seed.
namespace streams {
inline constexpr std::uint64_t kTrainData = 1;
inline constexpr std::uint64_t kIdentData = 2;
inline constexpr std::uint64_t kDictionary = 3;
inline constexpr std::uint64_t kCalibration = 4;
inline constexpr std::uint64_t kRun = 5;
inline constexpr std::uint64_t kHeldOut = 6;
inline constexpr std::uint64_t kEncoder = 7;
}  // namespace streams

// Runs fn(i) for i in [0, n) on up to `jobs` threads; results are stored by
// index, so the output order never depends on scheduling.
template <class T>
std::vector<T> parallel_map(std::size_t n, int jobs, const std::function<T(std::size_t)>& fn);

void cmd_collect(const PipelineContext& ctx);
void cmd_fit(const PipelineContext& ctx);
void cmd_synth(const PipelineContext& ctx);
void cmd_calibrate(const PipelineContext& ctx);
void cmd_run(const PipelineContext& ctx);

struct BoundFraction {
    std::string controller;
    std::string bound;  // latent | trajectory | state
    int runs = 0;
    long long pairs = 0;
    long long within_pairs = 0;
    int runs_all_within = 0;
    double fraction_within_bound = 0.0;
    double fraction_runs_all_within = 0.0;
    double target = 0.0;
    bool pass = false;
};

struct CoverageRow {
    std::string score;
    double q = 0.0;
    double delta = 0.0;
    long long test_scores = 0;
    double coverage = 0.0;
    double target = 0.0;           // 1 - alpha
    double per_step_target = 0.0;  // 1 - delta
    bool pass = false;
};

struct RunFlags {
    std::string file;
    std::string controller;
    int index = 0;
    std::uint64_t seed = 0;
    bool failed = false;
    int steps = 0;
    int saturated_steps = 0;
    double terminal_pos_err = 0.0;
    bool latent_within = false;
    bool trajectory_within = false;
    bool state_within = false;
};

struct ValidationSummary {
    int runs = 0;
    double alpha = 0.0;
    double beta = 0.0;
    std::vector<BoundFraction> fractions;
    std::vector<CoverageRow> coverage;
    std::vector<RunFlags> run_flags;
    bool pass = false;
};

// Reads every log listed in logs/index.csv (or all logs/run_*.csv) plus the
// calibration files. Throws ConfigError on horizon mismatch and InputError on
// an empty log set.
[[nodiscard]] ValidationSummary validate_logs(const PipelineContext& ctx);
ValidationSummary cmd_validate(const PipelineContext& ctx);
void cmd_report(const PipelineContext& ctx);
void cmd_all(const PipelineContext& ctx);

}  // namespace ckoop

#include "ckoop/detail/parallel.hpp"
