#include "ckoop/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "ckoop/artifacts.hpp"
#include "ckoop/conformal.hpp"
#include "ckoop/contraction.hpp"
#include "ckoop/controller.hpp"
#include "ckoop/csv.hpp"
#include "ckoop/dubins.hpp"
#include "ckoop/encoder_training.hpp"
#include "ckoop/errors.hpp"
#include "ckoop/koopman_id.hpp"
#include "ckoop/lifting.hpp"

namespace fs = std::filesystem;

namespace ckoop {

std::string PipelineContext::path(const std::string& relative) const {
    const std::string root = out_dir.empty() ? config.report.output_dir : out_dir;
    return (fs::path(root) / relative).string();
}

namespace {

constexpr const char* kTrainFile = "data/train.csv";
constexpr const char* kIdentFile = "data/ident.csv";
constexpr const char* kModelFile = "model/model.txt";
constexpr const char* kTraceFile = "model/fit_trace.csv";
constexpr const char* kControllerFile = "model/controller.txt";
constexpr const char* kHeldOutFile = "calibration/heldout_scores.csv";
constexpr const char* kDecoderFile = "calibration/decoder.csv";
constexpr const char* kContractionFile = "calibration/contraction_report.csv";
constexpr const char* kIndexFile = "logs/index.csv";
constexpr const char* kSummaryFile = "validation/summary.csv";
constexpr const char* kRunsFile = "validation/runs.csv";
constexpr const char* kCoverageFile = "validation/coverage.csv";
constexpr const char* kSummaryText = "validation/summary.txt";

// Calibration file stems. forward_nfc_crdr holds |d_hat| scores sampled under
// the CRDR loop (the history-dependent bound needs them).
constexpr const char* kStemNfc = "forward_nfc";
constexpr const char* kStemNfcCrdr = "forward_nfc_crdr";
constexpr const char* kStemCrdr = "forward_crdr";
constexpr const char* kStemRoundTrip = "round_trip";

std::string calibration_path(const PipelineContext& ctx, const std::string& stem) {
    return ctx.path("calibration/" + stem + ".csv");
}

void note(const PipelineContext& ctx, const std::string& msg) {
    if (ctx.log != nullptr) *ctx.log << msg << '\n';
}

void require_file(const std::string& path, const std::string& what) {
    if (!fs::exists(path)) throw IoError(what + " not found: " + path);
}

bool has_kind(const ExperimentConfig& c, ScoreKind k) {
    for (auto s : c.conformal.score_kinds) {
        if (s == k) return true;
    }
    return false;
}

ReferenceTrajectory make_reference(const ExperimentConfig& c) {
    return circle_reference(c.rollout.radius, c.data.speed, c.data.dt, c.rollout.steps);
}

TrajectoryLog simulate(const ExperimentConfig& c, const LiftedModel& model, const ControllerSpec& spec,
                       const ReferenceTrajectory& ref, ControllerKind kind, std::uint64_t seed,
                       const BoundInputs& bounds) {
    const DubinsState x0 = perturbed_start(ref, seed, c.rollout.position_spread, c.rollout.heading_spread);
    return rollout(model, spec, ref, kind, dubins_plant(c.data.dt), x0.as_vector(), bounds, seed, c.preset);
}

struct LoadedArtifacts {
    LiftedModel model;
    ControllerFile controller;
};

LoadedArtifacts load_artifacts(const PipelineContext& ctx) {
    require_file(ctx.path(kModelFile), "model file");
    require_file(ctx.path(kControllerFile), "controller file");
    LoadedArtifacts a{load_model(ctx.path(kModelFile)), load_controller(ctx.path(kControllerFile))};
    if (a.controller.spec.latent_dim() != a.model.latent_dim()) {
        throw InputError("controller file does not match the model latent dimension");
    }
    return a;
}

std::vector<double> collect_scores(const std::vector<TrajectoryLog>& logs, int horizon, bool crdr_score) {
    std::vector<double> out;
    for (const auto& log : logs) {
        for (const auto& s : log.steps) {
            if (s.k >= horizon) break;
            const double v = crdr_score ? s.score_crdr : s.score_d;
            if (std::isfinite(v)) out.push_back(v);
        }
    }
    return out;
}

std::vector<double> round_trip_scores(const LiftedModel& model, const std::vector<TrajectoryLog>& logs, int horizon) {
    std::vector<double> out;
    for (const auto& log : logs) {
        for (const auto& s : log.steps) {
            if (s.k > horizon) break;
            out.push_back(round_trip_residual(model.dictionary, model.decoder, s.observation));
        }
    }
    return out;
}

void write_calibration(const PipelineContext& ctx, const std::string& stem, const std::vector<double>& scores,
                       double delta, ScoreKind kind, const std::string& controller) {
    if (scores.empty()) throw NumericalError("calibration produced no finite scores for " + stem);
    const CalibrationResult r = conformal_quantile(scores, delta, kind);
    const auto& c = ctx.config;
    std::vector<std::pair<std::string, std::string>> md = {
        {"alpha", format_double(c.conformal.alpha)},
        {"beta", format_double(c.conformal.beta)},
        {"controller", controller},
        {"horizon", std::to_string(c.conformal.horizon)},
        {"runs", std::to_string(c.conformal.calibration_runs)},
        {"seed", std::to_string(c.seed)},
    };
    if (!r.finite()) {
        const std::string w = "rank " + std::to_string(r.k_index) + " exceeds " + std::to_string(r.m()) +
                              " calibration scores; quantile is +inf";
        md.emplace_back("warning", w);
        if (ctx.log != nullptr) *ctx.log << "warning: " << stem << ": " << w << '\n';
    }
    std::ostringstream out;
    write_calibration_csv(r, out, md);
    csv::write_text_file(calibration_path(ctx, stem), out.str());
    note(ctx, "  " + stem + ": m=" + std::to_string(r.m()) + " delta=" + format_double(delta) +
                  " q=" + format_double(r.q));
}

std::optional<CalibrationRecord> read_calibration(const PipelineContext& ctx, const std::string& stem) {
    const std::string p = calibration_path(ctx, stem);
    if (!fs::exists(p)) return std::nullopt;
    std::istringstream in(csv::read_text_file(p));
    return read_calibration_csv(in);
}

double quantile_or_inf(const PipelineContext& ctx, const std::string& stem) {
    const auto rec = read_calibration(ctx, stem);
    if (!rec) {
        if (ctx.log != nullptr) *ctx.log << "warning: calibration file " << stem << " missing; bound is +inf\n";
        return std::numeric_limits<double>::infinity();
    }
    const auto h = rec->meta("horizon");
    if (!h || parse_int(*h) != ctx.config.rollout.steps - 1) {
        throw ConfigError("calibration horizon " + (h ? *h : std::string("?")) + " does not match rollout.steps - 1 = " +
                          std::to_string(ctx.config.rollout.steps - 1));
    }
    return rec->q;
}

std::string run_file_name(ControllerKind kind, int index) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "run_%s_%03d.csv", to_string(kind).c_str(), index);
    return buf;
}

}  // namespace

// ---------------------------------------------------------------------------

void cmd_collect(const PipelineContext& ctx) {
    const auto& c = ctx.config;
    c.validate();
    CollectionConfig cc;
    cc.episodes = c.data.episodes;
    cc.steps = c.data.steps;
    cc.dt = c.data.dt;
    cc.speed = c.data.speed;
    cc.hold_steps = c.data.hold_steps;
    cc.position_box = c.data.position_box;
    const TransitionDataset train = collect_episodes(cc, mix_seed(c.seed, streams::kTrainData));
    cc.episodes = c.data.ident_episodes;
    const TransitionDataset ident = collect_episodes(cc, mix_seed(c.seed, streams::kIdentData));
    save_dataset(train, ctx.path(kTrainFile));
    save_dataset(ident, ctx.path(kIdentFile));
    note(ctx, "collect: " + std::to_string(train.records.size()) + " training and " +
                  std::to_string(ident.records.size()) + " identification records (seeds " +
                  std::to_string(train.source_seed) + ", " + std::to_string(ident.source_seed) + ")");
}

void cmd_fit(const PipelineContext& ctx) {
    const auto& c = ctx.config;
    c.validate();
    require_file(ctx.path(kTrainFile), "training dataset");
    require_file(ctx.path(kIdentFile), "identification dataset");
    const TransitionDataset train = load_dataset(ctx.path(kTrainFile));
    const TransitionDataset ident = load_dataset(ctx.path(kIdentFile));
    const std::vector<Vec> states = train.states();
    const int n = train.state_dim();

    LiftedModel model;
    switch (c.lifting.dictionary) {
        case DictionaryKind::IdentityAugmented:
            model.dictionary = c.lifting.rbf_count > 0
                                   ? make_rbf_augmented_dictionary(states, c.lifting.constant, c.lifting.rbf_count,
                                                                   mix_seed(c.seed, streams::kDictionary))
                                   : Dictionary::identity_augmented(n, c.lifting.constant);
            break;
        case DictionaryKind::RadialBasis: {
            const Dictionary tmp = make_rbf_augmented_dictionary(states, false, c.lifting.rbf_count,
                                                                 mix_seed(c.seed, streams::kDictionary));
            model.dictionary = Dictionary::radial_basis(n, tmp.rbf_centers(), tmp.rbf_widths(), "rbf");
            break;
        }
        case DictionaryKind::TrainedEncoder: {
            EncoderTrainingOptions opt;
            opt.latent_dim = n + std::max(0, c.lifting.rbf_count);
            opt.hidden = c.lifting.hidden;
            opt.iterations = c.lifting.train_iters;
            opt.batch = c.lifting.train_batch;
            opt.step_size = c.lifting.train_step;
            opt.recon_weight = c.lifting.recon_weight;
            opt.ctrl_weight = c.lifting.ctrl_weight;
            opt.epsilon_ctrl = c.identification.epsilon_ctrl;
            opt.lambda_cond = c.identification.lambda_cond;
            const EncoderTrainingResult tr = train_encoder(train, opt, mix_seed(c.seed, streams::kEncoder));
            model.dictionary = tr.dictionary;
            model.decoder = tr.decoder;
            note(ctx, "fit: encoder trained, loss " + format_double(tr.initial_loss) + " -> " +
                          format_double(tr.final_loss));
            break;
        }
    }
    if (c.lifting.dictionary != DictionaryKind::TrainedEncoder) {
        model.decoder = c.lifting.decoder == DecoderKind::Projection
                            ? Decoder::projection(model.dictionary.latent_dim(), n)
                            : fit_linear_decoder(model.dictionary, states, c.lifting.decoder_ridge);
    }

    const LiftedData lifted = lift_dataset(model.dictionary, ident);
    const FitReport fr = fit_regularized(lifted, c.identification);
    model.a = fr.model.a;
    model.b = fr.model.b;

    FitDiagnostics d;
    d.rho_edmd = spectral_radius(fr.initial.a);
    d.rho = spectral_radius(model.a);
    const SingularRange sv = controllability_singular_values(model.a, model.b);
    d.sigma_min = sv.sigma_min;
    d.sigma_max = sv.sigma_max;
    d.prediction_loss_edmd = prediction_loss(fr.initial.a, fr.initial.b, lifted);
    d.prediction_loss = prediction_loss(model.a, model.b, lifted);
    d.initial_loss = fr.initial_loss;
    d.final_loss = fr.final_loss;
    d.iterations = fr.iterations;
    save_model(model, d, ctx.path(kModelFile));

    std::ostringstream trace;
    trace << "iteration,loss\n";
    for (std::size_t i = 0; i < fr.trace.size(); ++i) trace << i << ',' << format_double(fr.trace[i]) << '\n';
    csv::write_text_file(ctx.path(kTraceFile), trace.str());

    note(ctx, "fit: N=" + std::to_string(model.latent_dim()) + " rho(A_edmd)=" + format_double(d.rho_edmd) +
                  " rho(A)=" + format_double(d.rho) + " sigma_min(C)=" + format_double(d.sigma_min) +
                  " L_pred=" + format_double(d.prediction_loss) + " iterations=" + std::to_string(d.iterations));
}

void cmd_synth(const PipelineContext& ctx) {
    const auto& c = ctx.config;
    c.validate();
    require_file(ctx.path(kModelFile), "model file");
    const LiftedModel model = load_model(ctx.path(kModelFile));
    SynthesisOptions opt;
    opt.controllability_floor = c.controller.controllability_floor;
    opt.lqr_state_weight = c.controller.lqr_state_weight;
    opt.lqr_input_weight = c.controller.lqr_input_weight;
    const Mat q = c.controller.lyapunov_weight * Mat::Identity(model.latent_dim(), model.latent_dim());
    SynthesisResult r = synthesize_metric(model.a, model.b, c.controller.gamma, q, opt);
    r.spec.rho = c.controller.rho;
    r.spec.c_v = c.controller.c_v;
    ControllerFile f{r.spec, c.controller.preset, r.lqr_state_weight, r.closed_loop_moduli};
    save_controller(f, ctx.path(kControllerFile));
    note(ctx, "synth: certificate=" + format_double(r.spec.certificate) + " max|eig(A-BK)|=" +
                  format_double(r.closed_loop_moduli.empty() ? 0.0 : r.closed_loop_moduli.front()) +
                  " sqrt(m_bar/m_under)=" + format_double(std::sqrt(r.spec.m_bar / r.spec.m_under)));
}

void cmd_calibrate(const PipelineContext& ctx) {
    const auto& c = ctx.config;
    c.validate();
    const LoadedArtifacts art = load_artifacts(ctx);
    const ControllerSpec& spec = art.controller.spec;
    const ReferenceTrajectory ref = make_reference(c);
    const int horizon = c.conformal.horizon;
    const double delta = union_bound_delta(c.conformal.alpha, horizon);
    const double delta_rt = union_bound_delta(c.conformal.beta, horizon);

    const auto batch = [&](ControllerKind kind, std::uint64_t stream, int count) {
        return parallel_map<TrajectoryLog>(static_cast<std::size_t>(count), ctx.jobs, [&](std::size_t i) {
            return simulate(c, art.model, spec, ref, kind, mix_seed(c.seed, stream, i), BoundInputs{});
        });
    };
    note(ctx, "calibrate: " + std::to_string(c.conformal.calibration_runs) + " calibration and " +
                  std::to_string(c.conformal.test_runs) + " held-out rollouts per controller");
    const auto cal_nfc = batch(ControllerKind::NFC, streams::kCalibration, c.conformal.calibration_runs);
    const auto cal_crdr = batch(ControllerKind::CRDR, streams::kCalibration, c.conformal.calibration_runs);
    const auto test_nfc = batch(ControllerKind::NFC, streams::kHeldOut, c.conformal.test_runs);
    const auto test_crdr = batch(ControllerKind::CRDR, streams::kHeldOut, c.conformal.test_runs);

    std::ostringstream held;
    held << "file,score\n";
    const auto held_out = [&](const std::string& stem, const std::vector<double>& scores) {
        for (double s : scores) held << stem << ',' << format_double(s) << '\n';
    };

    for (const auto* stem : {kStemNfc, kStemNfcCrdr, kStemCrdr, kStemRoundTrip}) {
        std::error_code ec;
        fs::remove(calibration_path(ctx, stem), ec);
    }
    if (has_kind(c, ScoreKind::ForwardNFC)) {
        write_calibration(ctx, kStemNfc, collect_scores(cal_nfc, horizon, false), delta, ScoreKind::ForwardNFC, "nfc");
        write_calibration(ctx, kStemNfcCrdr, collect_scores(cal_crdr, horizon, false), delta, ScoreKind::ForwardNFC,
                          "crdr");
        held_out(kStemNfc, collect_scores(test_nfc, horizon, false));
        held_out(kStemNfcCrdr, collect_scores(test_crdr, horizon, false));
    }
    if (has_kind(c, ScoreKind::ForwardCRDR)) {
        write_calibration(ctx, kStemCrdr, collect_scores(cal_crdr, horizon, true), delta, ScoreKind::ForwardCRDR,
                          "crdr");
        held_out(kStemCrdr, collect_scores(test_crdr, horizon, true));
    }
    if (has_kind(c, ScoreKind::RoundTrip)) {
        write_calibration(ctx, kStemRoundTrip, round_trip_scores(art.model, cal_crdr, horizon), delta_rt,
                          ScoreKind::RoundTrip, "crdr");
        held_out(kStemRoundTrip, round_trip_scores(art.model, test_crdr, horizon));
    }
    csv::write_text_file(ctx.path(kHeldOutFile), held.str());

    // Decoder Lipschitz constant from consecutive latent states of the CRDR runs.
    std::vector<std::pair<Vec, Vec>> pairs;
    for (const auto& log : cal_crdr) {
        for (std::size_t k = 1; k < log.steps.size(); ++k) pairs.emplace_back(log.steps[k - 1].z, log.steps[k].z);
    }
    const LipschitzEstimate lip = estimate_lipschitz(art.model.decoder, pairs, c.conformal.lipschitz_safety);
    csv::write_text_file(ctx.path(kDecoderFile), "lipschitz,exact\n" + format_double(lip.value) + ',' +
                                                     (lip.exact ? "true" : "false") + '\n');

    // Contraction check of the unsaturated NFC loop on the true plant, at
    // states visited by the CRDR calibration runs.
    std::vector<Vec> samples;
    std::vector<ClosedLoopMap> maps;
    const auto target = static_cast<std::size_t>(c.conformal.contraction_samples);
    std::size_t total = 0;
    for (const auto& log : cal_crdr) total += log.steps.size();
    const std::size_t stride = target == 0 ? 0 : std::max<std::size_t>(1, total / target);
    std::size_t counter = 0;
    const double dt = c.data.dt;
    const double speed = c.data.speed;
    for (const auto& log : cal_crdr) {
        for (const auto& s : log.steps) {
            if (stride == 0 || samples.size() >= target) break;
            if (counter++ % stride != 0) continue;
            const auto k = static_cast<std::size_t>(s.k);
            const Vec zd = lift(art.model.dictionary, ref.observations[k]);
            const Vec ud = ref.inputs[k];
            samples.push_back(s.observation);
            maps.emplace_back([&art, &spec, zd, ud, dt, speed](const Vec& x) {
                const Vec e = lift(art.model.dictionary, x) - zd;
                const Vec u = nfc_input(spec, ud, e);
                const DubinsState st = dubins_state_from_observation(x, speed);
                return dubins_observation(dubins_step(st, 0.0, u(u.size() - 1), dt));
            });
        }
    }
    if (!samples.empty()) {
        const ContractionReport rep = verify_contraction(art.model.dictionary, spec.metric, spec.gamma, maps, samples);
        std::ostringstream out;
        write_contraction_csv(rep, out);
        csv::write_text_file(ctx.path(kContractionFile), out.str());
        note(ctx, "  contraction check: samples=" + std::to_string(rep.samples) +
                      " max_violation=" + format_double(rep.max_violation) + (rep.pass ? " (pass)" : " (fail)"));
    }
}

void cmd_run(const PipelineContext& ctx) {
    const auto& c = ctx.config;
    c.validate();
    const LoadedArtifacts art = load_artifacts(ctx);
    const ReferenceTrajectory ref = make_reference(c);

    const double lipschitz = [&] {
        const std::string p = ctx.path(kDecoderFile);
        if (!fs::exists(p)) return std::numeric_limits<double>::infinity();
        const csv::Table t = csv::read_file(p);
        if (t.rows.size() != 1) throw InputError(p + ": expected one row");
        return parse_double(t.rows[0][t.column("lipschitz")]);
    }();
    const bool want_rt = has_kind(c, ScoreKind::RoundTrip);
    const double q_rt = want_rt ? quantile_or_inf(ctx, kStemRoundTrip) : 0.0;
    const bool want_fwd = has_kind(c, ScoreKind::ForwardNFC);
    const double q_nfc = want_fwd ? quantile_or_inf(ctx, kStemNfc) : std::numeric_limits<double>::infinity();
    const double q_nfc_crdr = want_fwd ? quantile_or_inf(ctx, kStemNfcCrdr) : std::numeric_limits<double>::infinity();
    const double q_crdr = has_kind(c, ScoreKind::ForwardCRDR) ? quantile_or_inf(ctx, kStemCrdr)
                                                              : std::numeric_limits<double>::infinity();

    struct Job {
        ControllerKind kind;
        int index;
    };
    std::vector<Job> jobs;
    for (auto kind : c.rollout.controllers) {
        for (int i = 0; i < c.rollout.seeds; ++i) jobs.push_back({kind, i});
    }
    fs::remove_all(ctx.path("logs"));
    const auto results = parallel_map<std::string>(jobs.size(), ctx.jobs, [&](std::size_t j) {
        const Job& job = jobs[j];
        BoundInputs b;
        b.q_fwd = job.kind == ControllerKind::NFC ? q_nfc : q_crdr;
        b.q_traj = job.kind == ControllerKind::NFC ? q_nfc : q_nfc_crdr;
        b.q_rt = q_rt;
        b.lipschitz = lipschitz;
        b.alpha = c.conformal.alpha;
        b.beta = c.conformal.beta;
        const std::uint64_t seed = mix_seed(c.seed, streams::kRun, static_cast<std::uint64_t>(job.index));
        TrajectoryLog log = simulate(c, art.model, art.controller.spec, ref, job.kind, seed, b);
        log.metadata["index"] = std::to_string(job.index);
        const std::string name = run_file_name(job.kind, job.index);
        std::ostringstream out;
        write_trajectory_csv(log, out);
        csv::write_text_file(ctx.path("logs/" + name), out.str());
        std::ostringstream row;
        row << name << ',' << to_string(job.kind) << ',' << job.index << ',' << seed << ','
            << (log.failed ? "true" : "false") << ',' << log.saturated_steps() << ','
            << format_double(log.steps.empty() ? std::numeric_limits<double>::quiet_NaN() : log.steps.back().pos_err);
        return (log.failed ? "F" : "S") + row.str();
    });
    std::ostringstream index;
    index << "file,controller,index,seed,failed,saturated_steps,terminal_pos_err\n";
    int ok = 0;
    for (const auto& r : results) {
        ok += r[0] == 'S' ? 1 : 0;
        index << r.substr(1) << '\n';
    }
    csv::write_text_file(ctx.path(kIndexFile), index.str());
    note(ctx, "run: " + std::to_string(results.size()) + " rollouts, " + std::to_string(results.size() - ok) +
                  " aborted");
    if (ok == 0) throw NumericalError("run: every rollout aborted");
}

// ---------------------------------------------------------------------------
// Validation

ValidationSummary validate_logs(const PipelineContext& ctx) {
    const auto& c = ctx.config;
    const std::string index_path = ctx.path(kIndexFile);
    if (!fs::exists(index_path)) throw InputError("no rollout logs: " + index_path + " does not exist");
    const csv::Table index = csv::read_file(index_path);
    if (index.rows.empty()) throw InputError("no rollout logs listed in " + index_path);

    ValidationSummary sum;
    sum.alpha = c.conformal.alpha;
    sum.beta = c.conformal.beta;

    std::optional<long long> cal_horizon;
    for (const auto* stem : {kStemNfc, kStemNfcCrdr, kStemCrdr, kStemRoundTrip}) {
        const auto rec = read_calibration(ctx, stem);
        if (!rec) continue;
        const auto h = rec->meta("horizon");
        if (!h) throw ConfigError(std::string("calibration file ") + stem + " has no horizon");
        const long long v = parse_int(*h);
        if (cal_horizon && *cal_horizon != v) throw ConfigError("calibration files disagree on the horizon");
        cal_horizon = v;
    }
    if (cal_horizon && *cal_horizon != c.conformal.horizon) {
        throw ConfigError("configured horizon " + std::to_string(c.conformal.horizon) +
                          " differs from calibration horizon " + std::to_string(*cal_horizon));
    }

    struct Acc {
        int runs = 0;
        long long pairs = 0;
        long long within = 0;
        int all_within = 0;
    };
    std::map<std::pair<std::string, std::string>, Acc> acc;
    std::vector<std::string> controller_order;
    const auto within = [](double err, double bound) { return std::isfinite(err) && !(err > bound); };

    for (const auto& row : index.rows) {
        const std::string file = row[index.column("file")];
        const std::string p = ctx.path("logs/" + file);
        require_file(p, "rollout log");
        std::istringstream in(csv::read_text_file(p));
        const TrajectoryLog log = read_trajectory_csv(in);
        const std::string ctrl = to_string(log.controller);
        if (std::find(controller_order.begin(), controller_order.end(), ctrl) == controller_order.end()) {
            controller_order.push_back(ctrl);
        }
        const auto steps_it = log.metadata.find("steps");
        const long long steps =
            steps_it != log.metadata.end() ? parse_int(steps_it->second) : static_cast<long long>(log.steps.size());
        if (cal_horizon && *cal_horizon != steps - 1) {
            throw ConfigError("log " + file + " has horizon " + std::to_string(steps - 1) +
                              " but calibration used horizon " + std::to_string(*cal_horizon));
        }

        RunFlags f;
        f.file = file;
        f.controller = ctrl;
        f.index = static_cast<int>(parse_int(row[index.column("index")]));
        f.seed = std::stoull(row[index.column("seed")]);
        f.failed = log.failed;
        f.steps = static_cast<int>(log.steps.size());
        f.saturated_steps = static_cast<int>(parse_int(row[index.column("saturated_steps")]));
        f.terminal_pos_err = log.steps.empty() ? std::numeric_limits<double>::quiet_NaN() : log.steps.back().pos_err;

        long long in_latent = 0;
        long long in_traj = 0;
        long long in_state = 0;
        for (const auto& s : log.steps) {
            in_latent += within(s.e_norm, s.eps_k) ? 1 : 0;
            in_traj += within(s.e_norm, s.traj_bound) ? 1 : 0;
            in_state += within(s.pos_err, s.state_bound) ? 1 : 0;
        }
        const auto n = static_cast<long long>(log.steps.size());
        f.latent_within = !log.failed && in_latent == n;
        f.trajectory_within = !log.failed && in_traj == n;
        f.state_within = !log.failed && in_state == n;
        const auto add = [&](const std::string& bound, long long hits, bool all) {
            Acc& a = acc[{ctrl, bound}];
            a.runs += 1;
            a.pairs += n;
            a.within += hits;
            a.all_within += all ? 1 : 0;
        };
        add("latent", in_latent, f.latent_within);
        add("trajectory", in_traj, f.trajectory_within);
        add("state", in_state, f.state_within);
        sum.run_flags.push_back(f);
    }
    sum.runs = static_cast<int>(sum.run_flags.size());

    bool pass = true;
    for (const auto& ctrl : controller_order) {
        for (const char* bound : {"latent", "trajectory", "state"}) {
            const Acc& a = acc[{ctrl, bound}];
            BoundFraction b;
            b.controller = ctrl;
            b.bound = bound;
            b.runs = a.runs;
            b.pairs = a.pairs;
            b.within_pairs = a.within;
            b.runs_all_within = a.all_within;
            b.fraction_within_bound = a.pairs > 0 ? static_cast<double>(a.within) / static_cast<double>(a.pairs) : 0.0;
            b.fraction_runs_all_within = a.runs > 0 ? static_cast<double>(a.all_within) / a.runs : 0.0;
            b.target = std::string(bound) == "state" ? 1.0 - c.conformal.alpha - c.conformal.beta
                                                     : 1.0 - c.conformal.alpha;
            b.pass = b.fraction_runs_all_within >= b.target;
            pass = pass && b.pass;
            sum.fractions.push_back(b);
        }
    }

    const std::string held_path = ctx.path(kHeldOutFile);
    if (fs::exists(held_path)) {
        const csv::Table held = csv::read_file(held_path);
        std::map<std::string, std::vector<double>> by_file;
        for (const auto& row : held.rows) by_file[row[0]].push_back(parse_double(row[1]));
        for (const auto* stem : {kStemNfc, kStemNfcCrdr, kStemCrdr, kStemRoundTrip}) {
            const auto rec = read_calibration(ctx, stem);
            if (!rec || by_file[stem].empty()) continue;
            CoverageRow r;
            r.score = stem;
            r.q = rec->q;
            r.delta = rec->delta;
            r.test_scores = static_cast<long long>(by_file[stem].size());
            r.coverage = empirical_coverage(rec->q, by_file[stem]);
            r.target = std::string(stem) == kStemRoundTrip ? 1.0 - c.conformal.beta : 1.0 - c.conformal.alpha;
            r.per_step_target = 1.0 - rec->delta;
            r.pass = r.coverage >= r.target;
            pass = pass && r.pass;
            sum.coverage.push_back(r);
        }
    }
    sum.pass = pass;
    return sum;
}

ValidationSummary cmd_validate(const PipelineContext& ctx) {
    ctx.config.validate();
    const ValidationSummary s = validate_logs(ctx);
    const auto b = [](bool v) { return std::string(v ? "true" : "false"); };

    std::ostringstream out;
    out << "# alpha=" << format_double(s.alpha) << '\n'
        << "# beta=" << format_double(s.beta) << '\n'
        << "# pass=" << b(s.pass) << '\n'
        << "# runs=" << s.runs << '\n'
        << "controller,bound,runs,pairs,within_pairs,fraction_within_bound,runs_all_within,"
           "fraction_runs_all_within,target,pass\n";
    for (const auto& f : s.fractions) {
        out << f.controller << ',' << f.bound << ',' << f.runs << ',' << f.pairs << ',' << f.within_pairs << ','
            << format_double(f.fraction_within_bound) << ',' << f.runs_all_within << ','
            << format_double(f.fraction_runs_all_within) << ',' << format_double(f.target) << ',' << b(f.pass)
            << '\n';
    }
    csv::write_text_file(ctx.path(kSummaryFile), out.str());

    std::ostringstream cov;
    cov << "score,q,delta,test_scores,coverage,target,per_step_target,pass\n";
    for (const auto& r : s.coverage) {
        cov << r.score << ',' << format_double(r.q) << ',' << format_double(r.delta) << ',' << r.test_scores << ','
            << format_double(r.coverage) << ',' << format_double(r.target) << ',' << format_double(r.per_step_target)
            << ',' << b(r.pass) << '\n';
    }
    csv::write_text_file(ctx.path(kCoverageFile), cov.str());

    std::ostringstream runs;
    runs << "file,controller,index,seed,failed,steps,saturated_steps,terminal_pos_err,latent_within,"
            "trajectory_within,state_within\n";
    for (const auto& f : s.run_flags) {
        runs << f.file << ',' << f.controller << ',' << f.index << ',' << f.seed << ',' << b(f.failed) << ','
             << f.steps << ',' << f.saturated_steps << ',' << format_double(f.terminal_pos_err) << ','
             << b(f.latent_within) << ',' << b(f.trajectory_within) << ',' << b(f.state_within) << '\n';
    }
    csv::write_text_file(ctx.path(kRunsFile), runs.str());

    std::ostringstream txt;
    char line[256];
    std::snprintf(line, sizeof line, "%-10s %-11s %5s %8s %16s %14s %8s %5s\n", "controller", "bound", "runs",
                  "pairs", "frac_within", "runs_within", "target", "pass");
    txt << line;
    for (const auto& f : s.fractions) {
        std::snprintf(line, sizeof line, "%-10s %-11s %5d %8lld %16s %14s %8s %5s\n", f.controller.c_str(),
                      f.bound.c_str(), f.runs, f.pairs, format_double(f.fraction_within_bound).c_str(),
                      format_double(f.fraction_runs_all_within).c_str(), format_double(f.target).c_str(),
                      b(f.pass).c_str());
        txt << line;
    }
    if (!s.coverage.empty()) {
        txt << '\n';
        std::snprintf(line, sizeof line, "%-18s %12s %10s %8s %10s %8s %5s\n", "score", "q", "delta", "tests",
                      "coverage", "target", "pass");
        txt << line;
        for (const auto& r : s.coverage) {
            std::snprintf(line, sizeof line, "%-18s %12.6g %10.4g %8lld %10.6f %8.4f %5s\n", r.score.c_str(), r.q,
                          r.delta, r.test_scores, r.coverage, r.target, b(r.pass).c_str());
            txt << line;
        }
    }
    txt << "\nverdict: " << (s.pass ? "PASS" : "FAIL") << '\n';
    csv::write_text_file(ctx.path(kSummaryText), txt.str());
    if (ctx.log != nullptr) *ctx.log << txt.str();
    return s;
}

void cmd_all(const PipelineContext& ctx) {
    cmd_collect(ctx);
    cmd_fit(ctx);
    cmd_synth(ctx);
    cmd_calibrate(ctx);
    cmd_run(ctx);
    (void)cmd_validate(ctx);
    cmd_report(ctx);
}

}  // namespace ckoop
