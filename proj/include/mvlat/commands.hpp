#pragma once

// Command implementations behind the CLI verbs.  Each takes explicit paths
// plus optional overrides and returns a process exit code: 0 success,
// 3 for a train run that hit the outer-iteration cap without converging,
// exceptions propagate for the binary to report as exit 1.  All CSV outputs
// are deterministic given the config; wall-clock timing goes to the log
// stream only.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mvlat/eval.hpp"
#include "mvlat/gradcheck.hpp"
#include "mvlat/io.hpp"
#include "mvlat/synth.hpp"
#include "mvlat/trainer.hpp"

namespace mvlat {

namespace cmd_detail {

inline std::string resolve_out(const ExperimentConfig& cfg, const std::string& out_override) {
    const std::string dir = out_override.empty() ? cfg.output_dir : out_override;
    std::filesystem::create_directories(dir);
    return dir;
}

inline Dataset fresh_eval_draw(const Dataset& ds, std::uint64_t eval_seed) {
    return generate_with_mixers(ds.provenance, eval_seed, ds.mixer1, ds.mixer2);
}

inline void require_dims_match(const ModelDims& a, const char* a_name, const ModelDims& b,
                               const char* b_name) {
    auto fmt = [](const ModelDims& d) {
        return "(D=" + std::to_string(d.d) + ", Dq1=" + std::to_string(d.d1) +
               ", Dq2=" + std::to_string(d.d2) + ", M1=" + std::to_string(d.m1) +
               ", M2=" + std::to_string(d.m2) + ")";
    };
    if (a.d != b.d || a.d1 != b.d1 || a.d2 != b.d2 || a.m1 != b.m1 || a.m2 != b.m2)
        throw std::invalid_argument(std::string(a_name) + " dims " + fmt(a) + " do not match " +
                                    b_name + " dims " + fmt(b));
}

inline void print_mi(std::ostream& log, const MiReport& r) {
    const auto& names = MiReport::column_names();
    const auto vals = r.values();
    for (std::size_t i = 0; i < names.size(); ++i)
        log << "  " << names[i] << " = " << vals[i] << "\n";
}

inline MiReport nan_report() {
    const double q = std::numeric_limits<double>::quiet_NaN();
    return MiReport{q, q, q, q, q, q, q, q};
}

struct TrainedCell {
    TrainResult result;
    MiReport report;
};

// Train one model on the dataset and evaluate MI on a fresh draw under the
// same mixers.  Shared by ablate and spr-sweep cells.
inline TrainedCell run_cell(const ExperimentConfig& cfg, const TrainConfig& tc, const Dataset& ds) {
    const ModelBundle bundle =
        default_bundle(cfg.dims(), cfg.model.hidden_width, cfg.model.hidden_layers, tc.seed);
    TrainedCell cell;
    cell.result = train(bundle, ds, tc);
    const Dataset fresh = fresh_eval_draw(ds, cfg.eval.fresh_eval_seed);
    cell.report = mi_report(cell.result.bundle, fresh);
    return cell;
}

} // namespace cmd_detail

// Generate the synthetic dataset described by the config and write the
// dataset directory layout (view CSVs, latents, provenance) into out.
inline int cmd_gen(const std::string& config_path, const std::string& out_override,
                   std::optional<std::uint64_t> seed_override, std::ostream& log) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    if (seed_override) cfg.gen.seed = *seed_override;
    const std::string dir = cmd_detail::resolve_out(cfg, out_override);
    const Dataset ds = generate(cfg.gen);
    save_dataset(ds, dir);
    log << "wrote dataset to " << dir << " (n = " << ds.x1.rows()
        << ", SPR view1 = " << compute_spr(ds.z, ds.c1) << " dB"
        << ", SPR view2 = " << compute_spr(ds.z, ds.c2) << " dB)\n";
    return 0;
}

// Train on an existing dataset directory; writes checkpoint.json, slack.csv
// and history.csv.  Returns 0 when the stopping rule fired, 3 when the run
// was capped at max_outer_iters.
inline int cmd_train(const std::string& config_path, const std::string& data_dir,
                     const std::string& out_override, std::optional<std::uint64_t> seed_override,
                     std::optional<std::size_t> max_outer_override, std::ostream& log) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    if (seed_override) cfg.train.seed = *seed_override;
    if (max_outer_override) cfg.train.max_outer_iters = *max_outer_override;
    const std::string dir = cmd_detail::resolve_out(cfg, out_override);

    const Dataset ds = load_dataset(data_dir);
    const GenConfig& g = ds.provenance;
    cmd_detail::require_dims_match(
        ModelDims{g.d_shared, g.d_private1, g.d_private2, g.m1(), g.m2()}, "dataset", cfg.dims(),
        "config");
    const std::string warning = cfg.train.warning();
    if (!warning.empty()) log << "warning: " << warning << "\n";

    const ModelBundle bundle = default_bundle(cfg.dims(), cfg.model.hidden_width,
                                              cfg.model.hidden_layers, cfg.train.seed);
    const TrainResult result = train(bundle, ds, cfg.train);

    save_checkpoint(dir + "/checkpoint.json", result.bundle);
    write_csv(dir + "/slack.csv", numbered_headers("u_", result.slack.u.rows()),
              transpose(result.slack.u));
    write_history_csv(dir + "/history.csv", result.history);

    if (!result.history.empty()) {
        const OuterRecord& last = result.history.back();
        log << "outer " << last.outer_iter << ": L = " << last.matching << ", V = " << last.recon
            << ", R1 = " << last.r1 << ", R2 = " << last.r2 << ", total = " << last.total << "\n";
    }
    const double secs = result.history.empty() ? 0.0 : result.history.back().seconds;
    if (result.converged) {
        log << "converged (L = " << result.final_matching << " <= " << cfg.train.stop_matching_loss
            << ") after " << result.history.size() << " outer iterations, " << secs << " s\n";
        return 0;
    }
    log << "iteration-capped after " << result.history.size() << " outer iterations (L = "
        << result.final_matching << "), " << secs << " s\n";
    return 3;
}

// Evaluate a checkpoint: mi_report.csv (eight KDE MI values on a fresh draw
// under the dataset's mixers) and jacobian_metric.csv (per-view shared-head
// sensitivity to private coordinates).
inline int cmd_eval(const std::string& config_path, const std::string& checkpoint_path,
                    const std::string& data_dir, const std::string& out_override,
                    std::optional<std::uint64_t> seed_override, std::ostream& log) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    if (seed_override) cfg.eval.fresh_eval_seed = *seed_override;
    const std::string dir = cmd_detail::resolve_out(cfg, out_override);

    const ModelBundle bundle = load_checkpoint(checkpoint_path);
    cmd_detail::require_dims_match(bundle.dims, "checkpoint", cfg.dims(), "config");
    const Dataset ds = load_dataset(data_dir);
    const GenConfig& g = ds.provenance;
    cmd_detail::require_dims_match(
        ModelDims{g.d_shared, g.d_private1, g.d_private2, g.m1(), g.m2()}, "dataset", cfg.dims(),
        "config");

    const Dataset fresh = cmd_detail::fresh_eval_draw(ds, cfg.eval.fresh_eval_seed);
    const MiReport report = mi_report(bundle, fresh);
    write_mi_report_csv(dir + "/mi_report.csv",
                        {MiReportRow{report, config_hash(cfg), cfg.train.seed}});

    const JacobianMetricResult j1 = jacobian_energy_metric(bundle.f1, fresh.mixer1, fresh.z,
                                                           fresh.c1, cfg.eval.delta, bundle.dims.d);
    const JacobianMetricResult j2 = jacobian_energy_metric(bundle.f2, fresh.mixer2, fresh.z,
                                                           fresh.c2, cfg.eval.delta, bundle.dims.d);
    write_table(dir + "/jacobian_metric.csv", {"view", "value", "rows_used", "rows_skipped"},
                {{"1", format_g17(j1.value), std::to_string(j1.used), std::to_string(j1.skipped)},
                 {"2", format_g17(j2.value), std::to_string(j2.used), std::to_string(j2.skipped)}});

    log << "mi_report (fresh draw, seed " << cfg.eval.fresh_eval_seed << "):\n";
    cmd_detail::print_mi(log, report);
    log << "jacobian metric: view1 = " << j1.value << " (" << j1.used << " rows), view2 = "
        << j2.value << " (" << j2.used << " rows)\n";
    return 0;
}

namespace cmd_detail {

struct AblationVariant {
    const char* label;
    bool use_v;
    bool use_r;
    IndepKind indep;
};

inline const std::array<AblationVariant, 5>& ablation_variants() {
    static const std::array<AblationVariant, 5> v = {{
        {"L", false, false, IndepKind::adversarial},
        {"L+V", true, false, IndepKind::adversarial},
        {"L+R", false, true, IndepKind::adversarial},
        {"L+V+R", true, true, IndepKind::adversarial},
        {"L+V+HSIC", true, true, IndepKind::hsic},
    }};
    return v;
}

} // namespace cmd_detail

// Run the five objective ablations (L; L+V; L+R; L+V+R; L+V+HSIC) on one
// regenerated dataset and emit one MI report row per variant.  A failed
// variant is recorded as a nan row and the command continues.
inline int cmd_ablate(const std::string& config_path, const std::string& out_override,
                      std::optional<std::uint64_t> seed_override, std::ostream& log) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    const std::uint64_t seed = seed_override ? *seed_override : cfg.train.seed;
    cfg.gen.seed = seed;
    cfg.train.seed = seed;
    const std::string dir = cmd_detail::resolve_out(cfg, out_override);
    const std::string hash = config_hash(cfg);

    const Dataset ds = generate(cfg.gen);
    std::vector<MiReportRow> rows;
    std::vector<std::vector<std::string>> labels;
    for (const auto& variant : cmd_detail::ablation_variants()) {
        TrainConfig tc = cfg.train;
        tc.beta = variant.use_v ? cfg.train.beta : 0.0;
        tc.lambda = variant.use_r ? cfg.train.lambda : 0.0;
        tc.indep = variant.indep;
        log << "[" << variant.label << "] seed " << seed << ": " << std::flush;
        MiReportRow row{cmd_detail::nan_report(), hash, seed};
        try {
            const cmd_detail::TrainedCell cell = cmd_detail::run_cell(cfg, tc, ds);
            row.report = cell.report;
            log << (cell.result.converged ? "converged" : "iteration-capped") << " after "
                << cell.result.history.size() << " outer iterations, L = "
                << cell.result.final_matching << ", mi_c1_c1 = " << cell.report.c1_c1
                << ", mi_c1_z = " << cell.report.c1_z << "\n";
        } catch (const std::exception& e) {
            log << "failed: " << e.what() << "\n";
        }
        rows.push_back(std::move(row));
        labels.push_back({variant.label});
    }
    write_mi_report_csv(dir + "/ablation_table.csv", rows, {"variant"}, labels);
    log << "wrote " << dir << "/ablation_table.csv\n";
    return 0;
}

// Regenerate, train and evaluate at each target SPR (applied to both views),
// averaging MI columns over the config's seed list; one row per SPR.
inline int cmd_spr_sweep(const std::string& config_path, const std::vector<double>& spr_override,
                         const std::string& out_override,
                         std::optional<std::uint64_t> seed_override, std::ostream& log) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    const std::string dir = cmd_detail::resolve_out(cfg, out_override);
    const std::vector<double> spr_list = spr_override.empty() ? cfg.spr_list_db : spr_override;
    if (spr_list.empty())
        throw std::invalid_argument(config_path + ": spr_list_db is empty and no --spr given");
    const std::vector<std::uint64_t> seeds =
        seed_override ? std::vector<std::uint64_t>{*seed_override} : cfg.seed_list();

    std::vector<std::string> headers = {"spr_db"};
    for (const auto& h : MiReport::column_names()) headers.push_back(h);
    headers.push_back("seeds_ok");
    headers.push_back("seeds_failed");

    std::vector<std::vector<std::string>> out_rows;
    for (double target : spr_list) {
        std::array<double, 8> acc{};
        double spr_acc = 0.0;
        std::size_t ok = 0, failed = 0;
        for (std::uint64_t seed : seeds) {
            ExperimentConfig cell_cfg = cfg;
            cell_cfg.gen.seed = seed;
            cell_cfg.gen.target_spr_db1 = target;
            cell_cfg.gen.target_spr_db2 = target;
            TrainConfig tc = cfg.train;
            tc.seed = seed;
            log << "[spr " << target << " dB] seed " << seed << ": " << std::flush;
            try {
                const Dataset ds = generate(cell_cfg.gen);
                const cmd_detail::TrainedCell cell = cmd_detail::run_cell(cell_cfg, tc, ds);
                const auto vals = cell.report.values();
                for (std::size_t i = 0; i < vals.size(); ++i) acc[i] += vals[i];
                spr_acc += 0.5 * (compute_spr(ds.z, ds.c1) + compute_spr(ds.z, ds.c2));
                ++ok;
                log << (cell.result.converged ? "converged" : "iteration-capped")
                    << ", mi_z1_z = " << cell.report.z1_z << "\n";
            } catch (const std::exception& e) {
                ++failed;
                log << "failed: " << e.what() << "\n";
            }
        }
        std::vector<std::string> row;
        row.push_back(format_g17(ok ? spr_acc / static_cast<double>(ok) : target));
        for (std::size_t i = 0; i < acc.size(); ++i)
            row.push_back(format_g17(ok ? acc[i] / static_cast<double>(ok)
                                        : std::numeric_limits<double>::quiet_NaN()));
        row.push_back(std::to_string(ok));
        row.push_back(std::to_string(failed));
        out_rows.push_back(std::move(row));
    }
    write_table(dir + "/spr_table.csv", headers, out_rows);
    log << "wrote " << dir << "/spr_table.csv\n";
    return 0;
}

// Run the finite-difference gradient suite; prints one line per check and
// returns nonzero if any analytic gradient disagrees.
inline int cmd_gradcheck(std::ostream& log, double tol = 1e-4) {
    const std::vector<GradCheckResult> results = run_gradient_suite(tol);
    std::size_t failures = 0;
    for (const auto& r : results) {
        if (!r.pass) ++failures;
        log << (r.pass ? "PASS " : "FAIL ") << std::left << std::setw(28) << r.name
            << " max_rel_err = " << std::scientific << std::setprecision(3) << r.max_rel_err
            << std::defaultfloat << "  (" << r.checked << " checked, " << r.skipped
            << " skipped)\n";
    }
    log << "gradient suite: " << (results.size() - failures) << "/" << results.size()
        << " checks passed\n";
    return failures == 0 ? 0 : 1;
}

} // namespace mvlat
