#pragma once

#include <istream>
#include <map>
#include <string>
#include <vector>

#include "fslab/ccd.hpp"

namespace fslab {

/// Solver cell of an experiment: a fixed iteration count ("ccd_n") or a
/// damped fixed point ("converge").
struct SolverSpec {
    std::string mode = "ccd_n";
    int n = 1;            // iteration count for ccd_n
    double tol = 1e-9;    // convergence tolerance
    int max_iter = 200;
    double damping = 0.7;

    std::string label() const;  // e.g. "ccd_n" / "converge"
};

/// Parsed experiment file. Grammar: one `key = value` pair per line,
/// '#' starts a comment. Keys:
///   preset          model preset name (default insulator-1x1)
///   dims            strictly increasing per-axis mesh sizes, e.g. "2 3 4 5"
///   settings        comma/space list of none|eps|contraction|both
///   solver          repeatable; "ccd_n:<n>" or "converge"
///   tol, max_iter, damping, coupling_scale, sigma (Ewald, 0 = default)
///   tdl_proxy_dim   proxy mesh size (0 disables verdicts)
///   csv, json       output paths
///   memory_gb       refusal bound for the ERI block estimate
struct ExperimentConfig {
    std::string preset = "insulator-1x1";
    std::vector<int> dims;
    std::vector<CorrectionSetting> settings;
    std::vector<SolverSpec> solvers;
    int tdl_proxy_dim = 0;
    double coupling_scale = 1.0;
    double sigma = 0.0;
    std::string out_csv = "scaling.csv";
    std::string out_json = "scaling.json";
    double memory_gb = 4.0;

    static ExperimentConfig parse(std::istream& in);
    static ExperimentConfig parse_file(const std::string& path);
    void validate() const;  // throws config_error
};

struct ResultRow {
    int dim = 0;   // per-axis mesh size
    int nk = 0;    // dim^3
    CorrectionSetting setting;
    std::string solver_mode;
    int n = 0;     // iterations taken (ccd_n order, or converge count)
    double energy = 0.0;
    bool converged = false;
    double residual = 0.0;
};

struct ScalingSeries {
    struct Entry {
        int nk;
        double energy;
    };
    std::vector<Entry> entries;  // N_k strictly increasing
    CorrectionSetting setting;
};

struct PowerLawFit {
    double c0 = 0.0;
    double c1 = 0.0;
    double alpha = 0.0;
    double rms_residual = 0.0;
};

struct ExponentVerdict {
    std::string better;          // "one-third" | "one" | "indeterminate"
    double residual_ratio = 0.0; // worse rms / better rms (log scale)
    double rms_one_third = 0.0;
    double rms_one = 0.0;
};

struct ExperimentResults {
    ExperimentConfig config;
    std::vector<ResultRow> rows;
    // both-corrections proxy energy per solver label (empty if disabled)
    std::map<std::string, double> proxies;
    // verdict per "<solver>/<setting>" key, in config order
    std::vector<std::pair<std::string, ExponentVerdict>> verdicts;
};

/// Least squares of E(N_k) = c0 + c1 N_k^{-alpha}. alpha <= 0 requests a
/// free exponent (golden section over [0.1, 2] wrapping the linear solve;
/// needs >= 4 entries). pin_c0 forces c0 = c0_value.
PowerLawFit fit_power_law(const ScalingSeries& series, double alpha,
                          bool pin_c0 = false, double c0_value = 0.0);

/// Fits log|E - tdl_ref| with slopes -1/3 and -1 (c0 pinned to 0) and
/// reports the better exponent. All errors below 1e-12 -> "indeterminate".
ExponentVerdict discriminate_exponent(const ScalingSeries& series, double tdl_ref);

/// Full sweep: for each dim, build orbitals and one CcdEngine, run every
/// (solver, setting) cell; then the both-corrections proxy per solver and
/// the exponent verdicts. Divergent cells become failed rows, not errors.
ExperimentResults run_experiment(const ExperimentConfig& config);

std::string csv_header();
std::string csv_line(const ResultRow& row);
ResultRow parse_csv_line(const std::string& line);  // throws config_error
std::vector<ResultRow> parse_csv_file(const std::string& path);

/// Writes the CSV (byte-deterministic for a fixed config) and the JSON
/// summary (config echo, proxies, fits, verdicts).
void emit_report(const ExperimentResults& results);

std::string setting_name(const CorrectionSetting& s);  // none|eps|contraction|both

}  // namespace fslab
