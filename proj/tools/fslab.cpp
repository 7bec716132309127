#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "fslab/errors.hpp"
#include "fslab/madelung.hpp"
#include "fslab/quad.hpp"
#include "fslab/scaling.hpp"

namespace {

using namespace fslab;

// minimal key=value reader for the madelung/quadlab sweep files
std::map<std::string, std::string> read_kv(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) throw config_error("cannot open config file: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto strip = [](std::string s) {
            std::size_t a = s.find_first_not_of(" \t\r\n");
            if (a == std::string::npos) return std::string();
            return s.substr(a, s.find_last_not_of(" \t\r\n") - a + 1);
        };
        line = strip(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw config_error("expected key = value: " + line);
        kv[strip(line.substr(0, eq))] = strip(line.substr(eq + 1));
    }
    return kv;
}

std::vector<double> num_list(const std::string& s, const std::string& key) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (ss >> tok) {
        try {
            out.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw config_error("bad numeric list for '" + key + "': " + s);
        }
    }
    if (out.empty()) throw config_error("empty list for '" + key + "'");
    return out;
}

int cmd_run(const std::string& config_path) {
    ExperimentConfig cfg = ExperimentConfig::parse_file(config_path);
    ExperimentResults res = run_experiment(cfg);
    emit_report(res);
    std::cout << res.rows.size() << " rows -> " << cfg.out_csv << "\n";
    for (const auto& [solver, e] : res.proxies)
        std::printf("proxy %-12s %.12f Ha (dim %d)\n", solver.c_str(), e,
                    cfg.tdl_proxy_dim);
    for (const auto& [cell, v] : res.verdicts)
        std::printf("%-24s -> %-11s (residual ratio %.2f)\n", cell.c_str(),
                    v.better.c_str(), v.residual_ratio);
    for (const ResultRow& r : res.rows)
        if (!std::isfinite(r.energy)) {
            std::cerr << "divergent cell at dims " << r.dim << " ("
                      << setting_name(r.setting) << ", " << r.solver_mode << ")\n";
            return 3;
        }
    return 0;
}

int cmd_madelung(const std::string& config_path) {
    auto kv = read_kv(config_path);
    std::string preset = kv.count("preset") ? kv["preset"] : "insulator-1x1";
    BandModel model = BandModel::preset(preset);
    std::vector<double> dims = kv.count("dims") ? num_list(kv["dims"], "dims")
                                                : std::vector<double>{1, 2, 3, 4};
    std::vector<double> sigmas = kv.count("sigmas") ? num_list(kv["sigmas"], "sigmas")
                                                    : std::vector<double>{0.0};
    std::ofstream csv;
    if (kv.count("csv")) {
        csv.open(kv["csv"]);
        if (!csv.good()) throw std::runtime_error("cannot write " + kv["csv"]);
        csv << "sigma,N_k,xi,n_recip_terms,n_real_terms\n";
    }
    for (double sg : sigmas)
        for (double dd : dims) {
            int d = static_cast<int>(dd);
            if (d < 1 || d != dd) throw config_error("dims must be positive integers");
            MadelungResult r = madelung_constant(EwaldSpec::make(model.cell, {d, d, d}, sg));
            std::printf("N_k = %-4d sigma = %-10.4f xi = %.12f  (%ld recip, %ld real)\n",
                        d * d * d, r.sigma_used, r.xi, r.n_recip_terms, r.n_real_terms);
            if (csv.is_open()) {
                char buf[160];
                std::snprintf(buf, sizeof buf, "%.17g,%d,%.17g,%ld,%ld\n", r.sigma_used,
                              d * d * d, r.xi, r.n_recip_terms, r.n_real_terms);
                csv << buf;
            }
        }
    return 0;
}

int cmd_quadlab(const std::string& config_path) {
    auto kv = read_kv(config_path);
    std::vector<double> msd = kv.count("ms") ? num_list(kv["ms"], "ms")
                                             : std::vector<double>{6, 8, 12, 16};
    std::vector<int> ms;
    for (double m : msd) {
        if (m < 2 || m != std::floor(m)) throw config_error("ms must be integers >= 2");
        ms.push_back(static_cast<int>(m));
    }
    std::string path = kv.count("csv") ? kv["csv"] : "quadlab.csv";
    std::ofstream csv(path);
    if (!csv.good()) throw std::runtime_error("cannot write " + path);
    csv << "lemma_id,gamma,s,m,abs_error,fitted_slope\n";

    auto emit = [&](const char* id, double gamma, int s,
                    const std::vector<std::pair<int, double>>& errs) {
        quad::ConvergenceSeries series;
        for (const auto& [m, e] : errs) series.entries.push_back({m, e});
        double slope = std::nan("");
        try {
            slope = quad::fit_slope(series);
        } catch (const std::exception&) {
            // zero errors (already converged): slope stays nan
        }
        for (const auto& [m, e] : errs) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "%s,%.17g,%d,%d,%.17g,%.17g\n", id, gamma, s,
                          m, e, slope);
            csv << buf;
        }
        std::printf("%-12s gamma = %-4g s = %d  slope = %.3f\n", id, gamma, s, slope);
    };

    {
        quad::PeriodicIntegrand f = quad::smooth_test_integrand();
        double ref = quad::smooth_test_integral();
        std::vector<std::pair<int, double>> errs;
        for (int m : ms) errs.emplace_back(m, quad::quad_error(f, m, ref));
        emit("quaderror0", 0.0, 0, errs);
    }
    {
        quad::PeriodicIntegrand f = quad::periodized_power(-2.0);
        double ref = quad::periodized_power_integral(-2.0);
        std::vector<std::pair<int, double>> errs;
        for (int m : ms) errs.emplace_back(m, quad::quad_error(f, m, ref));
        emit("quaderror1", -2.0, 0, errs);
    }
    {
        quad::SubtractionLab lab = quad::make_subtraction_lab();
        quad::SubtractedIntegrand sub =
            quad::subtract_singularity(lab.f, lab.h, lab.integral_h);
        quad::PeriodicIntegrand sym = quad::symmetrize(sub.difference);
        std::vector<std::pair<int, double>> errs;
        for (int m : ms)
            errs.emplace_back(
                m, std::abs(quad::trapezoid(sym, m).value + sub.offset - lab.integral_f));
        emit("quaderror2", -2.0, 0, errs);
    }
    {
        Eigen::Vector3d z2(0.27, 0.14, 0.38);
        quad::PeriodicIntegrand f = quad::make_singular_product(-2, 1, z2);
        quad::Complex ref = quad::trapezoid(f, 64).value;
        std::vector<std::pair<int, double>> errs;
        for (int m : ms) errs.emplace_back(m, std::abs(quad::trapezoid(f, m).value - ref));
        emit("quaderror2_2", -2.0, 1, errs);
    }
    std::cout << "wrote " << path << "\n";
    return 0;
}

int cmd_fit(const std::string& csv_path, const std::string& alpha_arg) {
    double alpha;
    if (alpha_arg == "free") {
        alpha = -1.0;
    } else {
        try {
            alpha = std::stod(alpha_arg);
        } catch (const std::exception&) {
            throw config_error("--alpha must be 'free' or a positive number");
        }
        if (alpha <= 0.0) throw config_error("--alpha must be positive (or 'free')");
    }
    std::vector<ResultRow> rows = parse_csv_file(csv_path);
    // group by (solver_mode, n, setting), preserving first-seen order
    std::vector<std::pair<std::string, ScalingSeries>> cells;
    for (const ResultRow& r : rows) {
        if (!std::isfinite(r.energy)) continue;
        std::string key = r.solver_mode +
                          (r.solver_mode == "ccd_n" ? ":" + std::to_string(r.n) : "") +
                          "/" + setting_name(r.setting);
        auto it = std::find_if(cells.begin(), cells.end(),
                               [&](const auto& c) { return c.first == key; });
        if (it == cells.end()) {
            cells.emplace_back(key, ScalingSeries{});
            it = std::prev(cells.end());
        }
        it->second.entries.push_back({r.nk, r.energy});
    }
    if (cells.empty()) throw config_error("no finite rows in " + csv_path);
    for (auto& [key, series] : cells) {
        if (series.entries.size() < (alpha > 0.0 ? 3u : 4u)) {
            std::printf("%-24s skipped (%zu points)\n", key.c_str(),
                        series.entries.size());
            continue;
        }
        PowerLawFit f = fit_power_law(series, alpha);
        std::printf("%-24s C0 = %+.10f  C1 = %+.10f  alpha = %.4f  rms = %.3e\n",
                    key.c_str(), f.c0, f.c1, f.alpha, f.rms_residual);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"finite-size scaling laboratory for periodic CCD(n)"};
    app.require_subcommand(1);

    std::string run_cfg, mad_cfg, quad_cfg, fit_csv;
    std::string alpha_arg = "free";
    CLI::App* run = app.add_subcommand("run", "mesh sweep across correction settings");
    run->add_option("config", run_cfg, "experiment config file")->required();
    CLI::App* mad = app.add_subcommand("madelung", "Madelung constant sweep");
    mad->add_option("config", mad_cfg, "sweep config file")->required();
    CLI::App* qd = app.add_subcommand("quadlab", "quadrature lemma sweeps");
    qd->add_option("config", quad_cfg, "sweep config file")->required();
    CLI::App* ft = app.add_subcommand("fit", "power-law fit of a run CSV");
    ft->add_option("csv", fit_csv, "CSV produced by `fslab run`")->required();
    ft->add_option("--alpha", alpha_arg, "free | positive exponent (e.g. 0.333, 1)");

    try {
        app.parse(argc, argv);
        if (run->parsed()) return cmd_run(run_cfg);
        if (mad->parsed()) return cmd_madelung(mad_cfg);
        if (qd->parsed()) return cmd_quadlab(quad_cfg);
        return cmd_fit(fit_csv, alpha_arg);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 2;
    } catch (const fslab::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const fslab::divergence_error& e) {
        std::cerr << "solver divergence: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
