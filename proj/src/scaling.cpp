#include "fslab/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "fslab/errors.hpp"
#include "fslab/madelung.hpp"

namespace fslab {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> tokens(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s + " ") {
        if (c == ' ' || c == '\t' || c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    return out;
}

double to_double(const std::string& s, const std::string& key) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw config_error("bad numeric value for '" + key + "': " + s);
    }
}

int to_int(const std::string& s, const std::string& key) {
    double v = to_double(s, key);
    int i = static_cast<int>(std::lround(v));
    if (i != v) throw config_error("expected integer for '" + key + "': " + s);
    return i;
}

CorrectionSetting setting_of(const std::string& name) {
    if (name == "none") return {false, false};
    if (name == "eps") return {true, false};
    if (name == "contraction") return {false, true};
    if (name == "both") return {true, true};
    throw config_error("unknown correction setting: " + name);
}

SolverSpec solver_of(const std::string& value) {
    SolverSpec sp;
    if (value == "converge") {
        sp.mode = "converge";
    } else if (value.rfind("ccd_n:", 0) == 0) {
        sp.mode = "ccd_n";
        sp.n = to_int(value.substr(6), "solver");
        if (sp.n < 1) throw config_error("ccd_n order must be >= 1");
    } else {
        throw config_error("unknown solver '" + value + "' (ccd_n:<n> | converge)");
    }
    return sp;
}

/// Grouped-block memory of CcdEngine at o=v bands, plus the pair cache.
double engine_bytes(int nk, int o, int v, int n_bands) {
    double blocks = 7.0 * 16.0 * std::pow(double(nk), 3) * o * v * o * v;
    double pairs = 16.0 * double(nk) * nk * n_bands * n_bands * 125.0;
    return blocks + pairs;
}

struct FixedFit {
    double c0, c1, rms;
};

FixedFit linear_fit(const ScalingSeries& s, double alpha, bool pin_c0, double c0v) {
    const auto& e = s.entries;
    double c0, c1;
    if (pin_c0) {
        double num = 0.0, den = 0.0;
        for (const auto& p : e) {
            double x = std::pow(double(p.nk), -alpha);
            num += x * (p.energy - c0v);
            den += x * x;
        }
        c0 = c0v;
        c1 = num / den;
    } else {
        Eigen::Matrix2d m = Eigen::Matrix2d::Zero();
        Eigen::Vector2d r = Eigen::Vector2d::Zero();
        for (const auto& p : e) {
            Eigen::Vector2d row(1.0, std::pow(double(p.nk), -alpha));
            m += row * row.transpose();
            r += row * p.energy;
        }
        if (std::abs(m.determinant()) < 1e-14 * m.norm() * m.norm())
            throw config_error("degenerate power-law design (identical N_k values)");
        Eigen::Vector2d c = m.ldlt().solve(r);
        c0 = c(0);
        c1 = c(1);
    }
    double ss = 0.0;
    for (const auto& p : e) {
        double d = p.energy - c0 - c1 * std::pow(double(p.nk), -alpha);
        ss += d * d;
    }
    return {c0, c1, std::sqrt(ss / e.size())};
}

/// rms of log|err| against slope -alpha with the intercept solved in
/// closed form (c0 pinned to zero in the energy model).
double log_rms(const std::vector<std::pair<double, double>>& loge, double alpha) {
    double mu = 0.0;
    for (const auto& [ln, le] : loge) mu += le + alpha * ln;
    mu /= loge.size();
    double ss = 0.0;
    for (const auto& [ln, le] : loge) {
        double d = le + alpha * ln - mu;
        ss += d * d;
    }
    return std::sqrt(ss / loge.size());
}

void append_row(std::vector<ResultRow>& rows, int dim, const CorrectionSetting& st,
                const SolverSpec& sp, const CcdEngine& engine,
                const OrbitalEnergySet& eps, double xi) {
    ResultRow row;
    row.dim = dim;
    row.nk = dim * dim * dim;
    row.setting = st;
    row.solver_mode = sp.mode;
    row.n = sp.n;
    try {
        if (sp.mode == "ccd_n") {
            auto [t, rep] = engine.ccd_n(sp.n, eps, st, xi);
            row.energy = rep.energy.real();
            row.converged = true;  // fixed order reached by construction
            row.residual = rep.residual_1norm;
        } else {
            auto [t, rep] =
                engine.ccd_converge(eps, st, xi, sp.tol, sp.max_iter, sp.damping);
            row.energy = rep.energy.real();
            row.converged = rep.converged;
            row.residual = rep.residual_1norm;
            row.n = rep.iterations;
        }
    } catch (const divergence_error&) {
        row.energy = std::nan("");
        row.converged = false;
        row.residual = std::numeric_limits<double>::infinity();
    }
    rows.push_back(row);
}

}  // namespace

std::string SolverSpec::label() const {
    if (mode == "ccd_n") return "ccd_n:" + std::to_string(n);
    return "converge";
}

std::string setting_name(const CorrectionSetting& s) {
    if (s.correct_eps && s.correct_contraction) return "both";
    if (s.correct_eps) return "eps";
    if (s.correct_contraction) return "contraction";
    return "none";
}

ExperimentConfig ExperimentConfig::parse(std::istream& in) {
    ExperimentConfig cfg;
    SolverSpec defaults;  // tol/max_iter/damping applied to every solver
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("line " + std::to_string(lineno) +
                               ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key == "preset") {
            cfg.preset = value;
        } else if (key == "dims") {
            cfg.dims.clear();
            for (const std::string& t : tokens(value)) cfg.dims.push_back(to_int(t, key));
        } else if (key == "settings") {
            cfg.settings.clear();
            for (const std::string& t : tokens(value)) cfg.settings.push_back(setting_of(t));
        } else if (key == "solver") {
            cfg.solvers.push_back(solver_of(value));
        } else if (key == "tol") {
            defaults.tol = to_double(value, key);
        } else if (key == "max_iter") {
            defaults.max_iter = to_int(value, key);
        } else if (key == "damping") {
            defaults.damping = to_double(value, key);
        } else if (key == "coupling_scale") {
            cfg.coupling_scale = to_double(value, key);
        } else if (key == "sigma") {
            cfg.sigma = to_double(value, key);
        } else if (key == "tdl_proxy_dim") {
            cfg.tdl_proxy_dim = to_int(value, key);
        } else if (key == "csv") {
            cfg.out_csv = value;
        } else if (key == "json") {
            cfg.out_json = value;
        } else if (key == "memory_gb") {
            cfg.memory_gb = to_double(value, key);
        } else {
            throw config_error("unknown config key: " + key);
        }
    }
    if (cfg.solvers.empty()) cfg.solvers.push_back(SolverSpec{});
    for (SolverSpec& sp : cfg.solvers) {
        sp.tol = defaults.tol;
        sp.max_iter = defaults.max_iter;
        sp.damping = defaults.damping;
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) throw config_error("cannot open config file: " + path);
    return parse(in);
}

void ExperimentConfig::validate() const {
    if (dims.empty()) throw config_error("dims list is empty");
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (dims[i] < 1) throw config_error("dims must be positive");
        if (i > 0 && dims[i] <= dims[i - 1])
            throw config_error("dims must be strictly increasing");
    }
    if (settings.empty()) throw config_error("settings list is empty");
    if (solvers.empty()) throw config_error("solver list is empty");
    for (const SolverSpec& sp : solvers) {
        if (sp.tol <= 0.0) throw config_error("tol must be positive");
        if (sp.max_iter < 1) throw config_error("max_iter must be >= 1");
        if (sp.damping <= 0.0 || sp.damping > 1.0)
            throw config_error("damping must lie in (0, 1]");
    }
    if (coupling_scale <= 0.0) throw config_error("coupling_scale must be positive");
    if (memory_gb <= 0.0) throw config_error("memory_gb must be positive");
    if (tdl_proxy_dim != 0) {
        if (tdl_proxy_dim <= dims.back())
            throw config_error("tdl_proxy_dim must exceed the largest dims entry");
        if (tdl_proxy_dim < 2 * dims.back())
            std::cerr << "warning: tdl_proxy_dim " << tdl_proxy_dim << " is below 2x "
                      << "the largest mesh (" << dims.back() << "); proxy bias may "
                      << "contaminate the smallest errors\n";
    }
}

PowerLawFit fit_power_law(const ScalingSeries& series, double alpha, bool pin_c0,
                          double c0_value) {
    const std::size_t n = series.entries.size();
    for (std::size_t i = 1; i < n; ++i)
        if (series.entries[i].nk <= series.entries[i - 1].nk)
            throw config_error("scaling series must have increasing N_k");
    if (alpha > 0.0) {
        if (n < 3) throw config_error("power-law fit needs >= 3 entries");
        FixedFit f = linear_fit(series, alpha, pin_c0, c0_value);
        return {f.c0, f.c1, alpha, f.rms};
    }
    if (n < 4) throw config_error("free-exponent fit needs >= 4 entries");
    // golden section on alpha in [0.1, 2]
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = 0.1, hi = 2.0;
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    auto rms_at = [&](double a) { return linear_fit(series, a, pin_c0, c0_value).rms; };
    double f1 = rms_at(x1), f2 = rms_at(x2);
    for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
        if (f1 < f2) {
            hi = x2; x2 = x1; f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = rms_at(x1);
        } else {
            lo = x1; x1 = x2; f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = rms_at(x2);
        }
    }
    double a = 0.5 * (lo + hi);
    FixedFit f = linear_fit(series, a, pin_c0, c0_value);
    return {f.c0, f.c1, a, f.rms};
}

ExponentVerdict discriminate_exponent(const ScalingSeries& series, double tdl_ref) {
    if (series.entries.size() < 4)
        throw config_error("exponent discrimination needs >= 4 points");
    std::vector<std::pair<double, double>> loge;
    bool any_live = false;
    for (const auto& p : series.entries) {
        double err = std::abs(p.energy - tdl_ref);
        if (err >= 1e-12) any_live = true;
        loge.emplace_back(std::log(double(p.nk)), std::log(std::max(err, 1e-300)));
    }
    ExponentVerdict v;
    if (!any_live) {
        v.better = "indeterminate";
        return v;
    }
    v.rms_one_third = log_rms(loge, 1.0 / 3.0);
    v.rms_one = log_rms(loge, 1.0);
    if (v.rms_one_third <= v.rms_one) {
        v.better = "one-third";
        v.residual_ratio = v.rms_one / std::max(v.rms_one_third, 1e-300);
    } else {
        v.better = "one";
        v.residual_ratio = v.rms_one_third / std::max(v.rms_one, 1e-300);
    }
    return v;
}

ExperimentResults run_experiment(const ExperimentConfig& config) {
    config.validate();
    ExperimentResults out;
    out.config = config;

    BandModel model = BandModel::preset(config.preset);
    {
        int worst = std::max(config.dims.back(), config.tdl_proxy_dim);
        double bytes = engine_bytes(worst * worst * worst, model.n_occ, model.n_vir,
                                    model.n_occ + model.n_vir);
        if (bytes > config.memory_gb * 1e9)
            throw config_error("mesh " + std::to_string(worst) + "^3 needs ~" +
                               std::to_string(bytes / 1e9) + " GB of ERI blocks, over "
                               "the configured bound of " +
                               std::to_string(config.memory_gb) + " GB");
    }

    auto run_mesh = [&](int d, const std::vector<CorrectionSetting>& settings,
                        std::vector<ResultRow>& rows) {
        KMesh mesh = build_mesh(reciprocal_of(model.cell), {d, d, d}, true);
        OrbitalTable orb = solve_bands(model, mesh);
        EriEvaluator ev(std::move(orb), config.coupling_scale);
        double xi =
            madelung_constant(EwaldSpec::make(model.cell, {d, d, d}, config.sigma)).xi;
        OrbitalEnergySet eps_u = orbital_energies(ev, false, 0.0);
        OrbitalEnergySet eps_c = orbital_energies(ev, true, xi);
        CcdEngine engine(ev);
        for (const SolverSpec& sp : config.solvers)
            for (const CorrectionSetting& st : settings)
                append_row(rows, d, st, sp, engine, st.correct_eps ? eps_c : eps_u, xi);
    };

    for (int d : config.dims) run_mesh(d, config.settings, out.rows);

    if (config.tdl_proxy_dim > 0) {
        std::vector<ResultRow> proxy_rows;
        run_mesh(config.tdl_proxy_dim, {CorrectionSetting{true, true}}, proxy_rows);
        for (std::size_t s = 0; s < config.solvers.size(); ++s)
            out.proxies[config.solvers[s].label()] = proxy_rows[s].energy;

        for (const SolverSpec& sp : config.solvers)
            for (const CorrectionSetting& st : config.settings) {
                ScalingSeries series;
                series.setting = st;
                for (const ResultRow& r : out.rows)
                    if (r.solver_mode == sp.mode && r.setting.correct_eps == st.correct_eps &&
                        r.setting.correct_contraction == st.correct_contraction &&
                        (sp.mode != "ccd_n" || r.n == sp.n) && std::isfinite(r.energy))
                        series.entries.push_back({r.nk, r.energy});
                if (series.entries.size() < 4) continue;
                ExponentVerdict v =
                    discriminate_exponent(series, out.proxies.at(sp.label()));
                out.verdicts.emplace_back(sp.label() + "/" + setting_name(st), v);
            }
    }
    return out;
}

std::string csv_header() {
    return "dims,N_k,setting_eps,setting_contraction,solver_mode,n,energy,converged,"
           "residual";
}

std::string csv_line(const ResultRow& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,%s,%d,%.17g,%d,%.17g", r.dim, r.nk,
                  r.setting.correct_eps ? 1 : 0, r.setting.correct_contraction ? 1 : 0,
                  r.solver_mode.c_str(), r.n, r.energy, r.converged ? 1 : 0, r.residual);
    return buf;
}

ResultRow parse_csv_line(const std::string& line) {
    std::vector<std::string> f;
    std::string cur;
    for (char c : line + ",") {
        if (c == ',') {
            f.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (f.size() != 9) throw config_error("CSV row needs 9 fields: " + line);
    ResultRow r;
    r.dim = to_int(f[0], "dims");
    r.nk = to_int(f[1], "N_k");
    r.setting.correct_eps = to_int(f[2], "setting_eps") != 0;
    r.setting.correct_contraction = to_int(f[3], "setting_contraction") != 0;
    r.solver_mode = f[4];
    r.n = to_int(f[5], "n");
    r.energy = to_double(f[6], "energy");
    r.converged = to_int(f[7], "converged") != 0;
    r.residual = to_double(f[8], "residual");
    return r;
}

std::vector<ResultRow> parse_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) throw config_error("cannot open CSV: " + path);
    std::string line;
    if (!std::getline(in, line) || trim(line) != csv_header())
        throw config_error("unexpected CSV header in " + path);
    std::vector<ResultRow> rows;
    while (std::getline(in, line))
        if (!trim(line).empty()) rows.push_back(parse_csv_line(line));
    return rows;
}

void emit_report(const ExperimentResults& results) {
    if (results.rows.empty()) throw config_error("no result rows to report");
    {
        std::ofstream csv(results.config.out_csv);
        if (!csv.good())
            throw std::runtime_error("cannot write " + results.config.out_csv);
        csv << csv_header() << "\n";
        for (const ResultRow& r : results.rows) csv << csv_line(r) << "\n";
    }
    nlohmann::json j;
    j["preset"] = results.config.preset;
    j["dims"] = results.config.dims;
    j["coupling_scale"] = results.config.coupling_scale;
    j["tdl_proxy_dim"] = results.config.tdl_proxy_dim;
    j["proxies"] = results.proxies;
    j["verdicts"] = nlohmann::json::array();
    for (const auto& [key, v] : results.verdicts)
        j["verdicts"].push_back({{"cell", key},
                                 {"better", v.better},
                                 {"residual_ratio", v.residual_ratio},
                                 {"rms_one_third", v.rms_one_third},
                                 {"rms_one", v.rms_one}});
    std::ofstream js(results.config.out_json);
    if (!js.good()) throw std::runtime_error("cannot write " + results.config.out_json);
    js << j.dump(2) << "\n";
}

}  // namespace fslab
