#include "fslab/quad.hpp"

#include <cmath>
#include <stdexcept>

namespace fslab::quad {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

// Fractional coordinates of the singular points that land on the m^3
// gamma-centered mesh, as folded numerator triples.
std::vector<Eigen::Vector3i> on_mesh_singulars(const PeriodicIntegrand& f, int m) {
    std::vector<Eigen::Vector3i> out;
    Eigen::Matrix3d inv = f.cell.inverse();
    for (const auto& sp : f.singular_points) {
        Eigen::Vector3d frac = inv * sp.location;
        Eigen::Vector3i num;
        bool on = true;
        for (int d = 0; d < 3; ++d) {
            double x = frac[d] * m;
            double r = std::round(x);
            if (std::abs(x - r) > 1e-9 * m) {
                on = false;
                break;
            }
            int n = static_cast<int>(r) % m;
            if (n < 0) n += m;
            if (2 * n >= m) n -= m;
            num[d] = n;
        }
        if (on) out.push_back(num);
    }
    return out;
}

}  // namespace

QuadratureResult trapezoid(const PeriodicIntegrand& f, int m) {
    if (m < 1) throw std::invalid_argument("mesh size must be >= 1");
    auto sing = on_mesh_singulars(f, m);
    QuadratureResult res;
    res.mesh_size = m;
    res.n_points = static_cast<long>(m) * m * m;
    Complex sum = 0.0;
    int lo = -(m / 2), hi = m - m / 2 - 1;
    for (int i = lo; i <= hi; ++i)
        for (int j = lo; j <= hi; ++j)
            for (int k = lo; k <= hi; ++k) {
                Eigen::Vector3i n{i, j, k};
                bool hit = false;
                for (const auto& s : sing)
                    if (s == n) {
                        hit = true;
                        break;
                    }
                if (hit) {
                    sum += f.value_at_singularity;
                    continue;
                }
                Eigen::Vector3d frac(double(i) / m, double(j) / m, double(k) / m);
                sum += f.eval(f.cell * frac);
            }
    res.value = sum * (std::abs(f.cell.determinant()) / double(res.n_points));
    return res;
}

QuadratureResult trapezoid(const PeriodicIntegrand& f, const KMesh& mesh) {
    const auto& d = mesh.dims();
    if (d[0] != d[1] || d[1] != d[2])
        throw std::invalid_argument("trapezoid expects an isotropic mesh");
    if ((f.cell - mesh.recip().basis).norm() > 1e-10 * f.cell.norm())
        throw std::invalid_argument("mesh period cell does not match the integrand");
    return trapezoid(f, d[0]);
}

double quad_error(const PeriodicIntegrand& f, int m, Complex reference_integral) {
    return std::abs(reference_integral - trapezoid(f, m).value);
}

SubtractedIntegrand subtract_singularity(const PeriodicIntegrand& f,
                                         const PeriodicIntegrand& h,
                                         Complex integral_of_h) {
    if ((f.cell - h.cell).norm() > 1e-12 * (1.0 + f.cell.norm()))
        throw std::invalid_argument("subtract_singularity: mismatched period cells");
    SubtractedIntegrand out;
    auto fe = f.eval, he = h.eval;
    out.difference.eval = [fe, he](const Eigen::Vector3d& x) { return fe(x) - he(x); };
    out.difference.cell = f.cell;
    out.difference.singular_points = f.singular_points;
    for (const auto& sp : h.singular_points) out.difference.singular_points.push_back(sp);
    out.difference.value_at_singularity = 0.0;
    out.offset = integral_of_h;
    return out;
}

PeriodicIntegrand symmetrize(const PeriodicIntegrand& f) {
    PeriodicIntegrand out;
    auto fe = f.eval;
    out.eval = [fe](const Eigen::Vector3d& x) { return 0.5 * (fe(x) + fe(-x)); };
    out.cell = f.cell;
    out.singular_points = f.singular_points;
    for (const auto& sp : f.singular_points)
        out.singular_points.push_back({-sp.location, sp.order});
    out.value_at_singularity = f.value_at_singularity;
    return out;
}

double verify_order(const PeriodicIntegrand& f, const Eigen::Vector3d& point,
                    const std::vector<double>& radii) {
    if (radii.size() < 2) throw std::invalid_argument("verify_order needs >= 2 radii");
    for (std::size_t i = 0; i < radii.size(); ++i) {
        if (!(radii[i] > 0.0)) throw std::invalid_argument("radii must be positive");
        if (i > 0 && !(radii[i] < radii[i - 1]))
            throw std::invalid_argument("radii must be strictly decreasing");
    }
    static const std::vector<Eigen::Vector3d> dirs = [] {
        std::vector<Eigen::Vector3d> v = {
            {1, 0, 0},  {0, 1, 0},  {0, 0, 1},  {1, 1, 0},  {1, 0, 1},
            {0, 1, 1},  {1, -1, 0}, {1, 0, -1}, {0, 1, -1}, {1, 1, 1},
            {1, -1, 1}, {-1, 1, 1}, {1, 1, -1}};
        for (auto& d : v) d.normalize();
        return v;
    }();
    std::vector<double> lx, ly;
    for (double r : radii) {
        double acc = 0.0;
        for (const auto& u : dirs) {
            Complex v = f.eval(point + r * u);
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
                throw std::runtime_error("integrand evaluates non-finite off the singular point");
            acc += std::log(std::abs(v) + 1e-300);
        }
        lx.push_back(std::log(r));
        ly.push_back(acc / double(dirs.size()));
    }
    double n = double(lx.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sx += lx[i];
        sy += ly[i];
        sxx += lx[i] * lx[i];
        sxy += lx[i] * ly[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

double fit_slope(const ConvergenceSeries& series) {
    if (series.entries.size() < 3)
        throw std::invalid_argument("fit_slope needs at least 3 entries");
    double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    int prev_m = 0;
    for (const auto& e : series.entries) {
        if (e.m <= prev_m) throw std::invalid_argument("mesh sizes must be increasing");
        prev_m = e.m;
        if (!(e.abs_error > 0.0))
            throw std::invalid_argument("degenerate series: non-positive error");
        double x = std::log(double(e.m)), y = std::log(e.abs_error);
        n += 1;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// ---------------------------------------------------------------------------
// Integrand library
// ---------------------------------------------------------------------------

namespace {

// Periodized sum over images in {-1,0,1}^3 of a radial profile about
// `center` (fractional coordinates in the unit cube).
template <typename Profile>
Complex periodized(const Eigen::Vector3d& x, const Eigen::Vector3d& center,
                   Profile&& profile) {
    Eigen::Vector3d y0 = x - center;
    for (int d = 0; d < 3; ++d) y0[d] -= std::floor(y0[d] + 0.5);
    Complex sum = 0.0;
    for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j)
            for (int k = -1; k <= 1; ++k) {
                Eigen::Vector3d y = y0 - Eigen::Vector3d(i, j, k);
                sum += profile(y);
            }
    return sum;
}

}  // namespace

PeriodicIntegrand periodized_power(double gamma, double sigma) {
    PeriodicIntegrand f;
    f.eval = [gamma, sigma](const Eigen::Vector3d& x) {
        return periodized(x, Eigen::Vector3d::Zero(), [&](const Eigen::Vector3d& y) {
            double r2 = y.squaredNorm();
            if (r2 < 1e-300) return 0.0;
            return std::exp(-sigma * r2) * std::pow(r2, 0.5 * gamma);
        });
    };
    if (gamma < 0.0) f.singular_points.push_back({Eigen::Vector3d::Zero(), gamma});
    return f;
}

double periodized_power_integral(double gamma, double sigma) {
    // int_{R^3} exp(-sigma r^2) r^gamma = 2 pi sigma^{-(gamma+3)/2} Gamma((gamma+3)/2)
    return 2.0 * kPi * std::pow(sigma, -0.5 * (gamma + 3.0)) * std::tgamma(0.5 * (gamma + 3.0));
}

PeriodicIntegrand smooth_test_integrand() {
    PeriodicIntegrand f;
    f.eval = [](const Eigen::Vector3d& x) {
        return Complex(std::exp(std::sin(kTwoPi * x[0])) * std::exp(std::cos(kTwoPi * (x[1] - 0.3))) *
                       (1.5 + std::cos(kTwoPi * x[2])));
    };
    return f;
}

double smooth_test_integral() {
    double i0 = std::cyl_bessel_i(0.0, 1.0);
    return i0 * i0 * 1.5;
}

SubtractionLab make_subtraction_lab(double sigma) {
    SubtractionLab lab;
    lab.h = periodized_power(-2.0, sigma);
    lab.integral_h = periodized_power_integral(-2.0, sigma);
    lab.f.eval = [sigma](const Eigen::Vector3d& x) {
        return periodized(x, Eigen::Vector3d::Zero(), [&](const Eigen::Vector3d& y) {
            double r2 = y.squaredNorm();
            if (r2 < 1e-300) return 0.0;
            double odd = 0.8 * (y[0] + y[1] + y[2]);
            double even = 0.6 * y[0] * y[0];
            return std::exp(-sigma * r2) * (1.0 + odd + even) / r2;
        });
    };
    lab.f.singular_points.push_back({Eigen::Vector3d::Zero(), -2.0});
    // Odd term integrates to zero; even term is (0.6/3) int exp(-sigma r^2).
    lab.integral_f = lab.integral_h + 0.2 * std::pow(kPi / sigma, 1.5);
    return lab;
}

PeriodicIntegrand make_singular_product(int gamma, int s, const Eigen::Vector3d& z2) {
    if (gamma != -2 && gamma != -1)
        throw std::invalid_argument("make_singular_product: gamma must be -2 or -1");
    if (s < 0 || gamma + s + 1 > 0)
        throw std::invalid_argument("make_singular_product: require gamma + s + 1 <= 0");
    if (z2.norm() < 1e-12)
        throw std::invalid_argument("make_singular_product: z2 must be nonzero");

    // Soft screening so the two factors overlap; sharper gaussians suppress
    // each singularity's amplitude at the other's center to the noise floor.
    const double sigma = 10.0;
    auto f1 = [gamma, sigma](const Eigen::Vector3d& x) {
        return periodized(x, Eigen::Vector3d::Zero(), [&](const Eigen::Vector3d& y) {
            double r2 = y.squaredNorm();
            if (r2 < 1e-300) return 0.0;
            return std::exp(-sigma * r2) * std::pow(r2, 0.5 * gamma);
        });
    };
    // Smooth periodic factor vanishing at 0 exactly through derivative order s.
    auto pfac = [s](const Eigen::Vector3d& x) {
        if (s == 0)
            return std::sin(kTwoPi * x[0]) + 0.7 * std::sin(kTwoPi * x[1]) +
                   0.49 * std::sin(kTwoPi * x[2]);
        return (1.0 - std::cos(kTwoPi * x[0])) + 0.7 * (1.0 - std::cos(kTwoPi * x[1])) +
               0.49 * (1.0 - std::cos(kTwoPi * x[2]));
    };
    // Bounded order-0 singular factor at z2 (angular discontinuity).
    Eigen::Vector3d z2c = z2;
    auto ufac = [z2c, sigma](const Eigen::Vector3d& x) {
        return periodized(x, z2c, [&](const Eigen::Vector3d& y) {
            double r2 = y.squaredNorm();
            if (r2 < 1e-300) return 0.0;
            return std::exp(-sigma * r2) * (0.5 + y[0] * y[0] / r2);
        });
    };

    PeriodicIntegrand f;
    f.eval = [f1, pfac, ufac](const Eigen::Vector3d& x) {
        return f1(x) * pfac(x) * ufac(x);
    };
    f.singular_points.push_back({Eigen::Vector3d::Zero(), double(gamma + s + 1)});
    f.singular_points.push_back({z2c, 0.0});
    return f;
}

}  // namespace fslab::quad
