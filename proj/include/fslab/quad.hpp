#pragma once

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <vector>

#include "fslab/lattice.hpp"

namespace fslab::quad {

using Complex = std::complex<double>;

struct SingularPoint {
    Eigen::Vector3d location;  // cartesian
    double order;              // algebraic singularity order gamma
};

/// A periodic integrand over a parallelepiped period cell (columns of `cell`
/// are the period vectors; identity = unit cube).
struct PeriodicIntegrand {
    std::function<Complex(const Eigen::Vector3d&)> eval;
    Eigen::Matrix3d cell = Eigen::Matrix3d::Identity();
    std::vector<SingularPoint> singular_points;
    Complex value_at_singularity = 0.0;
};

struct QuadratureResult {
    Complex value = 0.0;
    int mesh_size = 0;  // points per axis
    long n_points = 0;
};

struct ConvergenceSeries {
    struct Entry {
        int m;
        double abs_error;
    };
    std::vector<Entry> entries;
};

/// Trapezoidal rule (|V|/m^3) sum over the gamma-centered m^3 mesh of the
/// period cell. On-mesh singular points evaluate to value_at_singularity.
QuadratureResult trapezoid(const PeriodicIntegrand& f, int m);
QuadratureResult trapezoid(const PeriodicIntegrand& f, const KMesh& mesh);

double quad_error(const PeriodicIntegrand& f, int m, Complex reference_integral);

/// Integrand g - h together with the exact integral of h, so that
/// estimate(m) = Q(g - h) + integral_of_h approximates the integral of g.
struct SubtractedIntegrand {
    PeriodicIntegrand difference;
    Complex offset;

    Complex estimate(int m) const { return trapezoid(difference, m).value + offset; }
};

SubtractedIntegrand subtract_singularity(const PeriodicIntegrand& f,
                                         const PeriodicIntegrand& h,
                                         Complex integral_of_h);

/// x -> (f(x) + f(-x))/2.
PeriodicIntegrand symmetrize(const PeriodicIntegrand& f);

/// Estimated singularity order: least-squares slope of log|f| vs log r along
/// averaged rays emanating from `point`.
double verify_order(const PeriodicIntegrand& f, const Eigen::Vector3d& point,
                    const std::vector<double>& radii);

/// Least-squares slope of log(error) vs log(m).
double fit_slope(const ConvergenceSeries& series);

// --- integrand library (unit cube, periodized gaussian-screened profiles) ---

/// Periodized exp(-sigma |x|^2) |x|^gamma; singular of order gamma at 0 for
/// gamma < 0, smooth for gamma = 0. Images over {-1,0,1}^3 so the neglected
/// tail is < 1e-13 of the integral for sigma >= 15.
PeriodicIntegrand periodized_power(double gamma, double sigma = 15.0);

/// Exact integral over the unit cube of periodized_power (equals the full
/// R^3 integral of the screened profile).
double periodized_power_integral(double gamma, double sigma = 15.0);

/// Smooth periodic test integrand with a known analytic integral.
PeriodicIntegrand smooth_test_integrand();
double smooth_test_integral();

/// Integrand pair for the subtraction lemma: f has a gamma = -2 leading term
/// matched by h, an odd order -1 term (removed by symmetrization) and an even
/// non-smooth order 0 term that sets the final m^-3 rate. Both integrals are
/// analytic.
struct SubtractionLab {
    PeriodicIntegrand f;
    PeriodicIntegrand h;
    Complex integral_f;
    Complex integral_h;
};
SubtractionLab make_subtraction_lab(double sigma = 40.0);

/// f1 * f2 with f1 of order gamma at 0 and f2 of order 0 at z2 (fractional
/// coordinates) whose derivatives through order s vanish at 0, matching the
/// product-quadrature lemma hypotheses. Preconditions: gamma in {-2,-1},
/// gamma + s + 1 <= 0, z2 != 0.
PeriodicIntegrand make_singular_product(int gamma, int s, const Eigen::Vector3d& z2);

}  // namespace fslab::quad
