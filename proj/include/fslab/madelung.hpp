#pragma once

#include <Eigen/Dense>

#include "fslab/lattice.hpp"
#include "fslab/quad.hpp"

namespace fslab {

/// Parameters for the Ewald evaluation of the Madelung constant. Cutoffs are
/// auto-selected (make) so the smallest neglected lattice term is < 1e-13;
/// madelung_constant re-validates that bound.
struct EwaldSpec {
    UnitCell cell;
    Eigen::Vector3i mesh_dims{1, 1, 1};
    double sigma = 0.0;         // Bohr^2
    double recip_cutoff = 0.0;  // Bohr^-1, on |q + G|
    double real_cutoff = 0.0;   // Bohr, on superlattice |R|

    /// sigma <= 0 selects the default (|Omega|^{1/3}/(2 pi))^2 * pi.
    static EwaldSpec make(const UnitCell& cell, const Eigen::Vector3i& mesh_dims,
                          double sigma = 0.0);
};

struct MadelungResult {
    double xi = 0.0;  // Hartree
    double sigma_used = 0.0;
    long n_recip_terms = 0;
    long n_real_terms = 0;
};

/// Screened reciprocal sum h_sigma(q) = sum_G (4 pi/|Omega|)
/// exp(-sigma |q+G|^2)/|q+G|^2; the q+G = 0 term is omitted, so the
/// value at q = 0 is the G != 0 remainder.
double h_sigma(const Eigen::Vector3d& q, const EwaldSpec& spec);

/// h_sigma packaged over the reciprocal cell for the quad engine, with the
/// on-mesh value at q = 0 following the zero-mode-omitted convention.
quad::PeriodicIntegrand h_sigma_integrand(const EwaldSpec& spec);

/// Closed form of int_{Omega*} h_sigma dq (the G-sum unfolds the tiles of
/// Omega* to R^3): (4 pi/|Omega|) * 2 pi^{3/2} / sqrt(sigma).
double integral_h_sigma(const EwaldSpec& spec);

/// Full Eq.-(4) Ewald value (mesh-minus-integral of h_sigma, the zero-mode
/// constant, and the erfc superlattice sum).
MadelungResult madelung_constant(const EwaldSpec& spec);

/// The quadrature-minus-integral part alone: (1/N_k) sum_{q in K_q} h_sigma
/// - (1/|Omega*|) int h_sigma. Differs from xi by O(N_k^-1).
double madelung_from_subtraction(const EwaldSpec& spec);

}  // namespace fslab
