#pragma once

#include <Eigen/Dense>
#include <complex>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "fslab/lattice.hpp"

namespace fslab {

using Complex = std::complex<double>;

/// Analytic plane-wave Bloch model: h(k)[G,G'] = kinetic_scale |k+G|^2 d_GG'
/// + V(G-G'), with V Hermitian-generating (V(-D) = conj(V(D))). Stands in
/// for an SCF solution; the lowest n_occ bands are occupied.
/// Separable channel -strength * chi(k+G) chi(k+G')^* with the smooth raw
/// profile chi(q) = q_x^m0 q_y^m1 q_z^m2 exp(-(sum_d alpha_d q_d^2)^p).
/// Profiles are deliberately not normalized per k: chi depends on q = k+G
/// only, so the raw projector commutes with zone-boundary relabeling, while
/// a per-k normalization blows up where a monomial profile's support
/// collapses (q_x q_y q_z has no weight on any low shell near Gamma).
/// The super-Gaussian exponent p lets a profile mix the first G shells
/// strongly while staying negligible on the pw_set boundary (see the pw_set
/// note in BandModel::preset; a plain Gaussian cannot separate those scales).
/// A positive strength binds one band whose plane-wave content follows chi,
/// i.e. a *low*-kinetic band, which a local attractive well cannot produce
/// (its bound band is kinetic-rich and inverts the Fock-energy ordering).
/// Negative strengths push the odd-parity partners of zone-boundary
/// degeneracies up, which is what opens an indirect gap in the Fock
/// energies: without them the antisymmetric state at a face costs the same
/// kinetic energy as the occupied state there.
struct NonlocalChannel {
    double strength = 0.0;            // attractive if > 0
    std::array<double, 3> alpha{1.0, 1.0, 1.0}; // per-axis widths in Bohr^2
    std::array<int, 3> mono{0, 0, 0};           // monomial powers of the profile
    int power = 1;                              // super-Gaussian exponent p
};

struct BandModel {
    UnitCell cell;
    LatticeShellSet pw_set;                              // plane-wave G coords
    std::map<std::array<int, 3>, Complex> potential;     // V(D), D in L* coords
    std::vector<NonlocalChannel> channels;
    double kinetic_scale = 0.5;
    int n_occ = 1;
    int n_vir = 1;
    double gap_floor = 0.1;  // Hartree

    int n_bands() const { return n_occ + n_vir; }
    int n_pw() const { return static_cast<int>(pw_set.size()); }

    Eigen::MatrixXcd bloch_hamiltonian(const Eigen::Vector3d& k) const;

    /// Builtin presets: "insulator-1x1" (1 occ, 1 vir) and "insulator-2x2"
    /// (2 occ, 2 vir), cubic cells with a 27-vector plane-wave set.
    static BandModel preset(const std::string& name);
};

/// Gauge-fixed plane-wave coefficients of the lowest n_occ+n_vir bands on a
/// mesh. coeffs[k](g, n) with g indexing model.pw_set.coords order.
struct OrbitalTable {
    BandModel model;
    KMesh mesh;
    std::vector<Eigen::MatrixXcd> coeffs;
    std::vector<Eigen::VectorXd> band_eigs;  // model eigenvalues (diagnostics)
    std::vector<int> gauge_ref;              // per band: reference pw index
};

/// Reference components for gauge fixing, chosen per band as the pw index
/// with the largest |c| averaged over a fixed dense k sample.
std::vector<int> pick_gauge_refs(const BandModel& model);

/// Rotate each eigenvector by a unit phase so its reference component is
/// real and positive. Throws if a reference magnitude drops below 1e-3.
void gauge_fix(Eigen::MatrixXcd& vectors, const std::vector<int>& refs);

OrbitalTable solve_bands(const BandModel& model, const KMesh& mesh);

/// rho_{n'k',nk}(G) = sum_{G''} conj(c_{n'}(k', G''-G-dG0)) c_n(k, G'') with
/// dG0 the folding vector of k'-k; zero outside the finite support box.
Complex pair_density(const OrbitalTable& orbitals, int np, int kp, int n, int k,
                     const Eigen::Vector3i& G);

/// Normalized Eq.-(1) ERIs. Pair-density blocks are memoized per (k',k); the
/// G sum is finite (pair densities have bounded support), hence exact.
class EriEvaluator {
  public:
    EriEvaluator(OrbitalTable orbitals, double coupling_scale = 1.0);

    const OrbitalTable& orbitals() const { return orb_; }
    const KMesh& mesh() const { return orb_.mesh; }
    int n_occ() const { return orb_.model.n_occ; }
    int n_vir() const { return orb_.model.n_vir; }
    double coupling_scale() const { return scale_; }

    /// <n1 k1, n2 k2 | n3 k3, n4 k4>; bands are global indices
    /// (0..n_occ-1 occupied, then virtual). Throws on momentum
    /// non-conservation. Any q+G = 0 term is omitted.
    Complex eri(int n1, int k1, int n2, int k2, int n3, int k3, int n4, int k4) const;

    /// Cached pair-density block for (k', k): row (np*n_bands+n), one column
    /// per reachable shift s = G + dG0 (a difference of two pw_set vectors).
    const Eigen::MatrixXcd& pair_block(int kp, int k) const;

  private:
    // one surviving term of the support-box double sum: column indices into
    // the two pair blocks plus the Coulomb weight 1/|q+G|^2
    struct EriTerm {
        int c13;
        int c24;
        double w;
    };
    const std::vector<EriTerm>& eri_path(const Eigen::Vector3i& dnum,
                                         const Eigen::Vector3i& gc) const;

    OrbitalTable orb_;
    double scale_;
    ReciprocalLattice recip_;
    std::unordered_map<int, int> pw_index_;  // packed coords -> pw index
    // shifts s reachable as differences of pw_set vectors; dead columns are
    // identically zero in every pair block and are not stored
    std::vector<Eigen::Vector3i> alive_;
    std::vector<int> alive_col_;  // cube {-4..4}^3 index -> column, -1 if dead
    mutable std::unordered_map<long, Eigen::MatrixXcd> rho_cache_;
    // geometry depends only on (k3 - k1, conservation vector); cached paths
    // keep the summation order of the plain double loop
    mutable std::unordered_map<long, std::vector<EriTerm>> path_cache_;
};

struct OrbitalEnergySet {
    Eigen::MatrixXd eps;  // (n_bands, N_k)
    int n_occ = 0;
    bool corrected = false;
    double xi_used = 0.0;
};

/// Eq.-(2) Hartree-Fock orbital energy for one (band, k).
double orbital_energy_single(const EriEvaluator& ev, int n, int k);

/// Eq. (2) for all bands and k; if corrected, occupied entries get +xi.
OrbitalEnergySet orbital_energies(const EriEvaluator& ev, bool corrected, double xi);

/// Madelung-corrected orbital energy at (band, k) on a fine mesh, used as
/// the TDL proxy. k must lie on the fine mesh.
double tdl_reference_energy(const BandModel& model, int band, const Eigen::Vector3d& k,
                            const Eigen::Vector3i& fine_dims);

}  // namespace fslab
