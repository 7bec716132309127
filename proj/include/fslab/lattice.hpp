#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

namespace fslab {

/// Real-space unit cell. Columns of `basis` are the lattice vectors a1,a2,a3
/// in Bohr. Only right-handed bases are accepted.
struct UnitCell {
    Eigen::Matrix3d basis;

    double volume() const { return basis.determinant(); }

    static UnitCell cubic(double a);
    static UnitCell from_vectors(const Eigen::Vector3d& a1,
                                 const Eigen::Vector3d& a2,
                                 const Eigen::Vector3d& a3);
};

/// Reciprocal lattice with b_i . a_j = 2 pi delta_ij.
struct ReciprocalLattice {
    Eigen::Matrix3d basis;      // columns b1,b2,b3 (Bohr^-1)
    Eigen::Matrix3d basis_inv;  // cached inverse of `basis`

    double bz_volume() const { return basis.determinant(); }

    Eigen::Vector3d vector(const Eigen::Vector3i& m) const {
        return basis * m.cast<double>();
    }
};

ReciprocalLattice reciprocal_of(const UnitCell& cell);

/// Uniform Monkhorst-Pack discretization of the Brillouin zone.
///
/// Points are represented by integer numerators n over the per-axis
/// divisions: fractional coordinate f_d = (n_d + shift)/dims_d with
/// shift = 0 for gamma-centered meshes and 1/2 otherwise, folded into
/// [-1/2, 1/2). All momentum arithmetic is done on the numerators, so
/// conservation checks are exact.
class KMesh {
  public:
    KMesh(const ReciprocalLattice& recip, const Eigen::Vector3i& dims,
          bool gamma_centered);

    int size() const { return n_points_; }
    const Eigen::Vector3i& dims() const { return dims_; }
    bool gamma_centered() const { return gamma_centered_; }
    const ReciprocalLattice& recip() const { return recip_; }

    /// Folded integer numerator triple of point `idx` (lexicographic order).
    const Eigen::Vector3i& numerator(int idx) const { return nums_[idx]; }

    Eigen::Vector3d fractional(int idx) const;
    Eigen::Vector3d point(int idx) const { return recip_.basis * fractional(idx); }

    /// Index of the mesh point with the given (possibly unfolded) numerators.
    int index_of(const Eigen::Vector3i& nums) const;

    /// Fold a numerator triple componentwise into [-floor(d/2), ceil(d/2)).
    Eigen::Vector3i fold_numerator(const Eigen::Vector3i& nums) const;

    int gamma_index() const;  // index of the zero vector (gamma meshes only)

  private:
    ReciprocalLattice recip_;
    Eigen::Vector3i dims_;
    bool gamma_centered_;
    int n_points_;
    std::vector<Eigen::Vector3i> nums_;
};

KMesh build_mesh(const ReciprocalLattice& recip, const Eigen::Vector3i& dims,
                 bool gamma_centered);

struct FoldResult {
    Eigen::Vector3d k_folded;  // fractional coords in [-1/2, 1/2)
    Eigen::Vector3d g0;        // reciprocal lattice vector with k = k_folded + g0
    Eigen::Vector3i g0_coords; // integer coordinates of g0 in the b basis
};

FoldResult fold_to_bz(const ReciprocalLattice& recip, const Eigen::Vector3d& k);

/// k_b index such that k_i + k_j - k_a - k_b is a reciprocal lattice vector.
int conserve_momentum(const KMesh& mesh, int ki, int kj, int ka);

/// Cartesian-variant of conserve_momentum; all inputs must lie on the mesh.
Eigen::Vector3d conserve_momentum(const KMesh& mesh, const Eigen::Vector3d& ki,
                                  const Eigen::Vector3d& kj,
                                  const Eigen::Vector3d& ka);

/// Inversion-symmetric set of lattice vectors |v| <= cutoff, as integer
/// coordinates in the given (real or reciprocal) basis. Contains 0 once.
struct LatticeShellSet {
    std::vector<Eigen::Vector3i> coords;
    double cutoff = 0.0;

    std::size_t size() const { return coords.size(); }
};

LatticeShellSet enumerate_shells(const Eigen::Matrix3d& basis, double cutoff,
                                 std::size_t max_size = 2'000'000);

}  // namespace fslab
