#include "fslab/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fslab {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Fold integer numerator n so that n/d lies in [-1/2, 1/2), with the upper
// face mapped to the lower one.
int fold_index(int n, int d) {
    int r = n % d;
    if (r < 0) r += d;
    if (2 * r >= d) r -= d;
    return r;
}

}  // namespace

UnitCell UnitCell::cubic(double a) {
    UnitCell c;
    c.basis = a * Eigen::Matrix3d::Identity();
    return c;
}

UnitCell UnitCell::from_vectors(const Eigen::Vector3d& a1, const Eigen::Vector3d& a2,
                                const Eigen::Vector3d& a3) {
    UnitCell c;
    c.basis.col(0) = a1;
    c.basis.col(1) = a2;
    c.basis.col(2) = a3;
    if (c.basis.determinant() <= 0.0)
        throw std::invalid_argument("unit cell basis must be right-handed");
    return c;
}

ReciprocalLattice reciprocal_of(const UnitCell& cell) {
    double det = cell.basis.determinant();
    if (!(det > 1e-12))
        throw std::invalid_argument("degenerate or left-handed unit cell");
    ReciprocalLattice r;
    r.basis = 2.0 * kPi * cell.basis.inverse().transpose();
    r.basis_inv = r.basis.inverse();
    return r;
}

KMesh::KMesh(const ReciprocalLattice& recip, const Eigen::Vector3i& dims,
             bool gamma_centered)
    : recip_(recip), dims_(dims), gamma_centered_(gamma_centered) {
    for (int d = 0; d < 3; ++d)
        if (dims_[d] < 1) throw std::invalid_argument("mesh dims must be >= 1");
    n_points_ = dims_[0] * dims_[1] * dims_[2];
    nums_.reserve(n_points_);
    // Lexicographic order of the folded numerators.
    auto lo = [&](int d) { return -(dims_[d] / 2); };
    auto hi = [&](int d) { return dims_[d] - dims_[d] / 2 - 1; };
    for (int i = lo(0); i <= hi(0); ++i)
        for (int j = lo(1); j <= hi(1); ++j)
            for (int k = lo(2); k <= hi(2); ++k) nums_.push_back({i, j, k});
}

Eigen::Vector3d KMesh::fractional(int idx) const {
    const Eigen::Vector3i& n = nums_[idx];
    Eigen::Vector3d f;
    double shift = gamma_centered_ ? 0.0 : 0.5;
    for (int d = 0; d < 3; ++d) {
        double v = (n[d] + shift) / dims_[d];
        v -= std::floor(v + 0.5);
        f[d] = v;
    }
    return f;
}

Eigen::Vector3i KMesh::fold_numerator(const Eigen::Vector3i& nums) const {
    return {fold_index(nums[0], dims_[0]), fold_index(nums[1], dims_[1]),
            fold_index(nums[2], dims_[2])};
}

int KMesh::index_of(const Eigen::Vector3i& nums) const {
    Eigen::Vector3i f = fold_numerator(nums);
    int i0 = f[0] + dims_[0] / 2;
    int i1 = f[1] + dims_[1] / 2;
    int i2 = f[2] + dims_[2] / 2;
    return (i0 * dims_[1] + i1) * dims_[2] + i2;
}

int KMesh::gamma_index() const {
    if (!gamma_centered_)
        throw std::logic_error("gamma_index on a non-gamma-centered mesh");
    return index_of({0, 0, 0});
}

KMesh build_mesh(const ReciprocalLattice& recip, const Eigen::Vector3i& dims,
                 bool gamma_centered) {
    return KMesh(recip, dims, gamma_centered);
}

FoldResult fold_to_bz(const ReciprocalLattice& recip, const Eigen::Vector3d& k) {
    Eigen::Vector3d f = recip.basis_inv * k;
    FoldResult out;
    for (int d = 0; d < 3; ++d) {
        double g = std::floor(f[d] + 0.5);
        out.g0_coords[d] = static_cast<int>(g);
        out.k_folded[d] = f[d] - g;
    }
    out.g0 = recip.basis * out.g0_coords.cast<double>();
    return out;
}

int conserve_momentum(const KMesh& mesh, int ki, int kj, int ka) {
    Eigen::Vector3i n = mesh.numerator(ki) + mesh.numerator(kj) - mesh.numerator(ka);
    return mesh.index_of(n);
}

Eigen::Vector3d conserve_momentum(const KMesh& mesh, const Eigen::Vector3d& ki,
                                  const Eigen::Vector3d& kj,
                                  const Eigen::Vector3d& ka) {
    auto locate = [&](const Eigen::Vector3d& k) {
        Eigen::Vector3d f = mesh.recip().basis_inv * k;
        Eigen::Vector3i n;
        double shift = mesh.gamma_centered() ? 0.0 : 0.5;
        for (int d = 0; d < 3; ++d) {
            double x = f[d] * mesh.dims()[d] - shift;
            double r = std::round(x);
            if (std::abs(x - r) > 1e-9)
                throw std::invalid_argument("momentum vector is not on the mesh");
            n[d] = static_cast<int>(r);
        }
        return mesh.index_of(n);
    };
    int kb = conserve_momentum(mesh, locate(ki), locate(kj), locate(ka));
    return mesh.point(kb);
}

LatticeShellSet enumerate_shells(const Eigen::Matrix3d& basis, double cutoff,
                                 std::size_t max_size) {
    if (!(cutoff > 0.0)) throw std::invalid_argument("shell cutoff must be > 0");
    LatticeShellSet out;
    out.cutoff = cutoff;
    Eigen::Matrix3d inv = basis.inverse();
    Eigen::Vector3i bound;
    for (int d = 0; d < 3; ++d)
        bound[d] = static_cast<int>(std::ceil(cutoff * inv.row(d).norm())) + 1;
    double est = (2.0 * bound[0] + 1) * (2.0 * bound[1] + 1) * (2.0 * bound[2] + 1);
    if (est > 8.0 * static_cast<double>(max_size))
        throw std::runtime_error("shell enumeration exceeds configured size bound");
    for (int i = -bound[0]; i <= bound[0]; ++i)
        for (int j = -bound[1]; j <= bound[1]; ++j)
            for (int k = -bound[2]; k <= bound[2]; ++k) {
                Eigen::Vector3i m{i, j, k};
                if ((basis * m.cast<double>()).norm() <= cutoff) out.coords.push_back(m);
                if (out.coords.size() > max_size)
                    throw std::runtime_error("shell enumeration exceeds configured size bound");
            }
    return out;
}

}  // namespace fslab
