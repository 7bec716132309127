#include "fslab/model.hpp"

#include <algorithm>
#include <cmath>

#include "fslab/errors.hpp"
#include "fslab/madelung.hpp"

namespace fslab {

namespace {

constexpr double kPi = 3.14159265358979323846;

int pack(const Eigen::Vector3i& v) {
    return ((v[0] + 16) * 64 + (v[1] + 16)) * 64 + (v[2] + 16);
}

// bounding cube of pair-density shifts (differences of pw_set vectors)
constexpr int kBox = 9;

int box_index(const Eigen::Vector3i& s) {
    for (int d = 0; d < 3; ++d)
        if (s[d] < -4 || s[d] > 4) return -1;
    return ((s[0] + 4) * kBox + (s[1] + 4)) * kBox + (s[2] + 4);
}

// folding vector (integer b-coordinates) of k' - k from mesh numerators
Eigen::Vector3i fold_shift(const KMesh& mesh, int kp, int k) {
    Eigen::Vector3i d = mesh.numerator(kp) - mesh.numerator(k);
    Eigen::Vector3i folded = mesh.fold_numerator(d);
    Eigen::Vector3i g0;
    for (int i = 0; i < 3; ++i) g0[i] = (d[i] - folded[i]) / mesh.dims()[i];
    return g0;
}

}  // namespace

Eigen::MatrixXcd BandModel::bloch_hamiltonian(const Eigen::Vector3d& k) const {
    int n = n_pw();
    ReciprocalLattice rl = reciprocal_of(cell);
    Eigen::MatrixXcd h(n, n);
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            Eigen::Vector3i d = pw_set.coords[a] - pw_set.coords[b];
            auto it = potential.find({d[0], d[1], d[2]});
            h(a, b) = it != potential.end() ? it->second : Complex(0.0);
        }
        h(a, a) += kinetic_scale * (k + rl.vector(pw_set.coords[a])).squaredNorm();
    }
    // Channels enter as raw (unnormalized) projectors: chi depends on k+G
    // only, so h(k) stays exactly covariant under relabeling k -> k+b (up to
    // the pw_set window truncation). Per-k normalization would break that
    // smoothness where a profile's support collapses (e.g. a q_x q_y q_z
    // monomial near Gamma).
    for (const NonlocalChannel& ch : channels) {
        Eigen::VectorXcd chi(n);
        for (int a = 0; a < n; ++a) {
            Eigen::Vector3d q = k + rl.vector(pw_set.coords[a]);
            double poly = 1.0, arg = 0.0;
            for (int d = 0; d < 3; ++d) {
                for (int e = 0; e < ch.mono[d]; ++e) poly *= q[d];
                arg += ch.alpha[d] * q[d] * q[d];
            }
            double p = arg;
            for (int e = 1; e < ch.power; ++e) p *= arg;
            chi(a) = poly * std::exp(-p);
        }
        h.noalias() -= ch.strength * chi * chi.adjoint();
    }
    return h;
}

BandModel BandModel::preset(const std::string& name) {
    BandModel m;
    m.cell = UnitCell::cubic(6.0);
    ReciprocalLattice rl = reciprocal_of(m.cell);
    // Channel widths below are quoted in units of b^2 = |b_1|^2 so the
    // profiles stay commensurate with the reciprocal lattice.
    double b2 = rl.basis.col(0).squaredNorm();

    // Weak local background with an inversion-odd imaginary part:
    // V(D) = [-v + i w (s . D)] exp(-(b1 D1^2 + b2 D2^2 + b3 D3^2)).
    // The complex part lifts the residual intra-k degeneracies left by the
    // channels (checked by the preset validation tests).
    auto fill_potential = [&m](double v, double w, const Eigen::Vector3d& beta,
                               const Eigen::Vector3d& s) {
        for (int i = -2; i <= 2; ++i)
            for (int j = -2; j <= 2; ++j)
                for (int k = -2; k <= 2; ++k) {
                    double g = std::exp(-(beta[0] * i * i + beta[1] * j * j + beta[2] * k * k));
                    Complex val = Complex(-v, w * (s[0] * i + s[1] * j + s[2] * k)) * g;
                    m.potential[{i, j, k}] = val;
                }
    };
    if (name == "insulator-1x1") {
        // The plane-wave set must be roughly relabeling-closed: every G
        // carrying orbital weight needs its b-shifted images inside the set,
        // otherwise folding a k point across the zone boundary is not a basis
        // permutation and the bands pick up a jump there (killing the
        // trapezoidal convergence the scaling experiments rely on). |G|^2 <= 6
        // keeps the leaky shells, given the profiles below, near 1e-6.
        m.pw_set = enumerate_shells(rl.basis, rl.basis.col(0).norm() * (std::sqrt(6.0) + 1e-6));
        m.kinetic_scale = 1.0;
        m.n_occ = 1;
        m.n_vir = 1;
        m.gap_floor = 0.4;
        // One even attractive channel binds the occupied band. The seven
        // repulsive monomial channels push every non-symmetric low-kinetic
        // zone-boundary pattern up, so the lowest virtual band is the
        // residual high-kinetic state at each k (d-like at Gamma, ring waves
        // at the faces): that is what keeps the Eq.-2 Fock gap
        // indirect-positive, since the Fock transform un-binds the occupied
        // band and gives it the free-electron bandwidth. Quartic-argument
        // profiles with width floor 0.85/b^2 mix the first G shells strongly
        // while staying negligible on the leaky pw_set boundary shells.
        // Strengths compensate the raw profile norms at the zone boundary,
        // which shrink with each extra monomial axis.
        m.channels.push_back({0.3, {0.85 / b2, 1.15 / b2, 1.15 / b2}, {0, 0, 0}, 4});
        {
            const std::array<int, 3> monos[] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0},
                                                {0, 1, 1}, {1, 0, 1}, {1, 1, 1}};
            for (const auto& mono : monos) {
                int axes = mono[0] + mono[1] + mono[2];
                double s = axes == 1 ? 5.0 : axes == 2 ? 12.0 : 30.0;
                m.channels.push_back({-s, {0.95 / b2, 0.95 / b2, 0.95 / b2}, mono, 4});
            }
        }
        fill_potential(0.02, 0.01, {0.7, 0.8, 0.9}, {1.0, 0.7, 0.4});
    } else if (name == "insulator-2x2") {
        // Flat kinetic reference: all four bands are channel/potential bound,
        // which keeps the two-band gap mesh-independent. This preset only
        // backs the direct-summation oracles, so it keeps the compact 27-wave
        // set (band periodicity across the zone boundary is irrelevant there
        // and the smaller set keeps the brute-force tests fast).
        m.pw_set = enumerate_shells(rl.basis, rl.basis.col(0).norm() * (std::sqrt(3.0) + 1e-6));
        m.kinetic_scale = 0.0;
        m.n_occ = 2;
        m.n_vir = 2;
        m.gap_floor = 0.3;
        m.channels.push_back({1.6, {3.0 / b2, 3.0 / b2, 3.0 / b2}, {0, 0, 0}});
        m.channels.push_back({1.0, {3.0 / b2, 3.0 / b2, 3.0 / b2}, {1, 0, 0}});
        fill_potential(0.05, 0.02, {0.18, 0.24, 0.31}, {1.0, 0.7, 0.4});
    } else {
        throw config_error("unknown model preset: " + name);
    }
    return m;
}

std::vector<int> pick_gauge_refs(const BandModel& model) {
    ReciprocalLattice rl = reciprocal_of(model.cell);
    int nb = model.n_bands();
    // Reference component per band maximizing the *minimum* |c| over a
    // fixed dense sample (irrational offsets avoid symmetry points); a
    // max-average pick can still vanish where the band character rotates.
    Eigen::MatrixXd lo = Eigen::MatrixXd::Constant(model.n_pw(), nb, 1e300);
    const int ns = 5;
    for (int i = 0; i < ns; ++i)
        for (int j = 0; j < ns; ++j)
            for (int k = 0; k < ns; ++k) {
                Eigen::Vector3d f((i + 0.317) / ns - 0.5, (j + 0.553) / ns - 0.5,
                                  (k + 0.719) / ns - 0.5);
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(
                    model.bloch_hamiltonian(rl.basis * f));
                lo = lo.cwiseMin(es.eigenvectors().leftCols(nb).cwiseAbs());
            }
    std::vector<int> refs(nb);
    for (int b = 0; b < nb; ++b) {
        int best = 0;
        lo.col(b).maxCoeff(&best);
        refs[b] = best;
    }
    return refs;
}

void gauge_fix(Eigen::MatrixXcd& vectors, const std::vector<int>& refs) {
    for (int b = 0; b < vectors.cols(); ++b) {
        Complex z = vectors(refs[b], b);
        if (std::abs(z) < 1e-3)
            throw std::runtime_error(
                "gauge obstruction: reference component below threshold");
        vectors.col(b) *= std::conj(z) / std::abs(z);
    }
}

OrbitalTable solve_bands(const BandModel& model, const KMesh& mesh) {
    OrbitalTable t{model, mesh, {}, {}, pick_gauge_refs(model)};
    int nb = model.n_bands();
    if (nb > model.n_pw()) throw config_error("more bands requested than plane waves");
    double occ_max = -1e300, vir_min = 1e300;
    for (int k = 0; k < mesh.size(); ++k) {
        Eigen::MatrixXcd h = model.bloch_hamiltonian(mesh.point(k));
        if ((h - h.adjoint()).norm() > 1e-13 * (1.0 + h.norm()))
            throw std::runtime_error("model Hamiltonian is not Hermitian");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
        const auto& w = es.eigenvalues();
        int check = std::min<int>(nb + 1, model.n_pw());
        for (int b = 1; b < check; ++b)
            if (w[b] - w[b - 1] < 1e-10)
                throw std::runtime_error(
                    "degenerate bands on the mesh; regenerate the model");
        occ_max = std::max(occ_max, w[model.n_occ - 1]);
        vir_min = std::min(vir_min, w[model.n_occ]);
        t.coeffs.push_back(es.eigenvectors().leftCols(nb));
        t.band_eigs.push_back(w.head(nb));
    }
    if (vir_min - occ_max < model.gap_floor)
        throw std::runtime_error("model is not an insulator at the requested gap floor");
    // A band whose character rotates across the zone may have no single
    // globally large component; fall back to the best reference on this
    // mesh (deterministic) before declaring a gauge obstruction.
    for (int b = 0; b < nb; ++b) {
        double lo = 1e300;
        for (const auto& c : t.coeffs) lo = std::min(lo, std::abs(c(t.gauge_ref[b], b)));
        if (lo >= 1e-3) continue;
        Eigen::VectorXd best = Eigen::VectorXd::Constant(model.n_pw(), 1e300);
        for (const auto& c : t.coeffs) best = best.cwiseMin(c.col(b).cwiseAbs());
        int pick = 0;
        best.maxCoeff(&pick);
        t.gauge_ref[b] = pick;
    }
    for (auto& c : t.coeffs) gauge_fix(c, t.gauge_ref);
    return t;
}

Complex pair_density(const OrbitalTable& orb, int np, int kp, int n, int k,
                     const Eigen::Vector3i& G) {
    Eigen::Vector3i s = G + fold_shift(orb.mesh, kp, k);
    Complex sum = 0.0;
    const auto& coords = orb.model.pw_set.coords;
    // linear scan over the plane-wave set; hot paths use EriEvaluator's blocks
    for (std::size_t b = 0; b < coords.size(); ++b) {
        Eigen::Vector3i shifted = coords[b] - s;
        for (std::size_t a = 0; a < coords.size(); ++a)
            if (coords[a] == shifted) {
                sum += std::conj(orb.coeffs[kp](static_cast<int>(a), np)) *
                       orb.coeffs[k](static_cast<int>(b), n);
                break;
            }
    }
    return sum;
}

EriEvaluator::EriEvaluator(OrbitalTable orbitals, double coupling_scale)
    : orb_(std::move(orbitals)), scale_(coupling_scale),
      recip_(reciprocal_of(orb_.model.cell)) {
    for (int i = 0; i < orb_.model.n_pw(); ++i)
        pw_index_[pack(orb_.model.pw_set.coords[i])] = i;
    alive_col_.assign(kBox * kBox * kBox, -1);
    const auto& coords = orb_.model.pw_set.coords;
    for (const auto& a : coords)
        for (const auto& b : coords) {
            int idx = box_index(b - a);
            if (idx >= 0 && alive_col_[idx] < 0) {
                alive_col_[idx] = 0;  // marked, numbered below
                alive_.push_back(b - a);
            }
        }
    // deterministic column order independent of coords ordering
    std::sort(alive_.begin(), alive_.end(), [](const auto& x, const auto& y) {
        return std::lexicographical_compare(x.data(), x.data() + 3, y.data(), y.data() + 3);
    });
    for (std::size_t c = 0; c < alive_.size(); ++c)
        alive_col_[box_index(alive_[c])] = static_cast<int>(c);
}

const Eigen::MatrixXcd& EriEvaluator::pair_block(int kp, int k) const {
    long key = static_cast<long>(kp) * mesh().size() + k;
    auto it = rho_cache_.find(key);
    if (it != rho_cache_.end()) return it->second;

    int nb = orb_.model.n_bands();
    // block is indexed by the shifted argument s = G + g0, so the fold shift
    // of k'-k enters only at lookup time, never here
    Eigen::MatrixXcd block =
        Eigen::MatrixXcd::Zero(nb * nb, static_cast<int>(alive_.size()));
    const auto& coords = orb_.model.pw_set.coords;
    const Eigen::MatrixXcd& cp = orb_.coeffs[kp];
    const Eigen::MatrixXcd& cc = orb_.coeffs[k];
    for (std::size_t col = 0; col < alive_.size(); ++col) {
        const Eigen::Vector3i& s = alive_[col];
        for (std::size_t b = 0; b < coords.size(); ++b) {
            auto it2 = pw_index_.find(pack(coords[b] - s));
            if (it2 == pw_index_.end()) continue;
            int a = it2->second;
            for (int np = 0; np < nb; ++np)
                for (int n = 0; n < nb; ++n)
                    block(np * nb + n, static_cast<int>(col)) +=
                        std::conj(cp(a, np)) * cc(static_cast<int>(b), n);
        }
    }
    return rho_cache_.emplace(key, std::move(block)).first->second;
}

Complex EriEvaluator::eri(int n1, int k1, int n2, int k2, int n3, int k3,
                          int n4, int k4) const {
    const KMesh& m = orb_.mesh;
    Eigen::Vector3i cons = m.numerator(k1) + m.numerator(k2) - m.numerator(k3) -
                           m.numerator(k4);
    Eigen::Vector3i gc;  // integer conservation vector: k1+k2-k3-k4 = B gc
    for (int d = 0; d < 3; ++d) {
        if (cons[d] % m.dims()[d] != 0)
            throw std::invalid_argument("ERI tuple violates momentum conservation");
        gc[d] = cons[d] / m.dims()[d];
    }

    int nb = orb_.model.n_bands();
    const Eigen::MatrixXcd& b13 = pair_block(k1, k3);
    const Eigen::MatrixXcd& b24 = pair_block(k2, k4);

    Complex sum = 0.0;
    int row13 = n1 * nb + n3, row24 = n2 * nb + n4;
    for (const EriTerm& term : eri_path(m.numerator(k3) - m.numerator(k1), gc))
        sum += b13(row13, term.c13) * b24(row24, term.c24) * term.w;
    return sum * (4.0 * kPi / orb_.model.cell.volume()) * scale_;
}

const std::vector<EriEvaluator::EriTerm>& EriEvaluator::eri_path(
    const Eigen::Vector3i& dnum, const Eigen::Vector3i& gc) const {
    long key = 0;
    for (int d = 0; d < 3; ++d) key = (key << 12) | ((dnum[d] + 2048) & 0xfff);
    for (int d = 0; d < 3; ++d) key = (key << 4) | ((gc[d] + 8) & 0xf);
    auto it = path_cache_.find(key);
    if (it != path_cache_.end()) return it->second;

    // momentum transfer q = k3 - k1 from the exact numerator difference; the
    // paired Fourier component of the second density sits at gc - s
    const Eigen::Vector3i& dims = orb_.mesh.dims();
    Eigen::Vector3d q =
        recip_.basis * dnum.cast<double>().cwiseQuotient(dims.cast<double>());
    std::vector<EriTerm> path;
    for (const Eigen::Vector3i& s : alive_) {
        int i24 = box_index(gc - s);
        int c24 = i24 < 0 ? -1 : alive_col_[i24];
        if (c24 < 0) continue;
        double qg2 = (q + recip_.vector(s)).squaredNorm();
        if (qg2 < 1e-20) continue;  // zero mode omitted
        path.push_back({alive_col_[box_index(s)], c24, 1.0 / qg2});
    }
    return path_cache_.emplace(key, std::move(path)).first->second;
}

double orbital_energy_single(const EriEvaluator& ev, int n, int k) {
    const OrbitalTable& orb = ev.orbitals();
    const KMesh& mesh = orb.mesh;
    ReciprocalLattice rl = reciprocal_of(orb.model.cell);
    double eps = 0.0;
    for (int g = 0; g < orb.model.n_pw(); ++g)
        eps += std::norm(orb.coeffs[k](g, n)) *
               (mesh.point(k) + rl.vector(orb.model.pw_set.coords[g])).squaredNorm();
    Complex fock = 0.0;
    for (int ki = 0; ki < mesh.size(); ++ki)
        for (int i = 0; i < ev.n_occ(); ++i)
            fock += 2.0 * ev.eri(i, ki, n, k, i, ki, n, k) -
                    ev.eri(i, ki, n, k, n, k, i, ki);
    if (std::abs(fock.imag()) > 1e-10 * (1.0 + std::abs(fock.real())))
        throw std::runtime_error("orbital energy has a non-real Fock sum");
    return eps + fock.real() / mesh.size();
}

OrbitalEnergySet orbital_energies(const EriEvaluator& ev, bool corrected, double xi) {
    const KMesh& mesh = ev.mesh();
    int nb = ev.orbitals().model.n_bands();
    OrbitalEnergySet out;
    out.n_occ = ev.n_occ();
    out.corrected = corrected;
    out.xi_used = corrected ? xi : 0.0;
    out.eps.resize(nb, mesh.size());
    for (int k = 0; k < mesh.size(); ++k)
        for (int n = 0; n < nb; ++n)
            out.eps(n, k) = orbital_energy_single(ev, n, k) +
                            ((corrected && n < out.n_occ) ? xi : 0.0);
    return out;
}

double tdl_reference_energy(const BandModel& model, int band, const Eigen::Vector3d& k,
                            const Eigen::Vector3i& fine_dims) {
    ReciprocalLattice rl = reciprocal_of(model.cell);
    KMesh mesh = build_mesh(rl, fine_dims, true);
    // locate k on the fine mesh
    Eigen::Vector3d f = rl.basis_inv * k;
    Eigen::Vector3i num;
    for (int d = 0; d < 3; ++d) {
        double x = f[d] * fine_dims[d];
        double r = std::round(x);
        if (std::abs(x - r) > 1e-9)
            throw config_error("k point does not lie on the TDL proxy mesh");
        num[d] = static_cast<int>(r);
    }
    int kidx = mesh.index_of(num);

    EriEvaluator ev(solve_bands(model, mesh));
    double xi = madelung_constant(EwaldSpec::make(model.cell, fine_dims)).xi;
    double eps = orbital_energy_single(ev, band, kidx);
    return band < model.n_occ ? eps + xi : eps;
}

}  // namespace fslab
