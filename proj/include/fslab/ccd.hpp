#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "fslab/model.hpp"

namespace fslab {

/// Table-1 correction matrix: +xi on occupied orbital energies (hence +2 xi
/// on the denominator) and/or +2 xi T added to the contraction map.
struct CorrectionSetting {
    bool correct_eps = false;
    bool correct_contraction = false;
};

/// Normalized CCD double amplitude T_{ijab}(k_i, k_j, k_a); k_b is implicit
/// through momentum conservation. Flat layout: the orbital block (i,j,a,b)
/// is contiguous per (k_i, k_j, k_a) triple.
struct AmplitudeTensor {
    KMesh mesh;
    int n_occ = 0;
    int n_vir = 0;
    std::vector<Complex> data;

    AmplitudeTensor(const KMesh& m, int no, int nv)
        : mesh(m), n_occ(no), n_vir(nv),
          data(static_cast<std::size_t>(m.size()) * m.size() * m.size() * no * no *
                   nv * nv,
               Complex(0.0)) {}

    int block() const { return n_occ * n_occ * n_vir * n_vir; }
    std::size_t index(int i, int j, int a, int b, int ki, int kj, int ka) const {
        std::size_t k = (static_cast<std::size_t>(ki) * mesh.size() + kj) * mesh.size() + ka;
        return k * block() + ((static_cast<std::size_t>(i) * n_occ + j) * n_vir + a) * n_vir + b;
    }
    Complex& at(int i, int j, int a, int b, int ki, int kj, int ka) {
        return data[index(i, j, a, b, ki, kj, ka)];
    }
    Complex at(int i, int j, int a, int b, int ki, int kj, int ka) const {
        return data[index(i, j, a, b, ki, kj, ka)];
    }
};

/// Average entrywise 1-norm: (1/N_k^3) sum |entries| (orbital sums are not
/// averaged, matching the paper's analysis norm).
double norm_1(const AmplitudeTensor& t);
double norm_inf(const AmplitudeTensor& t);

struct SolverReport {
    int iterations = 0;
    double residual_1norm = 0.0;
    Complex energy{0.0, 0.0};
    bool converged = false;
};

/// Appendix-A intermediate blocks built from a given amplitude. kappa blocks
/// conserve k_p = k_q and are stored per k; chi_oooo is grouped by the total
/// momentum Q = k_i + k_j; the ring blocks by the transfer q = k_i - k_a.
/// chi_vvvv = <AB|CD> is never materialized (largest block); the accessor
/// evaluates the bare ERI on demand.
struct Intermediates {
    int n_occ = 0;
    int n_vir = 0;
    KMesh mesh;
    std::vector<Eigen::MatrixXcd> kappa_vv;       // per k: (c, a)
    std::vector<Eigen::MatrixXcd> kappa_oo;       // per k: (i, k')
    std::vector<Eigen::MatrixXcd> chi_oooo;       // per Q: (k_i,i,j) x (k_k,k,l)
    std::vector<Eigen::MatrixXcd> chi_ovvo_plus;  // per q: (k_i,i,a) x (k_k,k,c)
    std::vector<Eigen::MatrixXcd> chi_voov;       // per q: same shape

    Complex kappa_vv_at(int c, int kc, int a, int ka) const;
    Complex kappa_oo_at(int i, int ki, int k, int kk) const;
    Complex chi_oooo_at(int i, int ki, int j, int kj, int k, int kk, int l, int kl) const;
    Complex chi_ovvo_plus_at(int i, int ki, int c, int kc, int a, int ka, int k, int kk) const;
    Complex chi_voov_at(int c, int kc, int i, int ki, int a, int ka, int k, int kk) const;
};

Complex chi_vvvv_at(const EriEvaluator& ev, int c, int kc, int d, int kd, int a, int ka,
                    int b, int kb);

/// eps_i + eps_j - eps_a - eps_b from the supplied set (a, b are virtual
/// offsets, i.e. rows n_occ+a of the set). Throws divergence_error when
/// |D| < 1e-8 (silent regularization would corrupt the scaling study).
double denominator(const OrbitalEnergySet& eps, int i, int ki, int j, int kj, int a,
                   int ka, int b, int kb);

struct SingularityProfile {
    std::vector<double> values;
    double max_value = 0.0;
    double median = 0.0;
};

/// |T_{ijab}(k_i, k_j, k_a)| sampled along the three axis rays k_a =
/// k_i + t e_d through every k_i, at fixed k_j and orbital indices.
SingularityProfile amplitude_singularity_scan(const AmplitudeTensor& t, int i, int j,
                                              int a, int b, int kj);

/// Reusable CCD engine bound to one EriEvaluator: precomputes the grouped
/// ERI blocks once (the per-iteration cost is then GEMMs plus the on-the-fly
/// <AB|CD> sweep). The four correction settings share one engine.
class CcdEngine {
  public:
    explicit CcdEngine(const EriEvaluator& ev);

    Intermediates intermediates(const AmplitudeTensor& t) const;

    /// A_{N_k}(T), or A + 2 xi T when setting.correct_contraction.
    AmplitudeTensor contraction(const AmplitudeTensor& t, const CorrectionSetting& setting,
                                double xi) const;

    /// n undamped fixed-point steps T <- D^-1 A(T) from T = 0.
    std::pair<AmplitudeTensor, SolverReport> ccd_n(int n, const OrbitalEnergySet& eps,
                                                   const CorrectionSetting& setting,
                                                   double xi) const;

    /// Damped fixed point until ||Delta T||_1 <= tol; non-convergence is a
    /// report, divergence (non-finite or norm_inf > 1e6) is an error.
    std::pair<AmplitudeTensor, SolverReport> ccd_converge(const OrbitalEnergySet& eps,
                                                          const CorrectionSetting& setting,
                                                          double xi, double tol,
                                                          int max_iter,
                                                          double damping) const;

    /// E = (1/N_k^3) sum W_{ijab} T_{ijab}, W = 2<IJ|AB> - <IJ|BA>.
    Complex energy(const AmplitudeTensor& t) const;

    const EriEvaluator& evaluator() const { return ev_; }

  private:
    const EriEvaluator& ev_;
    int o_, v_, nk_;
    Eigen::MatrixXi kadd_, ksub_;  // index tables for numerator arithmetic
    // precomputed grouped ERIs; see ccd.cpp for the row/column composites
    std::vector<Eigen::MatrixXcd> drv_, oooo_, ovq_, e1_, e2_, m1_, m2_;

    Eigen::MatrixXcd gather_q(const AmplitudeTensor& t, int Q) const;
    std::vector<double> build_denominator(const OrbitalEnergySet& eps,
                                          const CorrectionSetting& setting,
                                          double xi) const;
    void check_symmetry(const AmplitudeTensor& t) const;
};

/// Convenience wrappers matching the operation names; each builds a
/// throwaway engine (fine at test sizes; sweeps should hold a CcdEngine).
AmplitudeTensor contraction_map(const AmplitudeTensor& t, const EriEvaluator& ev,
                                const CorrectionSetting& setting, double xi);
Intermediates build_intermediates(const AmplitudeTensor& t, const EriEvaluator& ev);
std::pair<AmplitudeTensor, SolverReport> ccd_n(int n, const EriEvaluator& ev,
                                               const OrbitalEnergySet& eps,
                                               const CorrectionSetting& setting, double xi);
std::pair<AmplitudeTensor, SolverReport> ccd_converge(const EriEvaluator& ev,
                                                      const OrbitalEnergySet& eps,
                                                      const CorrectionSetting& setting,
                                                      double xi, double tol, int max_iter,
                                                      double damping);
Complex energy_of(const AmplitudeTensor& t, const EriEvaluator& ev);

/// Debug dump: little-endian complex pairs in the tensor's flat index order,
/// alongside a JSON header (dims, n_occ, n_vir) at path + ".json".
void dump_amplitude(const AmplitudeTensor& t, const std::string& path);

}  // namespace fslab
