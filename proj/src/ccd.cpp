#include "fslab/ccd.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "fslab/errors.hpp"

namespace fslab {

namespace {

// Composite indices used by the grouped ERI blocks and gathers:
//   occupied pair  (k, p, q) -> (k*o + p)*o + q        "ro"
//   virtual pair   (k, c, d) -> (k*v + c)*v + d        "rv"
//   ring leg       (k, p, c) -> (k*o + p)*v + c        "rg"
// Q groups conserve the pair total momentum k1 + k2; q groups conserve the
// ring transfer k_i - k_a.

double med_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return v[v.size() / 2];
}

}  // namespace

double norm_1(const AmplitudeTensor& t) {
    double s = 0.0;
    for (const Complex& z : t.data) s += std::abs(z);
    double nk = t.mesh.size();
    return s / (nk * nk * nk);
}

double norm_inf(const AmplitudeTensor& t) {
    double m = 0.0;
    for (const Complex& z : t.data) m = std::max(m, std::abs(z));
    return m;
}

double denominator(const OrbitalEnergySet& eps, int i, int ki, int j, int kj, int a,
                   int ka, int b, int kb) {
    double d = eps.eps(i, ki) + eps.eps(j, kj) - eps.eps(eps.n_occ + a, ka) -
               eps.eps(eps.n_occ + b, kb);
    if (std::abs(d) < 1e-8)
        throw divergence_error("near-singular amplitude denominator");
    return d;
}

Complex chi_vvvv_at(const EriEvaluator& ev, int c, int kc, int d, int kd, int a, int ka,
                    int b, int kb) {
    int o = ev.n_occ();
    return ev.eri(o + a, ka, o + b, kb, o + c, kc, o + d, kd);
}

Complex Intermediates::kappa_vv_at(int c, int kc, int a, int ka) const {
    if (kc != ka) throw config_error("kappa_vv index violates momentum conservation");
    return kappa_vv[ka](c, a);
}

Complex Intermediates::kappa_oo_at(int i, int ki, int k, int kk) const {
    if (ki != kk) throw config_error("kappa_oo index violates momentum conservation");
    return kappa_oo[ki](i, k);
}

Complex Intermediates::chi_oooo_at(int i, int ki, int j, int kj, int k, int kk, int l,
                                   int kl) const {
    int Q = mesh.index_of(mesh.numerator(ki) + mesh.numerator(kj));
    if (mesh.index_of(mesh.numerator(kk) + mesh.numerator(kl)) != Q)
        throw config_error("chi_oooo index violates momentum conservation");
    return chi_oooo[Q]((ki * n_occ + i) * n_occ + j, (kk * n_occ + k) * n_occ + l);
}

Complex Intermediates::chi_ovvo_plus_at(int i, int ki, int c, int kc, int a, int ka,
                                        int k, int kk) const {
    int q = mesh.index_of(mesh.numerator(ki) - mesh.numerator(ka));
    if (mesh.index_of(mesh.numerator(kk) - mesh.numerator(kc)) != q)
        throw config_error("chi_ovvo index violates momentum conservation");
    return chi_ovvo_plus[q]((ki * n_occ + i) * n_vir + a, (kk * n_occ + k) * n_vir + c);
}

Complex Intermediates::chi_voov_at(int c, int kc, int i, int ki, int a, int ka, int k,
                                   int kk) const {
    int q = mesh.index_of(mesh.numerator(ki) - mesh.numerator(ka));
    if (mesh.index_of(mesh.numerator(kk) - mesh.numerator(kc)) != q)
        throw config_error("chi_voov index violates momentum conservation");
    return chi_voov[q]((ki * n_occ + i) * n_vir + a, (kk * n_occ + k) * n_vir + c);
}

CcdEngine::CcdEngine(const EriEvaluator& ev)
    : ev_(ev), o_(ev.n_occ()), v_(ev.n_vir()), nk_(ev.mesh().size()) {
    const KMesh& m = ev.mesh();
    kadd_.resize(nk_, nk_);
    ksub_.resize(nk_, nk_);
    for (int p = 0; p < nk_; ++p)
        for (int q = 0; q < nk_; ++q) {
            kadd_(p, q) = m.index_of(m.numerator(p) + m.numerator(q));
            ksub_(p, q) = m.index_of(m.numerator(p) - m.numerator(q));
        }

    auto eri = [&](int b1, int k1, int b2, int k2, int b3, int k3, int b4, int k4) {
        return ev_.eri(b1, k1, b2, k2, b3, k3, b4, k4);
    };
    int oo = o_ * o_, vv = v_ * v_, og = o_ * v_;
    drv_.resize(nk_);
    oooo_.resize(nk_);
    ovq_.resize(nk_);
    for (int Q = 0; Q < nk_; ++Q) {
        drv_[Q].resize(oo * nk_, vv * nk_);
        oooo_[Q].resize(oo * nk_, oo * nk_);
        ovq_[Q].resize(oo * nk_, vv * nk_);
        for (int ki = 0; ki < nk_; ++ki) {
            int kj = ksub_(Q, ki);
            for (int i = 0; i < o_; ++i)
                for (int j = 0; j < o_; ++j) {
                    int r = (ki * o_ + i) * o_ + j;
                    for (int ka = 0; ka < nk_; ++ka) {
                        int kb = ksub_(Q, ka);
                        for (int a = 0; a < v_; ++a)
                            for (int b = 0; b < v_; ++b)
                                drv_[Q](r, (ka * v_ + a) * v_ + b) =
                                    eri(o_ + a, ka, o_ + b, kb, i, ki, j, kj);
                    }
                    for (int kk = 0; kk < nk_; ++kk) {
                        int kl = ksub_(Q, kk);
                        for (int k = 0; k < o_; ++k)
                            for (int l = 0; l < o_; ++l)
                                oooo_[Q](r, (kk * o_ + k) * o_ + l) =
                                    eri(k, kk, l, kl, i, ki, j, kj);
                    }
                }
        }
        for (int kk = 0; kk < nk_; ++kk) {
            int kl = ksub_(Q, kk);
            for (int k = 0; k < o_; ++k)
                for (int l = 0; l < o_; ++l) {
                    int r = (kk * o_ + k) * o_ + l;
                    for (int kc = 0; kc < nk_; ++kc) {
                        int kd = ksub_(Q, kc);
                        for (int c = 0; c < v_; ++c)
                            for (int d = 0; d < v_; ++d)
                                ovq_[Q](r, (kc * v_ + c) * v_ + d) =
                                    eri(k, kk, l, kl, o_ + c, kc, o_ + d, kd);
                    }
                }
        }
    }
    e1_.resize(nk_);
    e2_.resize(nk_);
    m1_.resize(nk_);
    m2_.resize(nk_);
    for (int q = 0; q < nk_; ++q) {
        e1_[q].resize(og * nk_, og * nk_);
        e2_[q].resize(og * nk_, og * nk_);
        m1_[q].resize(og * nk_, og * nk_);
        m2_[q].resize(og * nk_, og * nk_);
        for (int kk = 0; kk < nk_; ++kk) {
            int kc = ksub_(kk, q);
            for (int k = 0; k < o_; ++k)
                for (int c = 0; c < v_; ++c) {
                    int col = (kk * o_ + k) * v_ + c;
                    for (int ki = 0; ki < nk_; ++ki) {
                        int ka = ksub_(ki, q);
                        for (int i = 0; i < o_; ++i)
                            for (int a = 0; a < v_; ++a) {
                                int r = (ki * o_ + i) * v_ + a;
                                e1_[q](r, col) = eri(o_ + a, ka, k, kk, i, ki, o_ + c, kc);
                                e2_[q](r, col) = eri(o_ + a, ka, k, kk, o_ + c, kc, i, ki);
                            }
                    }
                    for (int kl = 0; kl < nk_; ++kl) {
                        int kd = kadd_(kl, q);
                        for (int l = 0; l < o_; ++l)
                            for (int d = 0; d < v_; ++d) {
                                int r = (kl * o_ + l) * v_ + d;
                                m1_[q](r, col) = eri(l, kl, k, kk, o_ + d, kd, o_ + c, kc);
                                m2_[q](r, col) = eri(l, kl, k, kk, o_ + c, kc, o_ + d, kd);
                            }
                    }
                }
        }
    }
}

Eigen::MatrixXcd CcdEngine::gather_q(const AmplitudeTensor& t, int Q) const {
    Eigen::MatrixXcd out(o_ * o_ * nk_, v_ * v_ * nk_);
    for (int ki = 0; ki < nk_; ++ki) {
        int kj = ksub_(Q, ki);
        for (int i = 0; i < o_; ++i)
            for (int j = 0; j < o_; ++j) {
                int r = (ki * o_ + i) * o_ + j;
                for (int ka = 0; ka < nk_; ++ka)
                    for (int a = 0; a < v_; ++a)
                        for (int b = 0; b < v_; ++b)
                            out(r, (ka * v_ + a) * v_ + b) = t.at(i, j, a, b, ki, kj, ka);
            }
    }
    return out;
}

Intermediates CcdEngine::intermediates(const AmplitudeTensor& t) const {
    if (t.mesh.size() != nk_ || t.n_occ != o_ || t.n_vir != v_)
        throw config_error("amplitude tensor does not match the engine mesh");
    Intermediates im{o_, v_, t.mesh, {}, {}, {}, {}, {}};
    double invn = 1.0 / nk_;

    // kappa blocks: diagonal in k by conservation
    im.kappa_vv.assign(nk_, Eigen::MatrixXcd::Zero(v_, v_));
    im.kappa_oo.assign(nk_, Eigen::MatrixXcd::Zero(o_, o_));
    for (int Q = 0; Q < nk_; ++Q) {
        Eigen::MatrixXcd tq = gather_q(t, Q);
        for (int r = 0; r < o_ * o_ * nk_; ++r) {
            for (int kq = 0; kq < nk_; ++kq) {
                int kd_sw = ksub_(Q, kq);
                for (int c = 0; c < v_; ++c)
                    for (int a = 0; a < v_; ++a)
                        for (int d = 0; d < v_; ++d) {
                            Complex w = 2.0 * ovq_[Q](r, (kq * v_ + c) * v_ + d) -
                                        ovq_[Q](r, (kd_sw * v_ + d) * v_ + c);
                            im.kappa_vv[kq](c, a) -=
                                invn * invn * w * tq(r, (kq * v_ + a) * v_ + d);
                        }
            }
        }
        for (int ki = 0; ki < nk_; ++ki)
            for (int kp = 0; kp < o_; ++kp)  // the K orbital index
                for (int l = 0; l < o_; ++l) {
                    int r = (ki * o_ + kp) * o_ + l;
                    for (int kc = 0; kc < nk_; ++kc) {
                        int kd_sw = ksub_(Q, kc);
                        for (int c = 0; c < v_; ++c)
                            for (int d = 0; d < v_; ++d) {
                                Complex w = 2.0 * ovq_[Q](r, (kc * v_ + c) * v_ + d) -
                                            ovq_[Q](r, (kd_sw * v_ + d) * v_ + c);
                                for (int i = 0; i < o_; ++i)
                                    im.kappa_oo[ki](i, kp) +=
                                        invn * invn * w *
                                        tq((ki * o_ + i) * o_ + l, (kc * v_ + c) * v_ + d);
                            }
                    }
                }
    }

    im.chi_oooo.resize(nk_);
    for (int Q = 0; Q < nk_; ++Q) {
        Eigen::MatrixXcd tq = gather_q(t, Q);
        im.chi_oooo[Q] = oooo_[Q] + invn * (ovq_[Q] * tq.transpose()).transpose();
    }

    im.chi_ovvo_plus.resize(nk_);
    im.chi_voov.resize(nk_);
    for (int q = 0; q < nk_; ++q) {
        int rows = o_ * v_ * nk_;
        Eigen::MatrixXcd tq1(rows, rows), tq2(rows, rows);
        for (int ki = 0; ki < nk_; ++ki)
            for (int i = 0; i < o_; ++i)
                for (int a = 0; a < v_; ++a) {
                    int r = (ki * o_ + i) * v_ + a;
                    for (int kl = 0; kl < nk_; ++kl)
                        for (int l = 0; l < o_; ++l)
                            for (int d = 0; d < v_; ++d) {
                                int c = (kl * o_ + l) * v_ + d;
                                tq1(r, c) = t.at(i, l, a, d, ki, kl, ksub_(ki, q));
                                tq2(r, c) = t.at(i, l, d, a, ki, kl, kadd_(kl, q));
                            }
                }
        // whole bracket under 1/(2 N_k); see the grouping note in the docs
        im.chi_ovvo_plus[q] =
            e1_[q] + (0.5 * invn) * (tq1 * (2.0 * m1_[q] - m2_[q]) - tq2 * m1_[q]);
        im.chi_voov[q] = e2_[q] - (0.5 * invn) * (tq2 * m2_[q]);
    }
    return im;
}

AmplitudeTensor CcdEngine::contraction(const AmplitudeTensor& t,
                                       const CorrectionSetting& setting,
                                       double xi) const {
    if (t.mesh.size() != nk_ || t.n_occ != o_ || t.n_vir != v_)
        throw config_error("amplitude tensor does not match the engine mesh");
    Intermediates im = intermediates(t);
    double invn = 1.0 / nk_;

    AmplitudeTensor out(t.mesh, o_, v_);
    AmplitudeTensor perm(t.mesh, o_, v_);  // buffer the P-symmetrized part

    for (int Q = 0; Q < nk_; ++Q) {
        Eigen::MatrixXcd tq = gather_q(t, Q);
        // on-the-fly <AB|CD> slice for this Q (never materialized globally)
        Eigen::MatrixXcd vvq(v_ * v_ * nk_, v_ * v_ * nk_);
        for (int kc = 0; kc < nk_; ++kc) {
            int kd = ksub_(Q, kc);
            for (int c = 0; c < v_; ++c)
                for (int d = 0; d < v_; ++d) {
                    int r = (kc * v_ + c) * v_ + d;
                    for (int ka = 0; ka < nk_; ++ka) {
                        int kb = ksub_(Q, ka);
                        for (int a = 0; a < v_; ++a)
                            for (int b = 0; b < v_; ++b)
                                vvq(r, (ka * v_ + a) * v_ + b) = ev_.eri(
                                    o_ + a, ka, o_ + b, kb, o_ + c, kc, o_ + d, kd);
                    }
                }
        }
        Eigen::MatrixXcd aq = drv_[Q] + invn * (im.chi_oooo[Q] * tq) + invn * (tq * vvq);
        // kappa terms (P-symmetrized later via the perm buffer)
        Eigen::MatrixXcd bq = Eigen::MatrixXcd::Zero(o_ * o_ * nk_, v_ * v_ * nk_);
        for (int ki = 0; ki < nk_; ++ki)
            for (int i = 0; i < o_; ++i)
                for (int j = 0; j < o_; ++j) {
                    int r = (ki * o_ + i) * o_ + j;
                    for (int ka = 0; ka < nk_; ++ka)
                        for (int a = 0; a < v_; ++a)
                            for (int b = 0; b < v_; ++b) {
                                Complex acc = 0.0;
                                for (int c = 0; c < v_; ++c)
                                    acc += im.kappa_vv[ka](c, a) *
                                           tq(r, (ka * v_ + c) * v_ + b);
                                for (int k = 0; k < o_; ++k)
                                    acc -= im.kappa_oo[ki](i, k) *
                                           tq((ki * o_ + k) * o_ + j,
                                              (ka * v_ + a) * v_ + b);
                                bq(r, (ka * v_ + a) * v_ + b) = acc;
                            }
                }
        for (int ki = 0; ki < nk_; ++ki) {
            int kj = ksub_(Q, ki);
            for (int i = 0; i < o_; ++i)
                for (int j = 0; j < o_; ++j) {
                    int r = (ki * o_ + i) * o_ + j;
                    for (int ka = 0; ka < nk_; ++ka)
                        for (int a = 0; a < v_; ++a)
                            for (int b = 0; b < v_; ++b) {
                                int c = (ka * v_ + a) * v_ + b;
                                out.at(i, j, a, b, ki, kj, ka) = aq(r, c);
                                perm.at(i, j, a, b, ki, kj, ka) = bq(r, c);
                            }
                }
        }
    }

    // ring terms, grouped by the transfer q = k_i - k_a
    for (int q = 0; q < nk_; ++q) {
        int rows = o_ * v_ * nk_;
        Eigen::MatrixXcd t_kjcb(rows, rows), t_kjbc(rows, rows), t_kibc(rows, rows);
        for (int kk = 0; kk < nk_; ++kk)
            for (int k = 0; k < o_; ++k)
                for (int c = 0; c < v_; ++c) {
                    int r = (kk * o_ + k) * v_ + c;
                    for (int kj = 0; kj < nk_; ++kj)
                        for (int j = 0; j < o_; ++j)
                            for (int b = 0; b < v_; ++b) {
                                int col = (kj * o_ + j) * v_ + b;
                                t_kjcb(r, col) = t.at(k, j, c, b, kk, kj, ksub_(kk, q));
                                t_kjbc(r, col) = t.at(k, j, b, c, kk, kj, kadd_(kj, q));
                                t_kibc(r, col) = t.at(k, j, b, c, kk, kj, kadd_(kj, q));
                            }
                }
        // t_kibc above equals t_KI^BC with the column leg read as (k_i, i, b)
        Eigen::MatrixXcd out12 =
            invn * ((2.0 * im.chi_ovvo_plus[q] - im.chi_voov[q]) * t_kjcb -
                    im.chi_ovvo_plus[q] * t_kjbc);
        Eigen::MatrixXcd out3 = -invn * (im.chi_voov[q] * t_kibc);
        for (int ki = 0; ki < nk_; ++ki)
            for (int i = 0; i < o_; ++i)
                for (int a = 0; a < v_; ++a) {
                    int r = (ki * o_ + i) * v_ + a;
                    for (int kj = 0; kj < nk_; ++kj)
                        for (int j = 0; j < o_; ++j)
                            for (int b = 0; b < v_; ++b)
                                perm.at(i, j, a, b, ki, kj, ksub_(ki, q)) +=
                                    out12(r, (kj * o_ + j) * v_ + b);
                }
        for (int kj = 0; kj < nk_; ++kj)
            for (int j = 0; j < o_; ++j)
                for (int a = 0; a < v_; ++a) {
                    int r = (kj * o_ + j) * v_ + a;
                    for (int ki = 0; ki < nk_; ++ki)
                        for (int i = 0; i < o_; ++i)
                            for (int b = 0; b < v_; ++b)
                                perm.at(i, j, a, b, ki, kj, ksub_(kj, q)) +=
                                    out3(r, (ki * o_ + i) * v_ + b);
                }
    }

    // P(X)_{IJ}^{AB} = X_{IJ}^{AB} + X_{JI}^{BA}
    for (int ki = 0; ki < nk_; ++ki)
        for (int kj = 0; kj < nk_; ++kj) {
            int Q = kadd_(ki, kj);
            for (int ka = 0; ka < nk_; ++ka) {
                int kb = ksub_(Q, ka);
                for (int i = 0; i < o_; ++i)
                    for (int j = 0; j < o_; ++j)
                        for (int a = 0; a < v_; ++a)
                            for (int b = 0; b < v_; ++b)
                                out.at(i, j, a, b, ki, kj, ka) +=
                                    perm.at(i, j, a, b, ki, kj, ka) +
                                    perm.at(j, i, b, a, kj, ki, kb);
            }
        }

    if (setting.correct_contraction && xi != 0.0)
        for (std::size_t n = 0; n < out.data.size(); ++n)
            out.data[n] += 2.0 * xi * t.data[n];
    return out;
}

std::vector<double> CcdEngine::build_denominator(const OrbitalEnergySet& eps,
                                                 const CorrectionSetting& setting,
                                                 double xi) const {
    // reconcile the supplied set with the requested setting: D always uses
    // corrected energies iff setting.correct_eps
    Eigen::MatrixXd e = eps.eps;
    if (setting.correct_eps && !eps.corrected)
        e.topRows(eps.n_occ).array() += xi;
    else if (!setting.correct_eps && eps.corrected)
        e.topRows(eps.n_occ).array() -= eps.xi_used;

    std::vector<double> d(static_cast<std::size_t>(nk_) * nk_ * nk_ * o_ * o_ * v_ * v_);
    std::size_t n = 0;
    for (int ki = 0; ki < nk_; ++ki)
        for (int kj = 0; kj < nk_; ++kj) {
            int Q = kadd_(ki, kj);
            for (int ka = 0; ka < nk_; ++ka) {
                int kb = ksub_(Q, ka);
                for (int i = 0; i < o_; ++i)
                    for (int j = 0; j < o_; ++j)
                        for (int a = 0; a < v_; ++a)
                            for (int b = 0; b < v_; ++b) {
                                double val = e(i, ki) + e(j, kj) - e(o_ + a, ka) -
                                             e(o_ + b, kb);
                                if (std::abs(val) < 1e-8)
                                    throw divergence_error(
                                        "near-singular amplitude denominator");
                                d[n++] = val;
                            }
            }
        }
    return d;
}

void CcdEngine::check_symmetry(const AmplitudeTensor& t) const {
    double tol = 1e-12 * (1.0 + norm_inf(t));
    for (int ki = 0; ki < nk_; ++ki)
        for (int kj = 0; kj < nk_; ++kj) {
            int Q = kadd_(ki, kj);
            for (int ka = 0; ka < nk_; ++ka) {
                int kb = ksub_(Q, ka);
                for (int i = 0; i < o_; ++i)
                    for (int j = 0; j < o_; ++j)
                        for (int a = 0; a < v_; ++a)
                            for (int b = 0; b < v_; ++b)
                                if (std::abs(t.at(i, j, a, b, ki, kj, ka) -
                                             t.at(j, i, b, a, kj, ki, kb)) > tol)
                                    throw std::runtime_error(
                                        "amplitude lost permutation symmetry");
            }
        }
}

namespace {

void check_finite(const AmplitudeTensor& t) {
    for (const Complex& z : t.data)
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
            throw divergence_error("non-finite amplitude entries");
    if (norm_inf(t) > 1e6) throw divergence_error("amplitude norm exceeds 1e6");
}

}  // namespace

std::pair<AmplitudeTensor, SolverReport> CcdEngine::ccd_n(int n,
                                                          const OrbitalEnergySet& eps,
                                                          const CorrectionSetting& setting,
                                                          double xi) const {
    if (n < 1) throw config_error("ccd_n requires n >= 1");
    std::vector<double> d = build_denominator(eps, setting, xi);
    AmplitudeTensor t(ev_.mesh(), o_, v_);
    double last_change = 0.0;
    for (int m = 0; m < n; ++m) {
        AmplitudeTensor a = contraction(t, setting, xi);
        for (std::size_t p = 0; p < a.data.size(); ++p) a.data[p] /= d[p];
        check_finite(a);
        check_symmetry(a);
        AmplitudeTensor diff = a;
        for (std::size_t p = 0; p < diff.data.size(); ++p) diff.data[p] -= t.data[p];
        last_change = norm_1(diff);
        t = std::move(a);
    }
    SolverReport rep{n, last_change, energy(t), false};
    return {std::move(t), rep};
}

std::pair<AmplitudeTensor, SolverReport> CcdEngine::ccd_converge(
    const OrbitalEnergySet& eps, const CorrectionSetting& setting, double xi, double tol,
    int max_iter, double damping) const {
    if (tol <= 0.0) throw config_error("ccd_converge requires tol > 0");
    if (damping <= 0.0 || damping > 1.0)
        throw config_error("damping must lie in (0, 1]");
    std::vector<double> d = build_denominator(eps, setting, xi);
    AmplitudeTensor t(ev_.mesh(), o_, v_);
    SolverReport rep;
    for (int it = 1; it <= max_iter; ++it) {
        AmplitudeTensor a = contraction(t, setting, xi);
        double resid = 0.0;
        for (std::size_t p = 0; p < a.data.size(); ++p) {
            Complex next = (1.0 - damping) * t.data[p] + damping * (a.data[p] / d[p]);
            resid += std::abs(next - t.data[p]);
            t.data[p] = next;
        }
        double nk3 = double(nk_) * nk_ * nk_;
        rep.iterations = it;
        rep.residual_1norm = resid / nk3;
        check_finite(t);
        check_symmetry(t);
        if (rep.residual_1norm <= tol) {
            rep.converged = true;
            break;
        }
    }
    rep.energy = energy(t);
    return {std::move(t), rep};
}

Complex CcdEngine::energy(const AmplitudeTensor& t) const {
    Complex e = 0.0;
    for (int Q = 0; Q < nk_; ++Q) {
        Eigen::MatrixXcd tq = gather_q(t, Q);
        for (int ki = 0; ki < nk_; ++ki)
            for (int i = 0; i < o_; ++i)
                for (int j = 0; j < o_; ++j) {
                    int r = (ki * o_ + i) * o_ + j;
                    for (int ka = 0; ka < nk_; ++ka) {
                        int kb = ksub_(Q, ka);
                        for (int a = 0; a < v_; ++a)
                            for (int b = 0; b < v_; ++b) {
                                // W = 2<IJ|AB> - <IJ|BA> via hermiticity of the driver
                                Complex w =
                                    2.0 * std::conj(drv_[Q](r, (ka * v_ + a) * v_ + b)) -
                                    std::conj(drv_[Q](r, (kb * v_ + b) * v_ + a));
                                e += w * tq(r, (ka * v_ + a) * v_ + b);
                            }
                    }
                }
    }
    double nk3 = double(nk_) * nk_ * nk_;
    return e / nk3;
}

AmplitudeTensor contraction_map(const AmplitudeTensor& t, const EriEvaluator& ev,
                                const CorrectionSetting& setting, double xi) {
    return CcdEngine(ev).contraction(t, setting, xi);
}

Intermediates build_intermediates(const AmplitudeTensor& t, const EriEvaluator& ev) {
    return CcdEngine(ev).intermediates(t);
}

std::pair<AmplitudeTensor, SolverReport> ccd_n(int n, const EriEvaluator& ev,
                                               const OrbitalEnergySet& eps,
                                               const CorrectionSetting& setting,
                                               double xi) {
    return CcdEngine(ev).ccd_n(n, eps, setting, xi);
}

std::pair<AmplitudeTensor, SolverReport> ccd_converge(const EriEvaluator& ev,
                                                      const OrbitalEnergySet& eps,
                                                      const CorrectionSetting& setting,
                                                      double xi, double tol, int max_iter,
                                                      double damping) {
    return CcdEngine(ev).ccd_converge(eps, setting, xi, tol, max_iter, damping);
}

Complex energy_of(const AmplitudeTensor& t, const EriEvaluator& ev) {
    int o = ev.n_occ(), v = ev.n_vir();
    const KMesh& m = t.mesh;
    Complex e = 0.0;
    for (int ki = 0; ki < m.size(); ++ki)
        for (int kj = 0; kj < m.size(); ++kj)
            for (int ka = 0; ka < m.size(); ++ka) {
                int kb = conserve_momentum(m, ki, kj, ka);
                for (int i = 0; i < o; ++i)
                    for (int j = 0; j < o; ++j)
                        for (int a = 0; a < v; ++a)
                            for (int b = 0; b < v; ++b) {
                                Complex w =
                                    2.0 * ev.eri(i, ki, j, kj, o + a, ka, o + b, kb) -
                                    ev.eri(i, ki, j, kj, o + b, kb, o + a, ka);
                                e += w * t.at(i, j, a, b, ki, kj, ka);
                            }
            }
    double nk3 = double(m.size()) * m.size() * m.size();
    return e / nk3;
}

SingularityProfile amplitude_singularity_scan(const AmplitudeTensor& t, int i, int j,
                                              int a, int b, int kj) {
    const KMesh& m = t.mesh;
    SingularityProfile prof;
    for (int ki = 0; ki < m.size(); ++ki)
        for (int axis = 0; axis < 3; ++axis)
            for (int step = 0; step < m.dims()[axis]; ++step) {
                Eigen::Vector3i num = m.numerator(ki);
                num[axis] += step;
                int ka = m.index_of(num);
                prof.values.push_back(std::abs(t.at(i, j, a, b, ki, kj, ka)));
            }
    for (double v : prof.values) prof.max_value = std::max(prof.max_value, v);
    prof.median = med_of(prof.values);
    return prof;
}

void dump_amplitude(const AmplitudeTensor& t, const std::string& path) {
    std::ofstream bin(path, std::ios::binary);
    if (!bin) throw config_error("cannot open amplitude dump path: " + path);
    bin.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(Complex)));
    nlohmann::json hdr{{"dims", {t.mesh.dims()[0], t.mesh.dims()[1], t.mesh.dims()[2]}},
                       {"n_occ", t.n_occ},
                       {"n_vir", t.n_vir},
                       {"layout", "(k_i,k_j,k_a) outer, (i,j,a,b) inner, complex128 LE"}};
    std::ofstream js(path + ".json");
    js << hdr.dump(2) << "\n";
}

}  // namespace fslab
