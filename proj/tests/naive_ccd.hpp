#pragma once

// Shared test-side helpers: the naive Appendix-A oracle and small fixtures.
// Deliberately independent of the engine's grouped-block assembly.

#include <random>
#include <vector>

#include "fslab/ccd.hpp"

namespace fslab::testing {



// ---- naive Appendix-A oracle -----------------------------------------------
// Direct summation with explicit momentum arithmetic; no grouped blocks, no
// code shared with the engine beyond eri() and the amplitude container.
struct NaiveCcd {
    const EriEvaluator& ev;
    const KMesh& mesh;
    int o, v, N;

    explicit NaiveCcd(const EriEvaluator& e)
        : ev(e), mesh(e.mesh()), o(e.n_occ()), v(e.n_vir()), N(e.mesh().size()) {}

    int sum3(int k1, int k2, int k3) const {  // fold(k1 + k2 - k3)
        return mesh.index_of(mesh.numerator(k1) + mesh.numerator(k2) -
                             mesh.numerator(k3));
    }
    Complex eri(int b1, int k1, int b2, int k2, int b3, int k3, int b4, int k4) const {
        return ev.eri(b1, k1, b2, k2, b3, k3, b4, k4);
    }

    Complex kappa_vv(const AmplitudeTensor& t, int c, int a, int ka) const {
        Complex s = 0.0;
        for (int kk = 0; kk < N; ++kk)
            for (int kl = 0; kl < N; ++kl) {
                int kd = sum3(kk, kl, ka);
                for (int k = 0; k < o; ++k)
                    for (int l = 0; l < o; ++l)
                        for (int d = 0; d < v; ++d) {
                            Complex w = 2.0 * eri(k, kk, l, kl, o + c, ka, o + d, kd) -
                                        eri(k, kk, l, kl, o + d, kd, o + c, ka);
                            s += w * t.at(k, l, a, d, kk, kl, ka);
                        }
            }
        return -s / double(N) / double(N);
    }

    Complex kappa_oo(const AmplitudeTensor& t, int i, int k, int ki) const {
        Complex s = 0.0;
        for (int kl = 0; kl < N; ++kl)
            for (int kc = 0; kc < N; ++kc) {
                int kd = sum3(ki, kl, kc);
                for (int l = 0; l < o; ++l)
                    for (int c = 0; c < v; ++c)
                        for (int d = 0; d < v; ++d) {
                            Complex w = 2.0 * eri(k, ki, l, kl, o + c, kc, o + d, kd) -
                                        eri(k, ki, l, kl, o + d, kd, o + c, kc);
                            s += w * t.at(i, l, c, d, ki, kl, kc);
                        }
            }
        return s / double(N) / double(N);
    }

    Complex chi_oooo(const AmplitudeTensor& t, int i, int ki, int j, int kj, int k,
                     int kk, int l, int kl) const {
        Complex s = eri(k, kk, l, kl, i, ki, j, kj);
        for (int kc = 0; kc < N; ++kc) {
            int kd = sum3(ki, kj, kc);
            for (int c = 0; c < v; ++c)
                for (int d = 0; d < v; ++d)
                    s += eri(k, kk, l, kl, o + c, kc, o + d, kd) *
                         t.at(i, j, c, d, ki, kj, kc) / double(N);
        }
        return s;
    }

    // chi_IC^AK with kc = fold(ka + kk - ki); 1/(2N) over the whole bracket
    Complex chi1(const AmplitudeTensor& t, int i, int ki, int c, int a, int ka, int k,
                 int kk) const {
        int kc = sum3(ka, kk, ki);
        Complex s = eri(o + a, ka, k, kk, i, ki, o + c, kc);
        Complex br = 0.0;
        for (int kl = 0; kl < N; ++kl) {
            int kd = sum3(kl, kk, kc);
            for (int l = 0; l < o; ++l)
                for (int d = 0; d < v; ++d) {
                    Complex ldc = eri(l, kl, k, kk, o + d, kd, o + c, kc);
                    Complex lcd = eri(l, kl, k, kk, o + c, kc, o + d, kd);
                    br += (2.0 * ldc - lcd) * t.at(i, l, a, d, ki, kl, ka) -
                          ldc * t.at(i, l, d, a, ki, kl, kd);
                }
        }
        return s + br / (2.0 * N);
    }

    Complex chi2(const AmplitudeTensor& t, int i, int ki, int c, int a, int ka, int k,
                 int kk) const {
        int kc = sum3(ka, kk, ki);
        Complex s = eri(o + a, ka, k, kk, o + c, kc, i, ki);
        Complex br = 0.0;
        for (int kl = 0; kl < N; ++kl) {
            int kd = sum3(kl, kk, kc);
            for (int l = 0; l < o; ++l)
                for (int d = 0; d < v; ++d)
                    br += eri(l, kl, k, kk, o + c, kc, o + d, kd) *
                          t.at(i, l, d, a, ki, kl, kd);
        }
        return s - br / (2.0 * N);
    }

    AmplitudeTensor apply(const AmplitudeTensor& t, bool correct, double xi) const {
        AmplitudeTensor out(mesh, o, v);
        // cache the defining sums up front (same formulas, evaluated once)
        std::vector<Complex> kvv(std::size_t(N) * v * v), koo(std::size_t(N) * o * o);
        for (int ka = 0; ka < N; ++ka)
            for (int c = 0; c < v; ++c)
                for (int a = 0; a < v; ++a)
                    kvv[(std::size_t(ka) * v + c) * v + a] = kappa_vv(t, c, a, ka);
        for (int ki = 0; ki < N; ++ki)
            for (int i = 0; i < o; ++i)
                for (int k = 0; k < o; ++k)
                    koo[(std::size_t(ki) * o + i) * o + k] = kappa_oo(t, i, k, ki);
        std::size_t nring = std::size_t(N) * N * N * o * v * v * o;
        std::vector<Complex> x1c(nring), x2c(nring);
        auto ridx = [&](int i, int ki, int c, int a, int ka, int k, int kk) {
            return (((std::size_t(ki) * N + ka) * N + kk) * o + i) * v * v * o +
                   (std::size_t(c) * v + a) * o + k;
        };
        for (int ki = 0; ki < N; ++ki)
            for (int ka = 0; ka < N; ++ka)
                for (int kk = 0; kk < N; ++kk)
                    for (int i = 0; i < o; ++i)
                        for (int c = 0; c < v; ++c)
                            for (int a = 0; a < v; ++a)
                                for (int k = 0; k < o; ++k) {
                                    x1c[ridx(i, ki, c, a, ka, k, kk)] =
                                        chi1(t, i, ki, c, a, ka, k, kk);
                                    x2c[ridx(i, ki, c, a, ka, k, kk)] =
                                        chi2(t, i, ki, c, a, ka, k, kk);
                                }
        std::vector<Complex> coooo(std::size_t(N) * N * N * o * o * o * o);
        auto qidx = [&](int i, int ki, int j, int kj, int k, int kk, int l) {
            return (((std::size_t(ki) * N + kj) * N + kk) * o + i) * o * o * o +
                   (std::size_t(j) * o + k) * o + l;
        };
        for (int ki = 0; ki < N; ++ki)
            for (int kj = 0; kj < N; ++kj)
                for (int kk = 0; kk < N; ++kk)
                    for (int i = 0; i < o; ++i)
                        for (int j = 0; j < o; ++j)
                            for (int k = 0; k < o; ++k)
                                for (int l = 0; l < o; ++l)
                                    coooo[qidx(i, ki, j, kj, k, kk, l)] = chi_oooo(
                                        t, i, ki, j, kj, k, kk, l, sum3(ki, kj, kk));
        // the permuted half, as a function of the slot assignment
        auto ppart = [&](int i, int ki, int j, int kj, int a, int ka, int b, int kb) {
            (void)kb;
            Complex s = 0.0;
            for (int c = 0; c < v; ++c)
                s += kvv[(std::size_t(ka) * v + c) * v + a] *
                     t.at(i, j, c, b, ki, kj, ka);
            for (int k = 0; k < o; ++k)
                s -= koo[(std::size_t(ki) * o + i) * o + k] *
                     t.at(k, j, a, b, ki, kj, ka);
            Complex ring = 0.0;
            for (int kk = 0; kk < N; ++kk)
                for (int k = 0; k < o; ++k)
                    for (int c = 0; c < v; ++c) {
                        int kc = sum3(ka, kk, ki);
                        Complex x1 = x1c[ridx(i, ki, c, a, ka, k, kk)];
                        Complex x2 = x2c[ridx(i, ki, c, a, ka, k, kk)];
                        ring += (2.0 * x1 - x2) * t.at(k, j, c, b, kk, kj, kc);
                        ring -= x1 * t.at(k, j, b, c, kk, kj, sum3(kk, kj, kc));
                        int kc2 = sum3(ka, kk, kj);
                        ring -= x2c[ridx(j, kj, c, a, ka, k, kk)] *
                                t.at(k, i, b, c, kk, ki, sum3(kk, ki, kc2));
                    }
            return s + ring / double(N);
        };
        for (int ki = 0; ki < N; ++ki)
            for (int kj = 0; kj < N; ++kj)
                for (int ka = 0; ka < N; ++ka) {
                    int kb = sum3(ki, kj, ka);
                    for (int i = 0; i < o; ++i)
                        for (int j = 0; j < o; ++j)
                            for (int a = 0; a < v; ++a)
                                for (int b = 0; b < v; ++b) {
                                    Complex val = eri(o + a, ka, o + b, kb, i, ki, j, kj);
                                    val += ppart(i, ki, j, kj, a, ka, b, kb);
                                    val += ppart(j, kj, i, ki, b, kb, a, ka);
                                    for (int kk = 0; kk < N; ++kk) {
                                        int kl = sum3(ki, kj, kk);
                                        for (int k = 0; k < o; ++k)
                                            for (int l = 0; l < o; ++l)
                                                val += coooo[qidx(i, ki, j, kj, k, kk,
                                                                  l)] *
                                                       t.at(k, l, a, b, kk, kl, ka) /
                                                       double(N);
                                    }
                                    for (int kc = 0; kc < N; ++kc) {
                                        int kd = sum3(ki, kj, kc);
                                        for (int c = 0; c < v; ++c)
                                            for (int d = 0; d < v; ++d)
                                                val += eri(o + a, ka, o + b, kb, o + c,
                                                           kc, o + d, kd) *
                                                       t.at(i, j, c, d, ki, kj, kc) /
                                                       double(N);
                                    }
                                    if (correct)
                                        val += 2.0 * xi * t.at(i, j, a, b, ki, kj, ka);
                                    out.at(i, j, a, b, ki, kj, ka) = val;
                                }
                }
        return out;
    }
};

EriEvaluator make_ev(const char* preset, int n_occ, int n_vir, int dim,
                     double scale = 1.0) {
    BandModel m = BandModel::preset(preset);
    m.n_occ = n_occ;
    m.n_vir = n_vir;
    OrbitalTable orb = solve_bands(m, build_mesh(reciprocal_of(m.cell), {dim, dim, dim},
                                                 true));
    return EriEvaluator(std::move(orb), scale);
}

AmplitudeTensor random_tensor(const KMesh& mesh, int o, int v, unsigned seed,
                              double scale = 0.05) {
    AmplitudeTensor t(mesh, o, v);
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (Complex& z : t.data) z = Complex(u(rng), u(rng));
    return t;
}

void symmetrize(AmplitudeTensor& t) {
    const KMesh& m = t.mesh;
    for (int ki = 0; ki < m.size(); ++ki)
        for (int kj = 0; kj < m.size(); ++kj)
            for (int ka = 0; ka < m.size(); ++ka) {
                int kb = conserve_momentum(m, ki, kj, ka);
                for (int i = 0; i < t.n_occ; ++i)
                    for (int j = 0; j < t.n_occ; ++j)
                        for (int a = 0; a < t.n_vir; ++a)
                            for (int b = 0; b < t.n_vir; ++b) {
                                Complex avg = 0.5 * (t.at(i, j, a, b, ki, kj, ka) +
                                                     t.at(j, i, b, a, kj, ki, kb));
                                t.at(i, j, a, b, ki, kj, ka) = avg;
                                t.at(j, i, b, a, kj, ki, kb) = avg;
                            }
            }
}

double max_dev(const AmplitudeTensor& x, const AmplitudeTensor& y) {
    double m = 0.0;
    for (std::size_t n = 0; n < x.data.size(); ++n)
        m = std::max(m, std::abs(x.data[n] - y.data[n]));
    return m;
}


}  // namespace fslab::testing
