#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>

#include "fslab/ccd.hpp"
#include "fslab/errors.hpp"
#include "fslab/madelung.hpp"

#include "naive_ccd.hpp"

using namespace fslab;
using namespace fslab::testing;



TEST_CASE("norms: hand values, scaling, counting bound") {
    BandModel m = BandModel::preset("insulator-1x1");
    KMesh mesh = build_mesh(reciprocal_of(m.cell), {1, 1, 1}, true);
    AmplitudeTensor ones(mesh, 1, 1);
    ones.data[0] = 1.0;
    CHECK(norm_1(ones) == 1.0);
    CHECK(norm_inf(ones) == 1.0);

    AmplitudeTensor t = random_tensor(build_mesh(reciprocal_of(m.cell), {2, 2, 2}, true),
                                      2, 2, 7);
    AmplitudeTensor t3 = t;
    for (Complex& z : t3.data) z *= Complex(0.0, -3.0);
    CHECK(norm_1(t3) == doctest::Approx(3.0 * norm_1(t)).epsilon(1e-13));
    CHECK(norm_1(t) <= 8.0 * 4.0 * 4.0 * norm_inf(t) + 1e-15);  // N_k * o^2 v^2 bound
}

TEST_CASE("denominator: 2xi shift, sign, near-singular abort") {
    EriEvaluator ev = make_ev("insulator-1x1", 1, 1, 2);
    double xi = madelung_constant(EwaldSpec::make(ev.orbitals().model.cell, {2, 2, 2})).xi;
    OrbitalEnergySet u = orbital_energies(ev, false, 0.0);
    OrbitalEnergySet c = orbital_energies(ev, true, xi);
    double gap = u.eps.row(1).minCoeff() - u.eps.row(0).maxCoeff();
    REQUIRE(gap > 0.0);
    const KMesh& mesh = ev.mesh();
    for (int ki = 0; ki < mesh.size(); ++ki)
        for (int kj = 0; kj < mesh.size(); ++kj)
            for (int ka = 0; ka < mesh.size(); ++ka) {
                int kb = conserve_momentum(mesh, ki, kj, ka);
                double du = denominator(u, 0, ki, 0, kj, 0, ka, 0, kb);
                double dc = denominator(c, 0, ki, 0, kj, 0, ka, 0, kb);
                CHECK(dc - du == doctest::Approx(2.0 * xi).epsilon(1e-12));
                CHECK(du <= -2.0 * gap + 1e-12);
            }
    OrbitalEnergySet flat = u;
    flat.eps.setZero();
    CHECK_THROWS_AS(denominator(flat, 0, 0, 0, 0, 0, 0, 0, 0), divergence_error);
}

TEST_CASE("contraction map at T = 0 is the bare driver, correction-independent") {
    EriEvaluator ev = make_ev("insulator-2x2", 2, 2, 1);
    AmplitudeTensor zero(ev.mesh(), 2, 2);
    AmplitudeTensor a0 = contraction_map(zero, ev, {false, false}, 0.0);
    AmplitudeTensor a1 = contraction_map(zero, ev, {false, true}, -0.7);
    CHECK(max_dev(a0, a1) == 0.0);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b)
                    CHECK(std::abs(a0.at(i, j, a, b, 0, 0, 0) -
                                   ev.eri(2 + a, 0, 2 + b, 0, i, 0, j, 0)) < 1e-14);
}

TEST_CASE("contraction map equals the naive seven-loop oracle") {
    struct Case {
        const char* preset;
        int nb, dim;
        unsigned seeds;
    };
    for (const Case& cs : {Case{"insulator-1x1", 1, 1, 5}, Case{"insulator-2x2", 2, 1, 5},
                           Case{"insulator-1x1", 1, 2, 2},
                           Case{"insulator-2x2", 2, 2, 2}}) {
        EriEvaluator ev = make_ev(cs.preset, cs.nb, cs.nb, cs.dim);
        CcdEngine engine(ev);
        NaiveCcd naive(ev);
        for (unsigned s = 0; s < cs.seeds; ++s) {
            AmplitudeTensor t = random_tensor(ev.mesh(), cs.nb, cs.nb, 100 + s);
            AmplitudeTensor got = engine.contraction(t, {false, false}, 0.0);
            AmplitudeTensor want = naive.apply(t, false, 0.0);
            CHECK(max_dev(got, want) < 1e-12);
            AmplitudeTensor gotc = engine.contraction(t, {false, true}, -0.45);
            AmplitudeTensor wantc = naive.apply(t, true, -0.45);
            CHECK(max_dev(gotc, wantc) < 1e-12);
        }
    }
}

TEST_CASE("intermediate blocks match their defining sums") {
    for (int dim : {1, 2}) {
        EriEvaluator ev = make_ev("insulator-2x2", 2, 2, dim);
        NaiveCcd naive(ev);
        AmplitudeTensor t = random_tensor(ev.mesh(), 2, 2, 31 + dim);
        Intermediates im = build_intermediates(t, ev);
        const int N = ev.mesh().size();
        std::mt19937 rng(77);
        std::uniform_int_distribution<int> dk(0, N - 1), db(0, 1);
        for (int trial = 0; trial < 20; ++trial) {
            int ki = dk(rng), kj = dk(rng), kk = dk(rng), ka = dk(rng);
            int i = db(rng), j = db(rng), k = db(rng), l = db(rng);
            int a = db(rng), c = db(rng);
            CHECK(std::abs(im.kappa_vv_at(c, ka, a, ka) - naive.kappa_vv(t, c, a, ka)) <
                  1e-12);
            CHECK(std::abs(im.kappa_oo_at(i, ki, k, ki) - naive.kappa_oo(t, i, k, ki)) <
                  1e-12);
            int kl = naive.sum3(ki, kj, kk);
            CHECK(std::abs(im.chi_oooo_at(i, ki, j, kj, k, kk, l, kl) -
                           naive.chi_oooo(t, i, ki, j, kj, k, kk, l, kl)) < 1e-12);
            int kc = naive.sum3(ka, kk, ki);
            CHECK(std::abs(im.chi_ovvo_plus_at(i, ki, c, kc, a, ka, k, kk) -
                           naive.chi1(t, i, ki, c, a, ka, k, kk)) < 1e-12);
            CHECK(std::abs(im.chi_voov_at(c, kc, i, ki, a, ka, k, kk) -
                           naive.chi2(t, i, ki, c, a, ka, k, kk)) < 1e-12);
            CHECK(std::abs(chi_vvvv_at(ev, c, kc, a, naive.sum3(kc, ka, kc), a, kc, c,
                                       ka)) < 1e3);  // smoke: on-demand, finite
        }
    }
}

TEST_CASE("CCD(1) is MP2: closed-form oracle at N_k in {1, 8, 27}") {
    for (int dim : {1, 2, 3}) {
        EriEvaluator ev = make_ev("insulator-1x1", 1, 1, dim);
        OrbitalEnergySet eps = orbital_energies(ev, false, 0.0);
        auto [t1, rep] = ccd_n(1, ev, eps, {false, false}, 0.0);
        const KMesh& mesh = ev.mesh();
        Complex mp2 = 0.0;
        for (int ki = 0; ki < mesh.size(); ++ki)
            for (int kj = 0; kj < mesh.size(); ++kj)
                for (int ka = 0; ka < mesh.size(); ++ka) {
                    int kb = conserve_momentum(mesh, ki, kj, ka);
                    Complex w = 2.0 * ev.eri(0, ki, 0, kj, 1, ka, 1, kb) -
                                ev.eri(0, ki, 0, kj, 1, kb, 1, ka);
                    Complex amp = ev.eri(1, ka, 1, kb, 0, ki, 0, kj) /
                                  denominator(eps, 0, ki, 0, kj, 0, ka, 0, kb);
                    mp2 += w * amp;
                }
        double nk3 = std::pow(double(mesh.size()), 3);
        mp2 /= nk3;
        CHECK(std::abs(rep.energy - mp2) < 1e-12 * (1.0 + std::abs(mp2)));
        CHECK(std::abs(rep.energy.imag()) < 1e-10);
        CHECK(rep.energy.real() < 0.0);  // correlation lowers the energy
    }
}

TEST_CASE("CCD(1) tensors are bit-identical across the contraction correction") {
    EriEvaluator ev = make_ev("insulator-1x1", 1, 1, 2);
    double xi = madelung_constant(EwaldSpec::make(ev.orbitals().model.cell, {2, 2, 2})).xi;
    OrbitalEnergySet eps = orbital_energies(ev, false, 0.0);
    auto [ta, ra] = ccd_n(1, ev, eps, {false, false}, xi);
    auto [tb, rb] = ccd_n(1, ev, eps, {false, true}, xi);
    for (std::size_t n = 0; n < ta.data.size(); ++n) {
        CHECK(ta.data[n].real() == tb.data[n].real());
        CHECK(ta.data[n].imag() == tb.data[n].imag());
    }
    CHECK(ra.energy == rb.energy);
}

TEST_CASE("CCD(2) differs from CCD(1) on a generic model") {
    EriEvaluator ev = make_ev("insulator-1x1", 1, 1, 2);
    OrbitalEnergySet eps = orbital_energies(ev, false, 0.0);
    auto [t1, r1] = ccd_n(1, ev, eps, {false, false}, 0.0);
    auto [t2, r2] = ccd_n(2, ev, eps, {false, false}, 0.0);
    CHECK(std::abs(r2.energy - r1.energy) > 1e-8);
}

TEST_CASE("cancellation identity: corrected and uncorrected residuals coincide") {
    for (int dim : {1, 2, 3}) {
        EriEvaluator ev = make_ev("insulator-1x1", 1, 1, dim);
        Eigen::Vector3i dims{dim, dim, dim};
        double xi = madelung_constant(EwaldSpec::make(ev.orbitals().model.cell, dims)).xi;
        OrbitalEnergySet u = orbital_energies(ev, false, 0.0);
        OrbitalEnergySet c = orbital_energies(ev, true, xi);
        CcdEngine engine(ev);
        AmplitudeTensor t = random_tensor(ev.mesh(), 1, 1, 400 + dim);
        AmplitudeTensor au = engine.contraction(t, {false, false}, xi);
        AmplitudeTensor ac = engine.contraction(t, {true, true}, xi);
        const KMesh& mesh = ev.mesh();
        double worst = 0.0;
        for (int ki = 0; ki < mesh.size(); ++ki)
            for (int kj = 0; kj < mesh.size(); ++kj)
                for (int ka = 0; ka < mesh.size(); ++ka) {
                    int kb = conserve_momentum(mesh, ki, kj, ka);
                    Complex ru = denominator(u, 0, ki, 0, kj, 0, ka, 0, kb) *
                                     t.at(0, 0, 0, 0, ki, kj, ka) -
                                 au.at(0, 0, 0, 0, ki, kj, ka);
                    Complex rc = denominator(c, 0, ki, 0, kj, 0, ka, 0, kb) *
                                     t.at(0, 0, 0, 0, ki, kj, ka) -
                                 ac.at(0, 0, 0, 0, ki, kj, ka);
                    worst = std::max(worst, std::abs(ru - rc));
                }
        CHECK(worst < 1e-13);
    }
}

TEST_CASE("P-symmetry is preserved by a solver step") {
    EriEvaluator ev = make_ev("insulator-2x2", 2, 2, 2);
    OrbitalEnergySet eps = orbital_energies(ev, false, 0.0);
    CcdEngine engine(ev);
    AmplitudeTensor t = random_tensor(ev.mesh(), 2, 2, 55);
    symmetrize(t);
    AmplitudeTensor a = engine.contraction(t, {false, false}, 0.0);
    const KMesh& mesh = ev.mesh();
    double worst = 0.0;
    for (int ki = 0; ki < mesh.size(); ++ki)
        for (int kj = 0; kj < mesh.size(); ++kj)
            for (int ka = 0; ka < mesh.size(); ++ka) {
                int kb = conserve_momentum(mesh, ki, kj, ka);
                for (int i = 0; i < 2; ++i)
                    for (int j = 0; j < 2; ++j)
                        for (int va = 0; va < 2; ++va)
                            for (int vb = 0; vb < 2; ++vb) {
                                Complex x =
                                    a.at(i, j, va, vb, ki, kj, ka) /
                                        denominator(eps, i, ki, j, kj, va, ka, vb, kb) -
                                    a.at(j, i, vb, va, kj, ki, kb) /
                                        denominator(eps, j, kj, i, ki, vb, kb, va, ka);
                                worst = std::max(worst, std::abs(x));
                            }
            }
    CHECK(worst < 1e-12);
}

TEST_CASE("weak-coupling convergence, fixed point, corrected/uncorrected energy") {
    for (int dim : {1, 2, 3}) {
        EriEvaluator ev = make_ev("insulator-1x1", 1, 1, dim, 0.1);
        Eigen::Vector3i dims{dim, dim, dim};
        double xi = madelung_constant(EwaldSpec::make(ev.orbitals().model.cell, dims)).xi;
        OrbitalEnergySet eps = orbital_energies(ev, false, 0.0);
        CcdEngine engine(ev);
        double tol = 1e-10;
        auto [tu, ru] = engine.ccd_converge(eps, {false, false}, xi, tol, 100, 1.0);
        REQUIRE(ru.converged);
        CHECK(ru.iterations < 50);
        CHECK(ru.residual_1norm <= tol);
        CHECK(std::abs(ru.energy.imag()) < 1e-10);
        // fixed-point property through the public map
        AmplitudeTensor a = engine.contraction(tu, {false, false}, xi);
        const KMesh& mesh = ev.mesh();
        AmplitudeTensor step(mesh, 1, 1);
        for (int ki = 0; ki < mesh.size(); ++ki)
            for (int kj = 0; kj < mesh.size(); ++kj)
                for (int ka = 0; ka < mesh.size(); ++ka) {
                    int kb = conserve_momentum(mesh, ki, kj, ka);
                    step.at(0, 0, 0, 0, ki, kj, ka) =
                        a.at(0, 0, 0, 0, ki, kj, ka) /
                            denominator(eps, 0, ki, 0, kj, 0, ka, 0, kb) -
                        tu.at(0, 0, 0, 0, ki, kj, ka);
                }
        CHECK(norm_1(step) <= 2.0 * tol);
        // both corrections on: same fixed point (cancellation identity)
        auto [tc, rc] = engine.ccd_converge(eps, {true, true}, xi, tol, 100, 1.0);
        REQUIRE(rc.converged);
        CHECK(std::abs(rc.energy - ru.energy) < 10.0 * tol);
    }
}

TEST_CASE("non-convergence is a report, not an exception") {
    EriEvaluator ev = make_ev("insulator-1x1", 1, 1, 1);
    OrbitalEnergySet eps = orbital_energies(ev, false, 0.0);
    auto [t, rep] = ccd_converge(ev, eps, {false, false}, 0.0, 1e-16, 3, 0.5);
    CHECK_FALSE(rep.converged);
    CHECK(rep.iterations == 3);
}

TEST_CASE("energy_of: hand formula at N_k = 1 and engine agreement") {
    EriEvaluator ev = make_ev("insulator-1x1", 1, 1, 1);
    AmplitudeTensor t(ev.mesh(), 1, 1);
    t.data[0] = Complex(0.3, -0.2);
    Complex w = 2.0 * ev.eri(0, 0, 0, 0, 1, 0, 1, 0) - ev.eri(0, 0, 0, 0, 1, 0, 1, 0);
    CHECK(std::abs(energy_of(t, ev) - w * t.data[0]) < 1e-14);

    EriEvaluator ev2 = make_ev("insulator-2x2", 2, 2, 2);
    CcdEngine engine(ev2);
    AmplitudeTensor tr = random_tensor(ev2.mesh(), 2, 2, 99);
    CHECK(std::abs(energy_of(tr, ev2) - engine.energy(tr)) < 1e-12);
}

TEST_CASE("singularity scan: constant profile and bounded CCD(n) amplitudes") {
    EriEvaluator ev = make_ev("insulator-1x1", 1, 1, 4);
    AmplitudeTensor flat(ev.mesh(), 1, 1);
    for (Complex& z : flat.data) z = Complex(0.25, 0.0);
    SingularityProfile p0 = amplitude_singularity_scan(flat, 0, 0, 0, 0, 0);
    CHECK(p0.max_value == doctest::Approx(0.25));
    CHECK(p0.median == doctest::Approx(0.25));

    OrbitalEnergySet eps = orbital_energies(ev, false, 0.0);
    CcdEngine engine(ev);
    for (int n : {1, 2}) {
        auto [t, rep] = engine.ccd_n(n, eps, {false, false}, 0.0);
        SingularityProfile p = amplitude_singularity_scan(t, 0, 0, 0, 0, 1);
        CHECK(p.max_value < 1e6);
        CHECK(p.max_value <= 10.0 * p.median);
    }
}

TEST_CASE("amplitude dump writes binary payload and JSON header") {
    EriEvaluator ev = make_ev("insulator-1x1", 1, 1, 1);
    AmplitudeTensor t(ev.mesh(), 1, 1);
    t.data[0] = Complex(1.5, -2.5);
    std::string path = "test_amp_dump.bin";
    dump_amplitude(t, path);
    std::ifstream bin(path, std::ios::binary | std::ios::ate);
    REQUIRE(bin.good());
    CHECK(static_cast<std::size_t>(bin.tellg()) == t.data.size() * sizeof(Complex));
    std::ifstream js(path + ".json");
    REQUIRE(js.good());
    std::string body((std::istreambuf_iterator<char>(js)),
                     std::istreambuf_iterator<char>());
    CHECK(body.find("n_occ") != std::string::npos);
    std::remove(path.c_str());
    std::remove((path + ".json").c_str());
}
