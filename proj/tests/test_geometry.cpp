#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fermivol/geometry.hpp"
#include "fermivol/rng.hpp"

using namespace fermivol;

namespace {

constexpr double kPi = std::numbers::pi;

DispersionModel cone3d() { return make_quadratic_form(3, 1, {1, 1, 1, 1}, 1.0); }

DispersionModel small_perturbed_cone() {
    // G(k) = 0.05 k1^3 + 0.03 k1 k2 k3: third-order zero at 0
    std::vector<CubicTerm> cubic{{{0, 0, 0}, 0.05}, {{0, 1, 2}, 0.03}};
    return make_perturbed_cone(3, 1, {1, 1, 1, 1}, cubic, 0.6);
}

// central finite differences used as the independent derivative oracle
Vec fd_grad(const DispersionModel& m, const Vec& k, double h) {
    Vec g = zero_vec();
    for (int i = 0; i < m.d; ++i) {
        Vec kp = k, km = k;
        kp[i] += h;
        km[i] -= h;
        g[i] = (evaluate_energy(m, kp) - evaluate_energy(m, km)) / (2 * h);
    }
    return g;
}

Mat fd_hess(const DispersionModel& m, const Vec& k, double h) {
    Mat H = zero_mat();
    for (int i = 0; i < m.d; ++i)
        for (int j = 0; j < m.d; ++j) {
            Vec kpp = k, kpm = k, kmp = k, kmm = k;
            kpp[i] += h; kpp[j] += h;
            kpm[i] += h; kpm[j] -= h;
            kmp[i] -= h; kmp[j] += h;
            kmm[i] -= h; kmm[j] -= h;
            H[i][j] = (evaluate_energy(m, kpp) - evaluate_energy(m, kpm) -
                       evaluate_energy(m, kmp) + evaluate_energy(m, kmm)) /
                      (4 * h * h);
        }
    return H;
}

}  // namespace

TEST_CASE("evaluate_model matches hand values") {
    auto tb = make_tight_binding_2d(1.0, 0.0, 0.0);
    auto rec = evaluate_model(tb, {kPi, 0, 0, 0});
    CHECK(rec.e == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(rec.grad[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(rec.grad[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(rec.hess[0][0] == doctest::Approx(-2.0));
    CHECK(rec.hess[1][1] == doctest::Approx(2.0));
    CHECK(rec.hess[0][1] == doctest::Approx(0.0));

    auto qf = make_quadratic_form(3, 1, {1, 1, 1, 1}, 2.0);
    auto rq = evaluate_model(qf, {1, 1, 0, 0});
    CHECK(rq.e == doctest::Approx(0.0));
    CHECK(rq.grad[0] == doctest::Approx(2.0));
    CHECK(rq.grad[1] == doctest::Approx(-2.0));
    CHECK(rq.grad[2] == doctest::Approx(0.0));

    auto tbvh = make_tight_binding_2d(1.0, -0.3, 4.0 * (-0.3));
    CHECK(evaluate_energy(tbvh, {kPi, 0, 0, 0}) == doctest::Approx(0.0).epsilon(1e-14));

    CHECK_THROWS_AS(evaluate_model(qf, {5, 0, 0, 0}), std::domain_error);
}

TEST_CASE("analytic derivatives agree with finite differences") {
    std::vector<DispersionModel> models{
        make_tight_binding_2d(1.0, -0.3, 0.2),
        make_tight_binding_3d(1.0, -2.0),
        make_quadratic_form(3, 2, {1.0, 2.0, 0.7, 1}, 1.0),
        small_perturbed_cone(),
    };
    for (const auto& m : models) {
        Rng rng(7);
        for (int trial = 0; trial < 100; ++trial) {
            Vec k = zero_vec();
            // stay in the interior so the FD stencil cannot leave the domain
            for (int i = 0; i < m.d; ++i) k[i] = rng.uniform(-0.3, 0.3);
            auto rec = evaluate_model(m, k);
            Vec g = fd_grad(m, k, 1e-4);
            Mat H = fd_hess(m, k, 1e-4);
            double gscale = std::max(1.0, norm2(rec.grad, m.d));
            for (int i = 0; i < m.d; ++i) {
                CHECK(std::fabs(rec.grad[i] - g[i]) / gscale < 1e-5);
                for (int j = 0; j < m.d; ++j) {
                    CHECK(rec.hess[i][j] == doctest::Approx(rec.hess[j][i]));
                    CHECK(std::fabs(rec.hess[i][j] - H[i][j]) < 1e-4);
                }
            }
        }
    }
}

TEST_CASE("singular point detection") {
    SUBCASE("tight binding 2d at Van Hove filling") {
        auto tb = make_tight_binding_2d(1.0, 0.0, 0.0);
        auto res = find_singular_points(tb);
        REQUIRE(res.points.size() == 2);
        for (const auto& sp : res.points) {
            CHECK(sp.grad_residual < 1e-10);
            CHECK(sp.n_positive == 1);
            CHECK(sp.n_negative == 1);
            bool at_pi0 = tb.distance(sp.location, {kPi, 0, 0, 0}) < 1e-6;
            bool at_0pi = tb.distance(sp.location, {0, kPi, 0, 0}) < 1e-6;
            CHECK((at_pi0 || at_0pi));
        }
    }
    SUBCASE("quadratic cone has a single saddle at the origin") {
        auto res = find_singular_points(cone3d());
        REQUIRE(res.points.size() == 1);
        CHECK(norm2(res.points[0].location, 3) < 1e-8);
        CHECK(res.points[0].n_positive == 1);
        CHECK(res.points[0].n_negative == 2);
    }
    SUBCASE("surface missing the saddles gives an empty list") {
        auto tb = make_tight_binding_2d(1.0, -0.3, 1.0);
        auto res = find_singular_points(tb);
        CHECK(res.points.empty());
        // independent grid scan: |grad| + |e| never both small
        double best = 1e30;
        for (int a = 0; a < 200; ++a)
            for (int b = 0; b < 200; ++b) {
                Vec k{-kPi + (a + 0.5) * 2 * kPi / 200, -kPi + (b + 0.5) * 2 * kPi / 200, 0, 0};
                double e;
                Vec g;
                evaluate_energy_grad(tb, k, e, g);
                best = std::min(best, std::fabs(e) + norm2(g, 2));
            }
        CHECK(best > 1e-2);
    }
}

TEST_CASE("fermi surface sampling") {
    SUBCASE("cone surface mass matches the closed-form area") {
        auto cone = cone3d();
        auto res = sample_fermi_surface(cone, 1'000'000, 42);
        // lateral area of the double cone with slope 1 inside the unit ball
        double exact = std::sqrt(2.0) * kPi;
        CHECK(std::fabs(res.total_weight - exact) / exact < 0.02);

        // independent oracle: triangulated parametric mesh of both nappes
        double mesh = 0.0;
        int nr = 400, nphi = 400;
        double rmax = 1.0 / std::sqrt(2.0);
        for (int s = 0; s < 2; ++s) {
            double sign = s == 0 ? 1.0 : -1.0;
            for (int a = 0; a < nr; ++a)
                for (int b = 0; b < nphi; ++b) {
                    double r0 = a * rmax / nr, r1 = (a + 1) * rmax / nr;
                    double p0 = b * 2 * kPi / nphi, p1 = (b + 1) * 2 * kPi / nphi;
                    auto pt = [&](double r, double p) {
                        return Vec{sign * r, r * std::cos(p), r * std::sin(p), 0};
                    };
                    Vec A = pt(r0, p0), B = pt(r1, p0), C = pt(r1, p1), D = pt(r0, p1);
                    auto tri = [&](Vec u, Vec v, Vec w) {
                        Vec e1 = sub(v, u, 3), e2 = sub(w, u, 3);
                        Vec cr{e1[1] * e2[2] - e1[2] * e2[1], e1[2] * e2[0] - e1[0] * e2[2],
                               e1[0] * e2[1] - e1[1] * e2[0], 0};
                        return 0.5 * norm2(cr, 3);
                    };
                    mesh += tri(A, B, C) + tri(A, C, D);
                }
        }
        CHECK(mesh == doctest::Approx(exact).epsilon(1e-4));
        CHECK(std::fabs(res.total_weight - mesh) / mesh < 0.02);

        for (std::size_t i = 0; i < std::min<std::size_t>(res.samples.size(), 200); ++i) {
            const auto& smp = res.samples[i];
            CHECK(std::fabs(norm2(smp.normal, 3) - 1.0) < 1e-12);
            CHECK(smp.weight > 0.0);
            CHECK(std::fabs(evaluate_energy(cone, smp.point)) < 1e-8);
        }
        // excision flag marks the neighborhood of the apex
        bool any_flagged = false;
        for (const auto& smp : res.samples) {
            if (norm2(smp.point, 3) < 0.05 - 1e-9) CHECK(smp.inside_excision);
            any_flagged = any_flagged || smp.inside_excision;
        }
        CHECK(any_flagged);
    }
    SUBCASE("no real surface raises") {
        auto qf = make_quadratic_form(3, 1, {1, 1, 1, 1}, 1.0);
        qf.mu = 0.0;  // unused by quadratic kind; shift via cubic not possible
        // use a tight-binding model whose band misses zero instead
        auto tb = make_tight_binding_2d(1.0, 0.0, 20.0);
        CHECK_THROWS_AS(sample_fermi_surface(tb, 1000, 1), std::runtime_error);
    }
    SUBCASE("tight binding at Van Hove filling satisfies the surface tolerance") {
        auto tb = make_tight_binding_2d(1.0, 0.0, 0.0);
        auto res = sample_fermi_surface(tb, 50'000, 3);
        REQUIRE(res.samples.size() > 100);
        for (const auto& smp : res.samples)
            CHECK(std::fabs(evaluate_energy(tb, smp.point)) < 1e-8);
    }
}

TEST_CASE("sin_angle") {
    CHECK(sin_angle({1, 0, 0, 0}, {1, 0, 0, 0}, 2) == doctest::Approx(0.0));
    CHECK(sin_angle({1, 0, 0, 0}, {0, 1, 0, 0}, 2) == doctest::Approx(1.0));
    double s = sin_angle({1, 0, 0, 0}, {1, 1, 0, 0}, 2);
    CHECK(s == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(s <= 1.0);  // |a-b|/|a| = 1 here
    CHECK_THROWS_AS(sin_angle({0, 0, 0, 0}, {1, 0, 0, 0}, 2), std::invalid_argument);

    // sin theta(a,b) <= |a-b|/|a| for random nonzero pairs
    Rng rng(11);
    for (int i = 0; i < 10'000; ++i) {
        int d = 2 + static_cast<int>(rng.uniform_index(3));
        Vec a = zero_vec(), b = zero_vec();
        for (int c = 0; c < d; ++c) {
            a[c] = rng.uniform(-1, 1);
            b[c] = rng.uniform(-1, 1);
        }
        if (norm2(a, d) < 1e-3 || norm2(b, d) < 1e-3) continue;
        double lhs = sin_angle(a, b, d);
        double rhs = norm2(sub(a, b, d), d) / norm2(a, d);
        CHECK(lhs <= rhs + 1e-12);
    }
}

TEST_CASE("ray_intersection") {
    SUBCASE("pure cone splits symmetrically") {
        auto cone = make_perturbed_cone(3, 1, {1, 1, 1, 1}, {}, 1.0);
        auto ri = ray_intersection(cone, {1, 0, 0, 0}, {1, 0, 0, 0}, 0.5);
        CHECK(ri.r1 == doctest::Approx(0.5 / std::sqrt(2.0)).epsilon(1e-10));
        CHECK(ri.r2 == doctest::Approx(0.5 / std::sqrt(2.0)).epsilon(1e-10));
    }
    SUBCASE("perturbed cone obeys |r1 - r2| <= g0 r^2") {
        auto cone = small_perturbed_cone();
        Rng rng(5);
        for (int trial = 0; trial < 1000; ++trial) {
            Vec th1{rng.uniform() < 0.5 ? 1.0 : -1.0, 0, 0, 0};  // m = 1: theta1 is +-1
            double phi = rng.uniform(0, 2 * kPi);
            Vec th2{std::cos(phi), std::sin(phi), 0, 0};
            double r = rng.uniform(0.05, 0.3);
            auto ri = ray_intersection(cone, th1, th2, r);
            CHECK(std::fabs(ri.r1 - ri.r2) <= cone.g0 * r * r + 1e-12);
            CHECK(ri.r1 * ri.r1 + ri.r2 * ri.r2 == doctest::Approx(r * r).epsilon(1e-9));
        }
    }
    SUBCASE("independent dense scan agrees with the root finder") {
        auto cone = small_perturbed_cone();
        Vec th1{1, 0, 0, 0};
        Vec th2{std::cos(0.3), std::sin(0.3), 0, 0};
        double r = 0.3;
        auto ri = ray_intersection(cone, th1, th2, r);
        // scan s on a dense grid for the sign change of e(r1, r2)
        double best_s = 0, best_val = 1e30;
        for (int i = 0; i <= 200000; ++i) {
            double s = -r + 2.0 * r * i / 200000;
            double tt = std::sqrt(std::max(0.0, 2 * r * r - s * s));
            double r1 = 0.5 * (s + tt), r2 = 0.5 * (tt - s);
            Vec k{r1 * th1[0], r2 * th2[0], r2 * th2[1], 0};
            double e = evaluate_energy(cone, k);
            if (std::fabs(e) < best_val) {
                best_val = std::fabs(e);
                best_s = s;
            }
        }
        CHECK(ri.r1 - ri.r2 == doctest::Approx(best_s).epsilon(1e-3));
    }
    SUBCASE("ellipsoid exiting the domain is rejected") {
        auto cone = small_perturbed_cone();  // ball radius 0.6
        CHECK_THROWS_AS(ray_intersection(cone, {1, 0, 0, 0}, {1, 0, 0, 0}, 0.7),
                        std::invalid_argument);
    }
}

TEST_CASE("exact cone normals match the analytic formula") {
    auto cone = cone3d();
    SurfaceSampleOptions opt;
    opt.tol.surf_tol = 1e-13;  // drive samples onto F so the comparison is clean
    auto res = sample_fermi_surface(cone, 200'000, 9, opt);
    REQUIRE(res.samples.size() > 100);
    for (const auto& smp : res.samples) {
        if (smp.inside_excision) continue;
        // n is proportional to (theta1, -theta2)/sqrt(2) for e = k1^2-k2^2-k3^2
        double r1 = std::fabs(smp.point[0]);
        double r2 = std::hypot(smp.point[1], smp.point[2]);
        if (r1 < 1e-3 || r2 < 1e-3) continue;
        Vec analytic{smp.point[0] / r1 * (1.0 / std::sqrt(2.0)),
                     -smp.point[1] / r2 * (1.0 / std::sqrt(2.0)),
                     -smp.point[2] / r2 * (1.0 / std::sqrt(2.0)), 0};
        // orientations may differ by the overall sign of grad e
        double dp = dot(smp.normal, analytic, 3);
        double sgn = dp >= 0 ? 1.0 : -1.0;
        for (int i = 0; i < 3; ++i)
            CHECK(std::fabs(smp.normal[i] - sgn * analytic[i]) < 1e-10);
    }
}

TEST_CASE("projected angles stay comparable (fitted constant frozen)") {
    // On the perturbed cone, sin angle(P_i n, P_i a) <= g2 * sin angle(n, a);
    // g2 was fitted once for this model and is frozen here.
    const double g2 = 3.0;
    auto cone = small_perturbed_cone();
    auto res = sample_fermi_surface(cone, 400'000, 21);
    Rng rng(13);
    int checked = 0;
    for (int trial = 0; trial < 20000 && checked < 1000; ++trial) {
        const auto& smp = res.samples[rng.uniform_index(res.samples.size())];
        if (smp.inside_excision) continue;
        Vec a = zero_vec();
        for (int i = 0; i < 3; ++i) a[i] = rng.uniform(-1, 1);
        if (norm2(a, 3) < 1e-2) continue;
        double beta = sin_angle(smp.normal, a, 3);
        if (beta > 0.3) continue;  // lemma regime: nearly parallel directions
        Vec p1n{smp.normal[0], 0, 0, 0}, p1a{a[0], 0, 0, 0};
        Vec p2n{smp.normal[1], smp.normal[2], 0, 0}, p2a{a[1], a[2], 0, 0};
        if (norm2(p1n, 1) < 1e-12 || norm2(p1a, 1) < 1e-12) continue;
        if (norm2(p2n, 2) < 1e-12 || norm2(p2a, 2) < 1e-12) continue;
        CHECK(sin_angle(p1n, p1a, 1) <= g2 * beta + 1e-9);
        CHECK(sin_angle(p2n, p2a, 2) <= g2 * beta + 1e-9);
        ++checked;
    }
    CHECK(checked >= 1000);
}
