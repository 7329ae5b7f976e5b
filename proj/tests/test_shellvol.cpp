#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fermivol/shellvol.hpp"

using namespace fermivol;

namespace {

DispersionModel saddle2d() {
    auto m = make_quadratic_form(2, 1, {1, 1, 1, 1}, 1.0);
    m.domain.shape = Domain::Shape::box;
    m.domain.lo = {-1, -1, 0, 0};
    m.domain.hi = {1, 1, 0, 0};
    return m;
}

DispersionModel cone3d() { return make_quadratic_form(3, 1, {1, 1, 1, 1}, 1.0); }

}  // namespace

// Frozen oracle, computed independently before this implementation existed:
// midpoint 4096^2 grid on [-1,1]^2, area{|x^2-y^2| <= 2^-7} = 474432 cells.
TEST_CASE("grid oracle reproduces the frozen midpoint value") {
    auto m = saddle2d();
    auto g7 = grid_shell_volume(m, 2.0, -7, 4096);
    CHECK(g7.hits == 474432);
    CHECK(g7.value == doctest::Approx(0.1131134033203125).epsilon(1e-14));
    auto g8 = grid_shell_volume(m, 2.0, -8, 4096);
    CHECK(g8.hits == 260256);
    CHECK(g8.value == doctest::Approx(0.06204986572265625).epsilon(1e-14));
}

TEST_CASE("shell covering the whole box returns the box volume exactly") {
    auto m = saddle2d();
    ShellSpec spec{&m, 2.0, 1, {}};  // M^j = 2 >= max|e| = 1
    auto est = estimate_shell_volume(spec, 100'000, 1);
    CHECK(est.value == doctest::Approx(4.0));
    CHECK(est.stderr_ == doctest::Approx(0.0));
    CHECK(est.hits == est.n_samples);
}

TEST_CASE("MC estimate agrees with the dense grid oracle within 3 sigma") {
    auto m = saddle2d();
    ShellSpec spec{&m, 2.0, -7, {}};
    auto mc = estimate_shell_volume(spec, 4'000'000, 77);
    double oracle = 0.1131134033203125;
    CHECK(std::fabs(mc.value - oracle) < 3.0 * mc.stderr_);
}

TEST_CASE("d = 3 cone shells halve with each scale") {
    auto m = cone3d();
    ShellSpec s8{&m, 2.0, -8, {}};
    ShellSpec s7{&m, 2.0, -7, {}};
    auto v8 = estimate_shell_volume(s8, 4'000'000, 5);
    auto v7 = estimate_shell_volume(s7, 4'000'000, 6);
    CHECK(v8.value / v7.value == doctest::Approx(0.5).epsilon(0.05 / 0.5));
}

TEST_CASE("shells nest: volumes nonincreasing in |j|") {
    auto m = saddle2d();
    double prev = 1e30;
    for (int j = -5; j >= -10; --j) {
        auto g = grid_shell_volume(m, 2.0, j, 1024);
        CHECK(g.value <= prev + 1e-12);
        prev = g.value;
    }
    // and for MC estimates up to 3 combined standard errors
    prev = 1e30;
    double prev_se = 0.0;
    for (int j = -5; j >= -9; --j) {
        ShellSpec spec{&m, 2.0, j, {}};
        auto est = estimate_shell_volume(spec, 500'000, 100 + static_cast<unsigned>(-j));
        CHECK(est.value <= prev + 3.0 * std::sqrt(est.stderr_ * est.stderr_ + prev_se * prev_se));
        prev = est.value;
        prev_se = est.stderr_;
    }
}

TEST_CASE("estimator is unbiased across seeded replications") {
    // linear band: vol{|k1| <= 2^-4} in [-1,1]^2 is exactly 2^-3 * 2 = 0.25
    auto m = make_linear_band(2, {1, 0, 0, 0}, 1.0);
    ShellSpec spec{&m, 2.0, -4, {}};
    double exact = 0.25;
    int within = 0;
    for (int rep = 0; rep < 100; ++rep) {
        auto est = estimate_shell_volume(spec, 40'000, 1000 + rep);
        if (std::fabs(est.value - exact) <= 3.0 * est.stderr_) ++within;
    }
    CHECK(within >= 99);
}

TEST_CASE("zero hits is reported without dividing by zero") {
    auto m = saddle2d();
    ShellSpec spec{&m, 2.0, -40, {}};  // threshold below anything a small sample hits
    BallRestriction ball;
    ball.center = {0.9, 0.0, 0, 0};  // far from F near the shell scale
    ball.radius_exponent = 0.45;
    spec.ball = ball;
    auto est = estimate_ball_shell_volume(spec, 1000, 3);
    CHECK(est.value == 0.0);
    CHECK(est.zero_hits);
    CHECK(est.stderr_ > 0.0);
}

TEST_CASE("ball-restricted volumes at the saddle") {
    SUBCASE("d = 3: fitted prefactor of M^{j(1+(d-2)eps)} is stable") {
        auto m = cone3d();
        std::vector<double> coeffs;
        for (int j = -10; j <= -6; ++j) {
            ShellSpec spec{&m, 2.0, j, BallRestriction{zero_vec(), 0.25}};
            auto est = estimate_ball_shell_volume(spec, 2'000'000, 40 + j);
            double c = est.value / std::pow(2.0, j * (1.0 + 0.25));
            coeffs.push_back(c);
        }
        double cmin = coeffs[0], cmax = coeffs[0];
        for (double c : coeffs) {
            cmin = std::min(cmin, c);
            cmax = std::max(cmax, c);
        }
        double mid = 0.5 * (cmin + cmax);
        CHECK((cmax - mid) / mid < 0.25);
    }
    SUBCASE("d = 2: value/M^j grows affinely in |j|") {
        auto m = saddle2d();
        std::vector<std::pair<int, VolumeEstimate>> ests;
        for (int j = -12; j <= -6; ++j) {
            ShellSpec spec{&m, 2.0, j, BallRestriction{zero_vec(), 0.25}};
            ests.push_back({j, estimate_ball_shell_volume(spec, 1'000'000, 60 - j)});
        }
        auto fit = fit_scaling_exponent(ests, 2.0, ScalingFit::Form::log_corrected);
        CHECK(fit.b > 0.0);
        CHECK(fit.relative_residual < 0.05);
    }
    SUBCASE("ball outside the shell gives zero") {
        auto m = cone3d();
        ShellSpec spec{&m, 2.0, -10, BallRestriction{{0.0, 0.9, 0.0, 0.0}, 0.45}};
        auto est = estimate_ball_shell_volume(spec, 50'000, 2);
        CHECK(est.value == 0.0);
    }
}

TEST_CASE("fit_scaling_exponent on synthetic data") {
    SUBCASE("exact power law") {
        std::vector<std::pair<int, VolumeEstimate>> data;
        for (int j = -10; j <= -4; ++j) {
            VolumeEstimate e;
            e.value = 3.0 * std::pow(2.0, j);
            data.push_back({j, e});
        }
        auto fit = fit_scaling_exponent(data, 2.0, ScalingFit::Form::power);
        CHECK(fit.alpha == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(fit.rss == doctest::Approx(0.0));
        CHECK(std::exp(fit.log_coeff) == doctest::Approx(3.0));
    }
    SUBCASE("exact log-corrected form") {
        std::vector<std::pair<int, VolumeEstimate>> data;
        for (int j = -10; j <= -4; ++j) {
            VolumeEstimate e;
            e.value = std::pow(2.0, j) * (2.0 + 0.5 * std::fabs(j));
            data.push_back({j, e});
        }
        auto fit = fit_scaling_exponent(data, 2.0, ScalingFit::Form::log_corrected);
        CHECK(fit.a == doctest::Approx(2.0).epsilon(1e-10));
        CHECK(fit.b == doctest::Approx(0.5).epsilon(1e-10));
    }
    SUBCASE("nonpositive values are rejected with the offending scales") {
        std::vector<std::pair<int, VolumeEstimate>> data;
        for (int j = -8; j <= -4; ++j) {
            VolumeEstimate e;
            e.value = j == -6 ? 0.0 : std::pow(2.0, j);
            data.push_back({j, e});
        }
        CHECK_THROWS_WITH_AS(fit_scaling_exponent(data, 2.0, ScalingFit::Form::power),
                             doctest::Contains("-6"), std::invalid_argument);
    }
    SUBCASE("fewer than four scales is an error") {
        std::vector<std::pair<int, VolumeEstimate>> data(3, {-5, VolumeEstimate{}});
        CHECK_THROWS_AS(fit_scaling_exponent(data, 2.0, ScalingFit::Form::power),
                        std::invalid_argument);
    }
}

TEST_CASE("spec validation") {
    auto m = saddle2d();
    ShellSpec bad{&m, 1.0, -3, {}};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    ShellSpec badj{&m, 2.0, 0, {}};
    CHECK_THROWS_AS(badj.validate(), std::invalid_argument);
    ShellSpec badeps{&m, 2.0, -3, BallRestriction{zero_vec(), 0.6}};
    CHECK_THROWS_AS(badeps.validate(), std::invalid_argument);
    ShellSpec ok{&m, 2.0, -3, BallRestriction{zero_vec(), 0.25}};
    CHECK_NOTHROW(ok.validate());
}
