#include "fermivol/shellvol.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "fermivol/fitting.hpp"

namespace fermivol {

double ShellSpec::threshold() const { return std::pow(M, j); }

double ShellSpec::ball_radius() const {
    if (!ball) throw std::logic_error("ShellSpec: no ball restriction present");
    return std::pow(M, ball->radius_exponent * j);
}

void ShellSpec::validate() const {
    if (!model) throw std::invalid_argument("ShellSpec: missing model");
    if (!(M > 1.0)) throw std::invalid_argument("ShellSpec: M must be > 1");
    if (j > -1) throw std::invalid_argument("ShellSpec: j must be <= -1");
    if (ball) {
        double eps = ball->radius_exponent;
        if (!(eps > 0.0 && eps < 0.5))
            throw std::invalid_argument("ShellSpec: epsilon must lie in (0, 1/2)");
        if (!model->in_domain(ball->center))
            throw std::invalid_argument("ShellSpec: ball center outside domain");
    }
}

namespace {

struct HitCount {
    std::uint64_t hits = 0;
};

VolumeEstimate finish(double sample_volume, std::uint64_t hits, std::uint64_t n) {
    VolumeEstimate est;
    est.method = VolumeEstimate::Method::mc;
    est.n_samples = n;
    est.hits = hits;
    if (hits == 0) {
        est.value = 0.0;
        est.zero_hits = true;
        // one-sided 95% bound (rule of three) in place of a symmetric error
        est.stderr_ = n > 0 ? 3.0 * sample_volume / static_cast<double>(n) : sample_volume;
        return est;
    }
    double p = static_cast<double>(hits) / static_cast<double>(n);
    est.value = sample_volume * p;
    est.stderr_ = sample_volume * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    return est;
}

Vec uniform_in_box(const Vec& lo, const Vec& hi, int d, Rng& rng) {
    Vec k = zero_vec();
    for (int i = 0; i < d; ++i) k[i] = rng.uniform(lo[i], hi[i]);
    return k;
}

}  // namespace

VolumeEstimate estimate_shell_volume(const ShellSpec& spec, std::uint64_t n_samples,
                                     std::uint64_t seed, Exec exec) {
    if (!spec.model) throw std::invalid_argument("estimate_shell_volume: missing model");
    const DispersionModel& mdl = *spec.model;
    const int d = mdl.d;
    const double thr = spec.threshold();
    const bool is_ball = mdl.domain.shape == Domain::Shape::ball;

    Vec lo = mdl.domain.lo, hi = mdl.domain.hi;
    if (is_ball)
        for (int i = 0; i < d; ++i) {
            lo[i] = mdl.domain.center[i] - mdl.domain.radius;
            hi[i] = mdl.domain.center[i] + mdl.domain.radius;
        }

    const bool restrict_ball = spec.ball.has_value();
    Vec q = restrict_ball ? spec.ball->center : zero_vec();
    double rho = restrict_ball ? spec.ball_radius() : 0.0;

    auto kernel = [&](int, Rng& rng, std::uint64_t n) {
        HitCount part;
        for (std::uint64_t i = 0; i < n; ++i) {
            Vec k = uniform_in_box(lo, hi, d, rng);
            // points of the bounding box outside a ball region are misses;
            // the volume factor below is the box volume accordingly
            if (is_ball && !mdl.in_domain(k)) continue;
            if (restrict_ball && mdl.distance(k, q) > rho) continue;
            if (std::fabs(evaluate_energy(mdl, k)) <= thr) ++part.hits;
        }
        return part;
    };
    auto partials = run_shards<HitCount>(n_samples, seed, exec, kernel);

    std::uint64_t hits = 0;
    for (const auto& p : partials) hits += p.hits;
    // Samples are uniform over the bounding box; misses outside a ball region
    // count as non-hits, so the correct volume factor is the box volume.
    double box_volume = 1.0;
    for (int i = 0; i < d; ++i) box_volume *= hi[i] - lo[i];
    return finish(box_volume, hits, n_samples);
}

VolumeEstimate estimate_ball_shell_volume(const ShellSpec& spec, std::uint64_t n_samples,
                                          std::uint64_t seed, Exec exec) {
    if (!spec.model) throw std::invalid_argument("estimate_ball_shell_volume: missing model");
    if (!spec.ball) throw std::invalid_argument("estimate_ball_shell_volume: ball restriction required");
    const DispersionModel& mdl = *spec.model;
    const int d = mdl.d;
    const double thr = spec.threshold();
    const double rho = spec.ball_radius();
    const Vec q = spec.ball->center;

    Vec lo = zero_vec(), hi = zero_vec();
    for (int i = 0; i < d; ++i) {
        lo[i] = q[i] - rho;
        hi[i] = q[i] + rho;
    }

    auto kernel = [&](int, Rng& rng, std::uint64_t n) {
        HitCount part;
        for (std::uint64_t i = 0; i < n; ++i) {
            Vec k = uniform_in_box(lo, hi, d, rng);
            double r2 = 0.0;
            for (int a = 0; a < d; ++a) r2 += (k[a] - q[a]) * (k[a] - q[a]);
            if (r2 > rho * rho) continue;
            if (!mdl.in_domain(k)) continue;
            if (std::fabs(evaluate_energy(mdl, k)) <= thr) ++part.hits;
        }
        return part;
    };
    auto partials = run_shards<HitCount>(n_samples, seed, exec, kernel);
    std::uint64_t hits = 0;
    for (const auto& p : partials) hits += p.hits;
    double cube_volume = std::pow(2.0 * rho, d);
    return finish(cube_volume, hits, n_samples);
}

VolumeEstimate grid_shell_volume(const DispersionModel& mdl, double M, int j,
                                 int cells_per_axis,
                                 const std::optional<BallRestriction>& ball) {
    const int d = mdl.d;
    const double thr = std::pow(M, j);
    Vec lo = mdl.domain.lo, hi = mdl.domain.hi;
    const bool is_ball = mdl.domain.shape == Domain::Shape::ball;
    if (is_ball)
        for (int i = 0; i < d; ++i) {
            lo[i] = mdl.domain.center[i] - mdl.domain.radius;
            hi[i] = mdl.domain.center[i] + mdl.domain.radius;
        }
    double cell = 1.0;
    for (int i = 0; i < d; ++i) cell *= (hi[i] - lo[i]) / cells_per_axis;

    double rho = 0.0;
    Vec q = zero_vec();
    if (ball) {
        rho = std::pow(M, ball->radius_exponent * j);
        q = ball->center;
    }

    std::uint64_t total = 1, hits = 0;
    for (int i = 0; i < d; ++i) total *= static_cast<std::uint64_t>(cells_per_axis);
#ifdef _OPENMP
#pragma omp parallel for reduction(+ : hits) schedule(static)
#endif
    for (std::int64_t lin = 0; lin < static_cast<std::int64_t>(total); ++lin) {
        std::uint64_t rem = static_cast<std::uint64_t>(lin);
        Vec k = zero_vec();
        for (int i = 0; i < d; ++i) {
            int ci = static_cast<int>(rem % static_cast<std::uint64_t>(cells_per_axis));
            rem /= static_cast<std::uint64_t>(cells_per_axis);
            k[i] = lo[i] + (ci + 0.5) * (hi[i] - lo[i]) / cells_per_axis;
        }
        if (is_ball && !mdl.in_domain(k)) continue;
        if (ball && mdl.distance(k, q) > rho) continue;
        if (std::fabs(evaluate_energy(mdl, k)) <= thr) ++hits;
    }
    VolumeEstimate est;
    est.method = VolumeEstimate::Method::grid;
    est.n_samples = total;
    est.hits = hits;
    est.value = cell * static_cast<double>(hits);
    est.stderr_ = 0.0;
    est.zero_hits = hits == 0;
    return est;
}

ScalingFit fit_scaling_exponent(const std::vector<std::pair<int, VolumeEstimate>>& estimates,
                                double M, ScalingFit::Form form) {
    if (estimates.size() < 4)
        throw std::invalid_argument("fit_scaling_exponent: need a window of >= 4 scales");
    ScalingFit out;
    out.form = form;
    out.j_min = estimates.front().first;
    out.j_max = estimates.front().first;
    for (const auto& [j, est] : estimates) {
        out.j_min = std::min(out.j_min, j);
        out.j_max = std::max(out.j_max, j);
    }
    std::vector<double> x, y;
    if (form == ScalingFit::Form::power) {
        std::ostringstream bad;
        for (const auto& [j, est] : estimates)
            if (est.value <= 0.0) bad << ' ' << j;
        if (!bad.str().empty())
            throw std::invalid_argument("fit_scaling_exponent: nonpositive values at scales" + bad.str());
        for (const auto& [j, est] : estimates) {
            x.push_back(j * std::log(M));
            y.push_back(std::log(est.value));
        }
        LinearFit f = fit_linear(x, y);
        out.alpha = f.slope;
        out.log_coeff = f.intercept;
        out.rss = f.rss;
        out.alpha_se = f.slope_se;
        double mean = 0.0;
        for (double v : y) mean += v;
        mean /= static_cast<double>(y.size());
        out.relative_residual = std::sqrt(f.rss / static_cast<double>(y.size())) /
                                (std::fabs(mean) > 0 ? std::fabs(mean) : 1.0);
    } else {
        for (const auto& [j, est] : estimates) {
            x.push_back(std::fabs(static_cast<double>(j)));
            y.push_back(est.value / std::pow(M, j));
        }
        LinearFit f = fit_linear(x, y);
        out.a = f.intercept;
        out.b = f.slope;
        out.rss = f.rss;
        out.alpha_se = f.slope_se;
        double mean = 0.0;
        for (double v : y) mean += v;
        mean /= static_cast<double>(y.size());
        out.relative_residual =
            std::sqrt(f.rss / static_cast<double>(y.size())) / (std::fabs(mean) > 0 ? std::fabs(mean) : 1.0);
    }
    return out;
}

}  // namespace fermivol
