#ifndef FERMIVOL_SHELLVOL_HPP
#define FERMIVOL_SHELLVOL_HPP

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "fermivol/geometry.hpp"
#include "fermivol/parallel.hpp"

namespace fermivol {

struct BallRestriction {
    Vec center = zero_vec();
    double radius_exponent = 0.25;  // epsilon in (0, 1/2): radius M^{eps j}
};

struct ShellSpec {
    const DispersionModel* model = nullptr;
    double M = 2.0;
    int j = -1;
    std::optional<BallRestriction> ball;

    double threshold() const;    // M^j
    double ball_radius() const;  // M^{eps j}
    // Enforces the experiment-level invariants M > 1, j <= -1 and
    // eps in (0, 1/2); the estimators themselves accept any j.
    void validate() const;
};

struct VolumeEstimate {
    double value = 0.0;
    double stderr_ = 0.0;
    std::uint64_t n_samples = 0;
    std::uint64_t hits = 0;
    enum class Method { mc, grid } method = Method::mc;
    bool zero_hits = false;  // value 0 with one-sided confidence, never a division by zero
};

// Uniform sampling over the model region; value = region_volume * hits / n.
VolumeEstimate estimate_shell_volume(const ShellSpec& spec, std::uint64_t n_samples,
                                     std::uint64_t seed, Exec exec = Exec::openmp);

// Importance variant for the ball-restricted volume: points are drawn
// uniformly from the ball |k - q| <= M^{eps j} instead of the whole region.
VolumeEstimate estimate_ball_shell_volume(const ShellSpec& spec, std::uint64_t n_samples,
                                          std::uint64_t seed, Exec exec = Exec::openmp);

// Deterministic midpoint-rule oracle on a cells_per_axis^d grid.
VolumeEstimate grid_shell_volume(const DispersionModel& model, double M, int j,
                                 int cells_per_axis,
                                 const std::optional<BallRestriction>& ball = {});

struct ScalingFit {
    enum class Form { power, log_corrected } form = Form::power;
    int j_min = 0, j_max = 0;
    // power: value ~ C M^{alpha j};  log_corrected: value / M^j ~ a + b |j|
    double alpha = 0.0, log_coeff = 0.0;  // power form: exponent and log C
    double a = 0.0, b = 0.0;              // log-corrected form
    double rss = 0.0;
    double relative_residual = 0.0;  // rms residual / mean of the fitted ordinate
    double alpha_se = 0.0;
};

ScalingFit fit_scaling_exponent(const std::vector<std::pair<int, VolumeEstimate>>& estimates,
                                double M, ScalingFit::Form form);

}  // namespace fermivol

#endif
