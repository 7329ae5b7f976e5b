#ifndef FERMIVOL_GEOMETRY_HPP
#define FERMIVOL_GEOMETRY_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fermivol/parallel.hpp"
#include "fermivol/vec.hpp"

namespace fermivol {

// ---------------------------------------------------------------------------
// Dispersion models
// ---------------------------------------------------------------------------

enum class ModelKind {
    tight_binding_2d,  // e = -2t(cos kx + cos ky) - 4t' cos kx cos ky - mu
    tight_binding_3d,  // e = -2t(cos kx + cos ky + cos kz) - mu
    quadratic_form,    // e = sum_i s_i lambda_i k_i^2, s_i = +1 (i < m), -1 (i >= m)
    perturbed_cone,    // quadratic_form plus a homogeneous cubic G(k)
    linear_band        // e = a . k  (flat-band reference used by tests and DOS)
};

struct Domain {
    enum class Shape { box, ball };
    Shape shape = Shape::ball;
    Vec lo = zero_vec(), hi = zero_vec();  // box
    Vec center = zero_vec();               // ball
    double radius = 1.0;                   // ball
};

// One cubic monomial coeff * k[idx0] * k[idx1] * k[idx2].
struct CubicTerm {
    std::array<int, 3> idx{0, 0, 0};
    double coeff = 0.0;
};

struct DispersionModel {
    int d = 2;
    ModelKind kind = ModelKind::quadratic_form;
    Domain domain;

    // tight binding parameters
    double t = 1.0, tprime = 0.0, mu = 0.0;

    // quadratic form / perturbed cone
    int m = 1;                    // count of + signs
    Vec lambda = {1, 1, 1, 1};    // all > 0
    std::vector<CubicTerm> cubic; // perturbation G(k), third-order zero at 0
    double g0 = 0.0, g1 = 0.0;    // |G| <= g0 R^3, |grad G| <= g1 R^2 on R <= sqrt(lambda_max)*radius

    // linear band direction
    Vec lin = {1, 0, 0, 0};

    // Optional orthogonal change of frame: e(k) = e0(rot^T k).
    bool rotated = false;
    Mat rot = zero_mat();

    bool periodic() const {
        return kind == ModelKind::tight_binding_2d || kind == ModelKind::tight_binding_3d;
    }
    double region_volume() const;
    bool in_domain(const Vec& k) const;
    // distance respecting the torus metric for periodic models
    double distance(const Vec& a, const Vec& b) const;
    // R(k) = sqrt(sum lambda_i k_i^2) for quadratic/cone kinds
    double ellipsoid_radius(const Vec& k) const;
    // Upper bound on |grad e| over the domain (used for conservative cell flagging)
    double grad_sup_bound() const;
};

DispersionModel make_tight_binding_2d(double t, double tprime, double mu);
DispersionModel make_tight_binding_3d(double t, double mu);
DispersionModel make_quadratic_form(int d, int m, const Vec& lambda, double ball_radius);
DispersionModel make_perturbed_cone(int d, int m, const Vec& lambda,
                                    const std::vector<CubicTerm>& cubic, double ball_radius);
DispersionModel make_linear_band(int d, const Vec& direction, double box_halfwidth);
// e(k) = e0(R^T k) with R orthogonal; grad and hess transform covariantly.
DispersionModel rotate_model(const DispersionModel& base, const Mat& rot);

struct EvalRecord {
    double e = 0.0;
    Vec grad = zero_vec();
    Mat hess = zero_mat();
};

// Analytic value, gradient and Hessian. Throws std::domain_error if k is
// outside the model domain.
EvalRecord evaluate_model(const DispersionModel& model, const Vec& k);
// Unchecked fast path used by the samplers.
double evaluate_energy(const DispersionModel& model, const Vec& k);
void evaluate_energy_grad(const DispersionModel& model, const Vec& k, double& e, Vec& grad);

// ---------------------------------------------------------------------------
// Singular points
// ---------------------------------------------------------------------------

struct GeometryTolerances {
    double newton_tol = 1e-10;   // |grad e| at a reported root
    double surf_tol = 1e-8;      // |e| at surface points
    double hess_tol = 1e-6;      // nondegeneracy floor for Hessian eigenvalues
    double dedup_radius = 1e-4;  // merge radius for repeated roots
};

struct SingularPoint {
    Vec location = zero_vec();
    double grad_residual = 0.0;
    std::array<double, kMaxDim> hess_eigenvalues{};  // sorted ascending
    int n_positive = 0, n_negative = 0;
};

struct SingularPointDiagnostic {
    Vec location = zero_vec();
    std::string reason;  // "degenerate hessian" or "definite hessian"
};

struct SingularPointResult {
    std::vector<SingularPoint> points;
    std::vector<SingularPointDiagnostic> diagnostics;
};

// Multi-start Newton on grad e = 0 from a 32^d seed grid (capped at 32768
// seeds), filtered to the Fermi surface by |e| < surf_tol.
SingularPointResult find_singular_points(const DispersionModel& model,
                                         const GeometryTolerances& tol = {});

// ---------------------------------------------------------------------------
// Fermi-surface sampling
// ---------------------------------------------------------------------------

struct SurfaceSample {
    Vec point = zero_vec();    // omega on F, |e| < surf_tol
    Vec normal = zero_vec();   // grad e / |grad e|
    double inv_grad = 0.0;     // coarea density 1/|grad e|
    double weight = 0.0;       // quadrature weight: sum of weights over A -> vol_{d-1}(A)
    bool inside_excision = false;
};

struct SurfaceSampleOptions {
    double h_surf = 1e-3;       // half-thickness of the rejection shell
    double grad_floor = 1e-7;   // reject candidates with |grad e| below this
    double excision_radius = 0.05;
    GeometryTolerances tol;
};

struct SurfaceSampleResult {
    std::vector<SurfaceSample> samples;
    std::uint64_t n_draws = 0;          // uniform draws spent (the budget)
    std::uint64_t n_rejected_grad = 0;  // candidates lost to the gradient floor
    double total_weight = 0.0;          // estimate of vol_{d-1}(F) within the domain
};

// Draws n_draws uniform points from a conservative superset of the shell
// {|e| <= h_surf} (precomputed cell flags), Newton-projects hits onto F and
// attaches coarea quadrature weights. Throws std::runtime_error if a coarse
// scan finds no Fermi surface in the domain.
SurfaceSampleResult sample_fermi_surface(const DispersionModel& model,
                                         std::uint64_t n_draws, std::uint64_t seed,
                                         const SurfaceSampleOptions& opt = {},
                                         Exec exec = Exec::openmp);

// ---------------------------------------------------------------------------
// Ray geometry on the perturbed cone
// ---------------------------------------------------------------------------

struct RayIntersection {
    double r1 = 0.0, r2 = 0.0;
};

// For theta1 with R1(theta1) = 1 on the first m coordinates and theta2 with
// R2(theta2) = 1 on the last d-m, finds the unique (r1, r2) with r1,r2 >= 0,
// r1^2 + r2^2 = r^2 and e(r1 theta1, r2 theta2) = 0. Solved by monotone
// root finding in s = r1 - r2.
RayIntersection ray_intersection(const DispersionModel& cone, const Vec& theta1,
                                 const Vec& theta2, double r, double root_tol = 1e-13);

}  // namespace fermivol

#endif
