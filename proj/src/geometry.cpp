#include "fermivol/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fermivol {

namespace {

constexpr double kPi = std::numbers::pi;

double unit_ball_volume(int d) {
    switch (d) {
        case 1: return 2.0;
        case 2: return kPi;
        case 3: return 4.0 * kPi / 3.0;
        case 4: return kPi * kPi / 2.0;
        default: throw std::invalid_argument("unit_ball_volume: d out of range");
    }
}

double wrap_pi(double x) {
    // wrap into [-pi, pi)
    x = std::fmod(x + kPi, 2.0 * kPi);
    if (x < 0) x += 2.0 * kPi;
    return x - kPi;
}

}  // namespace

// ---------------------------------------------------------------------------
// DispersionModel basics
// ---------------------------------------------------------------------------

double DispersionModel::region_volume() const {
    if (domain.shape == Domain::Shape::box) {
        double v = 1.0;
        for (int i = 0; i < d; ++i) v *= domain.hi[i] - domain.lo[i];
        return v;
    }
    double r = domain.radius;
    return unit_ball_volume(d) * std::pow(r, d);
}

bool DispersionModel::in_domain(const Vec& k) const {
    if (domain.shape == Domain::Shape::box) {
        for (int i = 0; i < d; ++i)
            if (k[i] < domain.lo[i] || k[i] > domain.hi[i]) return false;
        return true;
    }
    return norm2(sub(k, domain.center, d), d) <= domain.radius;
}

double DispersionModel::distance(const Vec& a, const Vec& b) const {
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
        double diff = a[i] - b[i];
        if (periodic()) diff = wrap_pi(diff);
        s += diff * diff;
    }
    return std::sqrt(s);
}

double DispersionModel::ellipsoid_radius(const Vec& k) const {
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += lambda[i] * k[i] * k[i];
    return std::sqrt(s);
}

double DispersionModel::grad_sup_bound() const {
    switch (kind) {
        case ModelKind::tight_binding_2d:
            return 2.0 * std::fabs(t) * std::sqrt(2.0) + 4.0 * std::fabs(tprime) * std::sqrt(2.0);
        case ModelKind::tight_binding_3d:
            return 2.0 * std::fabs(t) * std::sqrt(3.0);
        case ModelKind::quadratic_form:
        case ModelKind::perturbed_cone: {
            double lmax = 0.0;
            for (int i = 0; i < d; ++i) lmax = std::max(lmax, lambda[i]);
            double rmax = domain.radius;
            double b = 2.0 * lmax * rmax;
            if (kind == ModelKind::perturbed_cone) b += g1 * lmax * rmax * rmax;
            return b;
        }
        case ModelKind::linear_band:
            return norm2(lin, d);
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// Constructors
// ---------------------------------------------------------------------------

DispersionModel make_tight_binding_2d(double t, double tprime, double mu) {
    DispersionModel mdl;
    mdl.d = 2;
    mdl.kind = ModelKind::tight_binding_2d;
    mdl.t = t;
    mdl.tprime = tprime;
    mdl.mu = mu;
    mdl.domain.shape = Domain::Shape::box;
    for (int i = 0; i < 2; ++i) {
        mdl.domain.lo[i] = -kPi;
        mdl.domain.hi[i] = kPi;
    }
    return mdl;
}

DispersionModel make_tight_binding_3d(double t, double mu) {
    DispersionModel mdl;
    mdl.d = 3;
    mdl.kind = ModelKind::tight_binding_3d;
    mdl.t = t;
    mdl.mu = mu;
    mdl.domain.shape = Domain::Shape::box;
    for (int i = 0; i < 3; ++i) {
        mdl.domain.lo[i] = -kPi;
        mdl.domain.hi[i] = kPi;
    }
    return mdl;
}

DispersionModel make_quadratic_form(int d, int m, const Vec& lambda, double ball_radius) {
    if (d < 2 || d > kMaxDim) throw std::invalid_argument("quadratic_form: d out of range");
    if (m < 1 || m > d - 1) throw std::invalid_argument("quadratic_form: need 1 <= m <= d-1");
    DispersionModel mdl;
    mdl.d = d;
    mdl.kind = ModelKind::quadratic_form;
    mdl.m = m;
    mdl.lambda = lambda;
    for (int i = 0; i < d; ++i)
        if (lambda[i] <= 0) throw std::invalid_argument("quadratic_form: lambda must be > 0");
    mdl.domain.shape = Domain::Shape::ball;
    mdl.domain.radius = ball_radius;
    return mdl;
}

DispersionModel make_perturbed_cone(int d, int m, const Vec& lambda,
                                    const std::vector<CubicTerm>& cubic, double ball_radius) {
    DispersionModel mdl = make_quadratic_form(d, m, lambda, ball_radius);
    mdl.kind = ModelKind::perturbed_cone;
    mdl.cubic = cubic;
    // |k_i| <= R / sqrt(lambda_i) gives coefficient-level bounds
    // |G| <= g0 R^3 and |grad G| <= g1 R^2 valid on the whole domain.
    double g0 = 0.0;
    Vec comp_bound = zero_vec();
    for (const auto& term : cubic) {
        double denom = 1.0;
        for (int a = 0; a < 3; ++a) {
            int i = term.idx[a];
            if (i < 0 || i >= d) throw std::invalid_argument("perturbed_cone: bad cubic index");
            denom *= std::sqrt(lambda[i]);
        }
        g0 += std::fabs(term.coeff) / denom;
        // d/dk_a of the monomial: one factor removed per occurrence of a
        for (int a = 0; a < 3; ++a) {
            int i = term.idx[a];
            double rest = 1.0;
            for (int b = 0; b < 3; ++b)
                if (b != a) rest *= std::sqrt(lambda[term.idx[b]]);
            comp_bound[i] += std::fabs(term.coeff) / rest;
        }
    }
    double g1sq = 0.0;
    for (int i = 0; i < d; ++i) g1sq += comp_bound[i] * comp_bound[i];
    mdl.g0 = g0;
    mdl.g1 = std::sqrt(g1sq);
    return mdl;
}

DispersionModel make_linear_band(int d, const Vec& direction, double box_halfwidth) {
    DispersionModel mdl;
    mdl.d = d;
    mdl.kind = ModelKind::linear_band;
    mdl.lin = direction;
    mdl.domain.shape = Domain::Shape::box;
    for (int i = 0; i < d; ++i) {
        mdl.domain.lo[i] = -box_halfwidth;
        mdl.domain.hi[i] = box_halfwidth;
    }
    return mdl;
}

DispersionModel rotate_model(const DispersionModel& base, const Mat& rot) {
    if (base.periodic())
        throw std::invalid_argument("rotate_model: periodic models keep their lattice frame");
    DispersionModel mdl = base;
    mdl.rotated = true;
    mdl.rot = rot;
    return mdl;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace {

void eval_unrotated(const DispersionModel& mdl, const Vec& k, double* e, Vec* grad, Mat* hess) {
    const int d = mdl.d;
    switch (mdl.kind) {
        case ModelKind::tight_binding_2d: {
            double cx = std::cos(k[0]), sx = std::sin(k[0]);
            double cy = std::cos(k[1]), sy = std::sin(k[1]);
            if (e) *e = -2.0 * mdl.t * (cx + cy) - 4.0 * mdl.tprime * cx * cy - mdl.mu;
            if (grad) {
                (*grad)[0] = 2.0 * mdl.t * sx + 4.0 * mdl.tprime * sx * cy;
                (*grad)[1] = 2.0 * mdl.t * sy + 4.0 * mdl.tprime * cx * sy;
            }
            if (hess) {
                (*hess)[0][0] = 2.0 * mdl.t * cx + 4.0 * mdl.tprime * cx * cy;
                (*hess)[1][1] = 2.0 * mdl.t * cy + 4.0 * mdl.tprime * cx * cy;
                (*hess)[0][1] = (*hess)[1][0] = -4.0 * mdl.tprime * sx * sy;
            }
            return;
        }
        case ModelKind::tight_binding_3d: {
            double c[3], s[3];
            for (int i = 0; i < 3; ++i) {
                c[i] = std::cos(k[i]);
                s[i] = std::sin(k[i]);
            }
            if (e) *e = -2.0 * mdl.t * (c[0] + c[1] + c[2]) - mdl.mu;
            if (grad)
                for (int i = 0; i < 3; ++i) (*grad)[i] = 2.0 * mdl.t * s[i];
            if (hess)
                for (int i = 0; i < 3; ++i) (*hess)[i][i] = 2.0 * mdl.t * c[i];
            return;
        }
        case ModelKind::quadratic_form:
        case ModelKind::perturbed_cone: {
            double val = 0.0;
            for (int i = 0; i < d; ++i) {
                double sgn = i < mdl.m ? 1.0 : -1.0;
                val += sgn * mdl.lambda[i] * k[i] * k[i];
                if (grad) (*grad)[i] = 2.0 * sgn * mdl.lambda[i] * k[i];
                if (hess) (*hess)[i][i] = 2.0 * sgn * mdl.lambda[i];
            }
            if (mdl.kind == ModelKind::perturbed_cone) {
                for (const auto& term : mdl.cubic) {
                    const auto& ix = term.idx;
                    val += term.coeff * k[ix[0]] * k[ix[1]] * k[ix[2]];
                    if (grad) {
                        for (int a = 0; a < 3; ++a) {
                            double rest = term.coeff;
                            for (int b = 0; b < 3; ++b)
                                if (b != a) rest *= k[ix[b]];
                            (*grad)[ix[a]] += rest;
                        }
                    }
                    if (hess) {
                        for (int a = 0; a < 3; ++a)
                            for (int b = 0; b < 3; ++b) {
                                if (a == b) continue;
                                int cthird = 3 - a - b;
                                (*hess)[ix[a]][ix[b]] += term.coeff * k[ix[cthird]];
                            }
                    }
                }
            }
            if (e) *e = val;
            return;
        }
        case ModelKind::linear_band: {
            if (e) *e = dot(mdl.lin, k, d);
            if (grad)
                for (int i = 0; i < d; ++i) (*grad)[i] = mdl.lin[i];
            return;
        }
    }
}

}  // namespace

double evaluate_energy(const DispersionModel& mdl, const Vec& k) {
    double e = 0.0;
    if (mdl.rotated) {
        Vec kr = matTvec(mdl.rot, k, mdl.d);
        eval_unrotated(mdl, kr, &e, nullptr, nullptr);
    } else {
        eval_unrotated(mdl, k, &e, nullptr, nullptr);
    }
    return e;
}

void evaluate_energy_grad(const DispersionModel& mdl, const Vec& k, double& e, Vec& grad) {
    grad = zero_vec();
    if (mdl.rotated) {
        Vec kr = matTvec(mdl.rot, k, mdl.d);
        Vec g0 = zero_vec();
        eval_unrotated(mdl, kr, &e, &g0, nullptr);
        grad = matvec(mdl.rot, g0, mdl.d);
    } else {
        eval_unrotated(mdl, k, &e, &grad, nullptr);
    }
}

EvalRecord evaluate_model(const DispersionModel& mdl, const Vec& k) {
    if (!mdl.in_domain(k)) throw std::domain_error("evaluate_model: k outside model domain");
    EvalRecord rec;
    if (mdl.rotated) {
        Vec kr = matTvec(mdl.rot, k, mdl.d);
        Vec g0 = zero_vec();
        Mat h0 = zero_mat();
        eval_unrotated(mdl, kr, &rec.e, &g0, &h0);
        rec.grad = matvec(mdl.rot, g0, mdl.d);
        rec.hess = congruence(mdl.rot, h0, mdl.d);
    } else {
        eval_unrotated(mdl, k, &rec.e, &rec.grad, &rec.hess);
    }
    return rec;
}

// ---------------------------------------------------------------------------
// Singular points
// ---------------------------------------------------------------------------

SingularPointResult find_singular_points(const DispersionModel& mdl,
                                         const GeometryTolerances& tol) {
    const int d = mdl.d;
    int per_axis = 32;
    while (std::pow(per_axis, d) > 32768.0 + 0.5) --per_axis;

    std::vector<Vec> roots;
    SingularPointResult out;

    Vec lo = mdl.domain.lo, hi = mdl.domain.hi;
    if (mdl.domain.shape == Domain::Shape::ball) {
        for (int i = 0; i < d; ++i) {
            lo[i] = mdl.domain.center[i] - mdl.domain.radius;
            hi[i] = mdl.domain.center[i] + mdl.domain.radius;
        }
    }

    std::vector<int> idx(d, 0);
    bool done = false;
    while (!done) {
        Vec seed = zero_vec();
        for (int i = 0; i < d; ++i)
            seed[i] = lo[i] + (idx[i] + 0.5) * (hi[i] - lo[i]) / per_axis;

        // Newton iteration on grad e = 0
        Vec x = seed;
        bool converged = false;
        for (int it = 0; it < 80; ++it) {
            // evaluate without the domain check; Newton may wander slightly outside
            EvalRecord rec;
            if (mdl.rotated) {
                Vec kr = matTvec(mdl.rot, x, d);
                Vec g0 = zero_vec();
                Mat h0 = zero_mat();
                eval_unrotated(mdl, kr, &rec.e, &g0, &h0);
                rec.grad = matvec(mdl.rot, g0, d);
                rec.hess = congruence(mdl.rot, h0, d);
            } else {
                eval_unrotated(mdl, x, &rec.e, &rec.grad, &rec.hess);
            }
            double gn = norm2(rec.grad, d);
            if (gn < tol.newton_tol) {
                converged = true;
                break;
            }
            Vec step;
            Vec rhs = scale(rec.grad, -1.0, d);
            if (!solve_linear(rec.hess, rhs, d, step)) break;
            double sn = norm2(step, d);
            if (sn > 0.5) {  // damp large steps so trigonometric models stay in their cell
                step = scale(step, 0.5 / sn, d);
            }
            x = add(x, step, d);
            if (sn < 1e-15) {
                double g2;
                Vec gg;
                evaluate_energy_grad(mdl, x, g2, gg);
                converged = norm2(gg, d) < tol.newton_tol;
                break;
            }
        }
        if (converged) {
            if (mdl.periodic()) {
                for (int i = 0; i < d; ++i) x[i] = wrap_pi(x[i]);
                // canonical representative: -pi maps to +... keep [-pi, pi)
            }
            if (mdl.in_domain(x)) {
                double e;
                Vec g;
                evaluate_energy_grad(mdl, x, e, g);
                if (std::fabs(e) < tol.surf_tol) {
                    bool dup = false;
                    for (const auto& r : roots)
                        if (mdl.distance(r, x) < tol.dedup_radius) {
                            dup = true;
                            break;
                        }
                    if (!dup) roots.push_back(x);
                }
            }
        }

        for (int i = 0;; ++i) {
            if (i == d) {
                done = true;
                break;
            }
            if (++idx[i] < per_axis) break;
            idx[i] = 0;
        }
    }

    for (const auto& r : roots) {
        EvalRecord rec = evaluate_model(mdl, r);
        auto ev = sym_eigenvalues(rec.hess, d);
        bool degenerate = false;
        int npos = 0, nneg = 0;
        for (int i = 0; i < d; ++i) {
            if (std::fabs(ev[i]) < tol.hess_tol) degenerate = true;
            else if (ev[i] > 0) ++npos;
            else ++nneg;
        }
        if (degenerate) {
            out.diagnostics.push_back({r, "degenerate hessian"});
            continue;
        }
        if (npos == 0 || nneg == 0) {
            out.diagnostics.push_back({r, "definite hessian"});
            continue;
        }
        SingularPoint sp;
        sp.location = r;
        sp.grad_residual = norm2(rec.grad, d);
        sp.hess_eigenvalues = ev;
        sp.n_positive = npos;
        sp.n_negative = nneg;
        out.points.push_back(sp);
    }
    // deterministic order
    std::sort(out.points.begin(), out.points.end(),
              [d](const SingularPoint& a, const SingularPoint& b) {
                  for (int i = 0; i < d; ++i)
                      if (a.location[i] != b.location[i]) return a.location[i] < b.location[i];
                  return false;
              });
    return out;
}

// ---------------------------------------------------------------------------
// Surface sampling
// ---------------------------------------------------------------------------

namespace {

struct CellGrid {
    int per_axis = 0;
    Vec lo = zero_vec(), hi = zero_vec();
    std::vector<std::uint32_t> flagged;  // linear indices of candidate cells
    double cell_volume = 0.0;
};

// Conservative flags: a cell is kept if |e(center)| could reach h_surf
// anywhere in the cell given the global gradient bound.
CellGrid build_shell_cells(const DispersionModel& mdl, double h_surf) {
    const int d = mdl.d;
    CellGrid grid;
    grid.per_axis = d <= 3 ? 64 : 20;
    if (mdl.domain.shape == Domain::Shape::box) {
        grid.lo = mdl.domain.lo;
        grid.hi = mdl.domain.hi;
    } else {
        for (int i = 0; i < d; ++i) {
            grid.lo[i] = mdl.domain.center[i] - mdl.domain.radius;
            grid.hi[i] = mdl.domain.center[i] + mdl.domain.radius;
        }
    }
    double diag2 = 0.0;
    grid.cell_volume = 1.0;
    Vec width = zero_vec();
    for (int i = 0; i < d; ++i) {
        width[i] = (grid.hi[i] - grid.lo[i]) / grid.per_axis;
        grid.cell_volume *= width[i];
        diag2 += 0.25 * width[i] * width[i];
    }
    double margin = mdl.grad_sup_bound() * std::sqrt(diag2);

    std::uint64_t total = 1;
    for (int i = 0; i < d; ++i) total *= grid.per_axis;
    for (std::uint64_t lin = 0; lin < total; ++lin) {
        std::uint64_t rem = lin;
        Vec c = zero_vec();
        for (int i = 0; i < d; ++i) {
            int ci = static_cast<int>(rem % grid.per_axis);
            rem /= grid.per_axis;
            c[i] = grid.lo[i] + (ci + 0.5) * width[i];
        }
        double e = evaluate_energy(mdl, c);
        if (std::fabs(e) <= h_surf + margin) grid.flagged.push_back(static_cast<std::uint32_t>(lin));
    }
    return grid;
}

Vec cell_point(const CellGrid& grid, int d, std::uint32_t lin, Rng& rng) {
    std::uint64_t rem = lin;
    Vec p = zero_vec();
    for (int i = 0; i < d; ++i) {
        int ci = static_cast<int>(rem % grid.per_axis);
        rem /= grid.per_axis;
        double w = (grid.hi[i] - grid.lo[i]) / grid.per_axis;
        p[i] = grid.lo[i] + (ci + rng.uniform()) * w;
    }
    return p;
}

}  // namespace

SurfaceSampleResult sample_fermi_surface(const DispersionModel& mdl, std::uint64_t n_draws,
                                         std::uint64_t seed, const SurfaceSampleOptions& opt,
                                         Exec exec) {
    const int d = mdl.d;

    // Coarse existence scan: the surface must show up as a sign change or a
    // near-zero on a 32^d grid.
    {
        int per_axis = 32;
        bool neg = false, pos = false, nearzero = false;
        Vec lo = mdl.domain.lo, hi = mdl.domain.hi;
        if (mdl.domain.shape == Domain::Shape::ball)
            for (int i = 0; i < d; ++i) {
                lo[i] = mdl.domain.center[i] - mdl.domain.radius;
                hi[i] = mdl.domain.center[i] + mdl.domain.radius;
            }
        std::uint64_t total = 1;
        for (int i = 0; i < d; ++i) total *= per_axis;
        for (std::uint64_t lin = 0; lin < total; ++lin) {
            std::uint64_t rem = lin;
            Vec c = zero_vec();
            for (int i = 0; i < d; ++i) {
                int ci = static_cast<int>(rem % per_axis);
                rem /= per_axis;
                c[i] = lo[i] + (ci + 0.5) * (hi[i] - lo[i]) / per_axis;
            }
            if (mdl.domain.shape == Domain::Shape::ball && !mdl.in_domain(c)) continue;
            double e = evaluate_energy(mdl, c);
            if (e < 0) neg = true;
            if (e > 0) pos = true;
            if (std::fabs(e) < 1e-6) nearzero = true;
            if ((neg && pos) || nearzero) break;
        }
        if (!((neg && pos) || nearzero))
            throw std::runtime_error("sample_fermi_surface: empty Fermi surface in domain");
    }

    CellGrid grid = build_shell_cells(mdl, opt.h_surf);
    if (grid.flagged.empty())
        throw std::runtime_error("sample_fermi_surface: empty Fermi surface in domain");
    const double proposal_volume = grid.cell_volume * static_cast<double>(grid.flagged.size());

    auto singular = find_singular_points(mdl, opt.tol);

    struct Partial {
        std::vector<SurfaceSample> samples;
        std::uint64_t rejected_grad = 0;
    };

    const bool is_ball = mdl.domain.shape == Domain::Shape::ball;
    auto kernel = [&](int, Rng& rng, std::uint64_t n) {
        Partial part;
        for (std::uint64_t i = 0; i < n; ++i) {
            std::uint32_t cell = grid.flagged[rng.uniform_index(grid.flagged.size())];
            Vec k = cell_point(grid, d, cell, rng);
            if (is_ball && !mdl.in_domain(k)) continue;
            double e;
            Vec g;
            evaluate_energy_grad(mdl, k, e, g);
            if (std::fabs(e) > opt.h_surf) continue;
            // Newton projection along grad e down to |e| < surf_tol
            bool ok = true;
            for (int it = 0; it < 10 && std::fabs(e) >= opt.tol.surf_tol; ++it) {
                double gn2 = dot(g, g, d);
                if (std::sqrt(gn2) < opt.grad_floor) {
                    ok = false;
                    break;
                }
                k = add(k, scale(g, -e / gn2, d), d);
                evaluate_energy_grad(mdl, k, e, g);
            }
            double gn = norm2(g, d);
            if (!ok || gn < opt.grad_floor || std::fabs(e) >= opt.tol.surf_tol) {
                ++part.rejected_grad;
                continue;
            }
            if (is_ball && !mdl.in_domain(k)) continue;
            SurfaceSample smp;
            smp.point = k;
            smp.normal = scale(g, 1.0 / gn, d);
            smp.inv_grad = 1.0 / gn;
            smp.weight = gn;  // finalized below: * proposal_volume / (2 h n_draws)
            for (const auto& sp : singular.points)
                if (mdl.distance(k, sp.location) < opt.excision_radius) {
                    smp.inside_excision = true;
                    break;
                }
            part.samples.push_back(smp);
        }
        return part;
    };

    auto partials = run_shards<Partial>(n_draws, seed, exec, kernel);

    SurfaceSampleResult res;
    res.n_draws = n_draws;
    const double wfactor = proposal_volume / (2.0 * opt.h_surf * static_cast<double>(n_draws));
    for (auto& part : partials) {
        res.n_rejected_grad += part.rejected_grad;
        for (auto& smp : part.samples) {
            smp.weight *= wfactor;
            res.total_weight += smp.weight;
            res.samples.push_back(smp);
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Ray intersection on the perturbed cone
// ---------------------------------------------------------------------------

RayIntersection ray_intersection(const DispersionModel& cone, const Vec& theta1,
                                 const Vec& theta2, double r, double root_tol) {
    if (cone.kind != ModelKind::perturbed_cone && cone.kind != ModelKind::quadratic_form)
        throw std::invalid_argument("ray_intersection: model must be a (perturbed) cone");
    if (r <= 0) throw std::invalid_argument("ray_intersection: r must be > 0");
    const int d = cone.d, m = cone.m;

    double lmin = cone.lambda[0];
    for (int i = 1; i < d; ++i) lmin = std::min(lmin, cone.lambda[i]);
    if (r / std::sqrt(lmin) > cone.domain.radius)
        throw std::invalid_argument("ray_intersection: ellipsoid R = r exits the domain ball");

    // normalize inputs to R1(theta1) = R2(theta2) = 1
    double R1 = 0.0, R2 = 0.0;
    for (int i = 0; i < m; ++i) R1 += cone.lambda[i] * theta1[i] * theta1[i];
    for (int i = m; i < d; ++i) R2 += cone.lambda[i] * theta2[i - m] * theta2[i - m];
    if (R1 <= 0 || R2 <= 0) throw std::invalid_argument("ray_intersection: zero direction");
    R1 = std::sqrt(R1);
    R2 = std::sqrt(R2);

    auto point_at = [&](double s, double* r1p = nullptr, double* r2p = nullptr) {
        double tt = std::sqrt(std::max(0.0, 2.0 * r * r - s * s));
        double r1 = 0.5 * (s + tt), r2 = 0.5 * (tt - s);
        if (r1p) *r1p = r1;
        if (r2p) *r2p = r2;
        Vec k = zero_vec();
        for (int i = 0; i < m; ++i) k[i] = r1 * theta1[i] / R1;
        for (int i = m; i < d; ++i) k[i] = r2 * theta2[i - m] / R2;
        return k;
    };
    auto phi = [&](double s) {
        double r1, r2;
        Vec k = point_at(s, &r1, &r2);
        double G = 0.0;
        for (const auto& term : cone.cubic)
            G += term.coeff * k[term.idx[0]] * k[term.idx[1]] * k[term.idx[2]];
        return s + G / (r1 + r2);
    };

    double a = -r, b = r;
    double fa = phi(a), fb = phi(b);
    if (!(fa <= 0.0 && fb >= 0.0))
        throw std::runtime_error("ray_intersection: no bracket; smallness hypotheses violated");
    // bisection; phi is strictly monotone under the recorded g0, g1 bounds
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (a + b);
        double fm = phi(mid);
        if (std::fabs(fm) < root_tol || b - a < root_tol) {
            a = b = mid;
            break;
        }
        if (fm < 0)
            a = mid;
        else
            b = mid;
    }
    double s = 0.5 * (a + b);
    RayIntersection out;
    Vec k = point_at(s, &out.r1, &out.r2);
    double e = evaluate_energy(cone, k);
    if (std::fabs(e) > 1e-9)
        throw std::runtime_error("ray_intersection: residual exceeds tolerance");
    return out;
}

}  // namespace fermivol
