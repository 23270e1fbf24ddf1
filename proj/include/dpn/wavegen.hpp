#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dpn/errors.hpp"
#include "dpn/prng.hpp"
#include "dpn/tensor.hpp"

namespace dpn {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// ---------------------------------------------------------------------------
// Spatial Fourier basis
// ---------------------------------------------------------------------------

inline std::size_t basis_size(std::size_t modes) noexcept { return 2 * modes + 1; }

/// [1, cos(2πx), sin(2πx), ..., cos(2Mπx), sin(2Mπx)]
inline std::vector<double> fourier_basis(double x, std::size_t modes) {
    std::vector<double> out(basis_size(modes));
    out[0] = 1.0;
    for (std::size_t m = 1; m <= modes; ++m) {
        const double arg = kTwoPi * static_cast<double>(m) * x;
        out[2 * m - 1] = std::cos(arg);
        out[2 * m] = std::sin(arg);
    }
    return out;
}

/// Row k holds fourier_basis(xs[k], modes).
inline Tensor fourier_basis_matrix(std::span<const double> xs, std::size_t modes) {
    if (xs.empty()) throw DimensionError("fourier_basis_matrix: no sample points");
    Tensor out({xs.size(), basis_size(modes)});
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const auto row = fourier_basis(xs[k], modes);
        std::copy(row.begin(), row.end(), out.row(k).begin());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Grids, signals, fields
// ---------------------------------------------------------------------------

/// Times t_j = j·h, j = 1..n_t, h = t_end / n_t, plus spatial sample points.
struct SpaceTimeGrid {
    double t_end = 1.0;
    std::size_t n_t = 400;
    std::vector<double> x;

    double step() const noexcept { return t_end / static_cast<double>(n_t); }
    // Zero-based index j maps to t_{j+1}.
    double time(std::size_t j) const noexcept { return static_cast<double>(j + 1) * step(); }
    std::vector<double> times() const {
        std::vector<double> t(n_t);
        for (std::size_t j = 0; j < n_t; ++j) t[j] = time(j);
        return t;
    }
    std::size_t n_x() const noexcept { return x.size(); }
};

inline std::vector<double> uniform_points(double lo, double hi, std::size_t n) {
    if (n == 0) throw ConfigError("uniform_points: need at least one point");
    std::vector<double> x(n);
    if (n == 1) {
        x[0] = lo;
        return x;
    }
    const double dx = (hi - lo) / static_cast<double>(n - 1);
    for (std::size_t k = 0; k < n; ++k) x[k] = lo + static_cast<double>(k) * dx;
    return x;
}

/// Source coefficients sampled in time: coeffs is (rows, n_t), column j at t_{j+1}.
struct RhsSignal {
    std::size_t n_modes = 0;
    Tensor coeffs;

    std::size_t rows() const { return coeffs.dim(0); }
    std::size_t n_t() const { return coeffs.dim(1); }
};

/// Solution samples values(k, j) = u(x_k, t_{j+1}) and the state at t = 0.
struct WaveField {
    SpaceTimeGrid grid;
    Tensor values;
    std::vector<double> initial_u;
    std::vector<double> initial_v;
};

// ---------------------------------------------------------------------------
// d'Alembert / Duhamel solution by quadrature
// ---------------------------------------------------------------------------

using Fn1 = std::function<double(double)>;
using Fn2 = std::function<double(double, double)>;

namespace detail {

inline double trapezoid(const Fn1& g, double a, double b, std::size_t n) {
    if (b == a) return 0.0;
    const double h = (b - a) / static_cast<double>(n);
    double s = 0.5 * (g(a) + g(b));
    for (std::size_t i = 1; i < n; ++i) s += g(a + static_cast<double>(i) * h);
    return s * h;
}

}  // namespace detail

/// u(x,t) = ½(u0(x−ct) + u0(x+ct)) + 1/(2c)∫_{x−ct}^{x+ct} v0
///        + 1/(2c)∫_0^t ∫_{x−c(t−τ)}^{x+c(t−τ)} f(ξ,τ) dξ dτ,
/// every integral by composite trapezoid with quad_n intervals per axis.
inline double dalembert_solution(const Fn1& u0, const Fn1& v0, const Fn2& f, double c, double x, double t,
                                 std::size_t quad_n) {
    if (quad_n < 2) throw ConfigError("dalembert_solution: quad_n must be at least 2");
    if (!(c > 0.0)) throw ConfigError("dalembert_solution: wave speed must be positive");
    if (t < 0.0) throw ConfigError("dalembert_solution: t must be non-negative");
    double u = 0.5 * (u0(x - c * t) + u0(x + c * t));
    if (t == 0.0) return u;
    u += detail::trapezoid(v0, x - c * t, x + c * t, quad_n) / (2.0 * c);
    const auto inner = [&](double tau) {
        const double half = c * (t - tau);
        return detail::trapezoid([&](double xi) { return f(xi, tau); }, x - half, x + half, quad_n);
    };
    u += detail::trapezoid(inner, 0.0, t, quad_n) / (2.0 * c);
    return u;
}

// ---------------------------------------------------------------------------
// Case 1: constant speed, separable Fourier source
// ---------------------------------------------------------------------------

/// f = Σ_{i=0}^{2} c_i t^i + Σ_{i=1}^{N} 2(c²−1)i²π² (a_i cos(2iπt)cos(2iπx) + b_i sin(2iπt)sin(2iπx))
struct Case1Record {
    std::vector<double> a;  // a_1..a_N
    std::vector<double> b;  // b_1..b_N
    std::array<double, 3> c{};
    double wave_speed = 2.0;

    std::size_t modes() const noexcept { return a.size(); }
};

/// Draws a_i, b_i for i = 1..modes (interleaved), then c_0, c_1, c_2, all on [0, 1).
inline Case1Record sample_case1(Prng& rng, std::size_t modes, double wave_speed = 2.0) {
    Case1Record r;
    r.wave_speed = wave_speed;
    r.a.resize(modes);
    r.b.resize(modes);
    for (std::size_t i = 0; i < modes; ++i) {
        r.a[i] = rng.uniform();
        r.b[i] = rng.uniform();
    }
    for (double& ci : r.c) ci = rng.uniform();
    return r;
}

inline double case1_source_scale(std::size_t i, double wave_speed) {
    const double di = static_cast<double>(i);
    return 2.0 * (wave_speed * wave_speed - 1.0) * di * di * kPi * kPi;
}

inline double case1_rhs(const Case1Record& r, double x, double t) {
    double f = r.c[0] + r.c[1] * t + r.c[2] * t * t;
    for (std::size_t i = 1; i <= r.modes(); ++i) {
        const double k = kTwoPi * static_cast<double>(i);
        f += case1_source_scale(i, r.wave_speed) *
             (r.a[i - 1] * std::cos(k * t) * std::cos(k * x) + r.b[i - 1] * std::sin(k * t) * std::sin(k * x));
    }
    return f;
}

/// Rows [a_0(t), a_1(t), b_1(t), ..., a_N(t), b_N(t)]: the source's
/// coefficients against fourier_basis(x, N).
inline RhsSignal case1_signal(const Case1Record& r, const SpaceTimeGrid& grid) {
    const std::size_t n = r.modes();
    RhsSignal s{n, Tensor({basis_size(n), grid.n_t})};
    for (std::size_t j = 0; j < grid.n_t; ++j) {
        const double t = grid.time(j);
        s.coeffs(0, j) = r.c[0] + r.c[1] * t + r.c[2] * t * t;
        for (std::size_t i = 1; i <= n; ++i) {
            const double k = kTwoPi * static_cast<double>(i);
            const double scale = case1_source_scale(i, r.wave_speed);
            s.coeffs(2 * i - 1, j) = scale * r.a[i - 1] * std::cos(k * t);
            s.coeffs(2 * i, j) = scale * r.b[i - 1] * std::sin(k * t);
        }
    }
    return s;
}

/// Per-basis amplitudes of u and u_t at time t for zero initial data.
struct ModalState {
    std::vector<double> u;
    std::vector<double> v;
};

/// Duhamel integral A(t) = (1/ω)∫_0^t sin(ω(t−τ)) F(τ) dτ evaluated in closed
/// form for every mode (ω = c·2iπ, F = the mode's source row).
inline ModalState case1_modal_state(const Case1Record& r, double t) {
    const std::size_t n = r.modes();
    ModalState s{std::vector<double>(basis_size(n)), std::vector<double>(basis_size(n))};
    const auto& c = r.c;
    s.u[0] = c[0] * t * t / 2.0 + c[1] * t * t * t / 6.0 + c[2] * t * t * t * t / 12.0;
    s.v[0] = c[0] * t + c[1] * t * t / 2.0 + c[2] * t * t * t / 3.0;
    for (std::size_t i = 1; i <= n; ++i) {
        const double k = kTwoPi * static_cast<double>(i);
        const double w = r.wave_speed * k;
        const double scale = case1_source_scale(i, r.wave_speed);
        const double ba = scale * r.a[i - 1];
        const double bb = scale * r.b[i - 1];
        double ua = 0.0, va = 0.0, ub = 0.0, vb = 0.0;
        if (ba != 0.0 || bb != 0.0) {
            const double gap = w * w - k * k;
            if (gap == 0.0) throw ConfigError("case 1: resonant forcing (wave speed 1) with nonzero source");
            ua = ba * (std::cos(k * t) - std::cos(w * t)) / gap;
            va = ba * (w * std::sin(w * t) - k * std::sin(k * t)) / gap;
            ub = bb * (std::sin(k * t) - (k / w) * std::sin(w * t)) / gap;
            vb = bb * k * (std::cos(k * t) - std::cos(w * t)) / gap;
        }
        s.u[2 * i - 1] = ua;
        s.v[2 * i - 1] = va;
        s.u[2 * i] = ub;
        s.v[2 * i] = vb;
    }
    return s;
}

/// (u, u_t) at points xs and time t.
inline std::pair<std::vector<double>, std::vector<double>> case1_state(const Case1Record& r,
                                                                      std::span<const double> xs, double t) {
    const ModalState m = case1_modal_state(r, t);
    std::vector<double> u(xs.size(), 0.0), v(xs.size(), 0.0);
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const auto basis = fourier_basis(xs[k], r.modes());
        for (std::size_t n = 0; n < basis.size(); ++n) {
            u[k] += basis[n] * m.u[n];
            v[k] += basis[n] * m.v[n];
        }
    }
    return {std::move(u), std::move(v)};
}

/// Source response with u_0 = v_0 = 0, assembled from the modal Duhamel amplitudes.
inline WaveField generate_case1_field(const Case1Record& r, const SpaceTimeGrid& grid) {
    const Tensor basis = fourier_basis_matrix(grid.x, r.modes());
    Tensor amplitudes({grid.n_t, basis_size(r.modes())});
    for (std::size_t j = 0; j < grid.n_t; ++j) {
        const ModalState m = case1_modal_state(r, grid.time(j));
        std::copy(m.u.begin(), m.u.end(), amplitudes.row(j).begin());
    }
    WaveField field;
    field.grid = grid;
    field.values = matmul_nt(basis, amplitudes);
    field.initial_u.assign(grid.n_x(), 0.0);
    field.initial_v.assign(grid.n_x(), 0.0);
    return field;
}

// ---------------------------------------------------------------------------
// Case 2: variable speed c(x,t)² = cos(2nπ(t+x)) + 1, u = Σ c_m cos(2mπ(t+x))
// ---------------------------------------------------------------------------

struct Case2Record {
    std::vector<double> c;  // c_1..c_M
    int speed_mode = 10;

    std::size_t modes() const noexcept { return c.size(); }
};

inline Case2Record sample_case2(Prng& rng, std::size_t modes, int speed_mode) {
    if (modes < 1) throw ConfigError("case 2 needs at least one solution mode");
    if (speed_mode < 1) throw ConfigError("case 2 speed mode must be at least 1");
    Case2Record r;
    r.speed_mode = speed_mode;
    r.c.resize(modes);
    for (double& cm : r.c) cm = rng.uniform();
    return r;
}

inline double case2_speed_squared(int speed_mode, double x, double t) {
    return std::cos(kTwoPi * speed_mode * (t + x)) + 1.0;
}

inline double case2_solution(const Case2Record& r, double x, double t) {
    double u = 0.0;
    for (std::size_t m = 1; m <= r.modes(); ++m) u += r.c[m - 1] * std::cos(kTwoPi * static_cast<double>(m) * (t + x));
    return u;
}

inline double case2_velocity(const Case2Record& r, double x, double t) {
    double v = 0.0;
    for (std::size_t m = 1; m <= r.modes(); ++m) {
        const double k = kTwoPi * static_cast<double>(m);
        v -= r.c[m - 1] * k * std::sin(k * (t + x));
    }
    return v;
}

/// `printed` drops the ½ that the product-to-sum expansion of
/// cos(2nπs)·cos(2mπs) produces. Only `verified` satisfies the PDE; the other
/// form is kept so the residual tests can demonstrate the difference.
enum class Case2RhsForm { verified, printed };

inline double case2_rhs_factor(Case2RhsForm form) { return form == Case2RhsForm::verified ? 0.5 : 1.0; }

/// f = Σ_m c_m (2mπ)² · factor · [cos(2π(m+n)t)cos(2π(m+n)x) − sin(2π(m+n)t)sin(2π(m+n)x)
///                                + cos(2π(n−m)t)cos(2π(n−m)x) − sin(2π(n−m)t)sin(2π(n−m)x)]
inline double case2_rhs(const Case2Record& r, double x, double t, Case2RhsForm form = Case2RhsForm::verified) {
    const double factor = case2_rhs_factor(form);
    const double n = r.speed_mode;
    double f = 0.0;
    for (std::size_t mi = 1; mi <= r.modes(); ++mi) {
        const double m = static_cast<double>(mi);
        const double amp = r.c[mi - 1] * (kTwoPi * m) * (kTwoPi * m) * factor;
        const double ks = kTwoPi * (m + n);
        const double kd = kTwoPi * (n - m);
        f += amp * (std::cos(ks * t) * std::cos(ks * x) - std::sin(ks * t) * std::sin(ks * x) +
                    std::cos(kd * t) * std::cos(kd * x) - std::sin(kd * t) * std::sin(kd * x));
    }
    return f;
}

/// 4M rows; for mode m the rows are the time coefficients of
/// cos(2π(m+n)x), sin(2π(m+n)x), cos(2π(n−m)x), sin(2π(n−m)x).
inline RhsSignal case2_signal(const Case2Record& r, const SpaceTimeGrid& grid,
                              Case2RhsForm form = Case2RhsForm::verified) {
    const double factor = case2_rhs_factor(form);
    const double n = r.speed_mode;
    RhsSignal s{r.modes(), Tensor({4 * r.modes(), grid.n_t})};
    for (std::size_t j = 0; j < grid.n_t; ++j) {
        const double t = grid.time(j);
        for (std::size_t mi = 1; mi <= r.modes(); ++mi) {
            const double m = static_cast<double>(mi);
            const double amp = r.c[mi - 1] * (kTwoPi * m) * (kTwoPi * m) * factor;
            const double ks = kTwoPi * (m + n);
            const double kd = kTwoPi * (n - m);
            const std::size_t row = 4 * (mi - 1);
            s.coeffs(row + 0, j) = amp * std::cos(ks * t);
            s.coeffs(row + 1, j) = -amp * std::sin(ks * t);
            s.coeffs(row + 2, j) = amp * std::cos(kd * t);
            s.coeffs(row + 3, j) = -amp * std::sin(kd * t);
        }
    }
    return s;
}

inline WaveField generate_case2_field(const Case2Record& r, const SpaceTimeGrid& grid) {
    WaveField field;
    field.grid = grid;
    field.values = Tensor({grid.n_x(), grid.n_t});
    for (std::size_t k = 0; k < grid.n_x(); ++k)
        for (std::size_t j = 0; j < grid.n_t; ++j) field.values(k, j) = case2_solution(r, grid.x[k], grid.time(j));
    field.initial_u.resize(grid.n_x());
    field.initial_v.resize(grid.n_x());
    for (std::size_t k = 0; k < grid.n_x(); ++k) {
        field.initial_u[k] = case2_solution(r, grid.x[k], 0.0);
        field.initial_v[k] = case2_velocity(r, grid.x[k], 0.0);
    }
    return field;
}

// ---------------------------------------------------------------------------
// PDE residual oracle
// ---------------------------------------------------------------------------

struct ResidualReport {
    double max_abs = 0.0;
    std::size_t k = 0;  // spatial index of the maximum
    std::size_t j = 0;  // time index of the maximum
    Tensor residual;    // same shape as the field, zero on boundary nodes
};

/// max |u_tt − c²u_xx − f| over interior nodes with central second differences.
/// The field must be sampled on a uniform grid in both x and t.
inline ResidualReport pde_residual_check(const WaveField& field, const Fn2& speed_squared, const Fn2& rhs) {
    const auto& g = field.grid;
    if (g.n_x() < 3 || g.n_t < 3) throw ConfigError("pde_residual_check: need at least 3 nodes per axis");
    require_rank(field.values, 2, "pde_residual_check");
    if (field.values.dim(0) != g.n_x() || field.values.dim(1) != g.n_t) {
        throw DimensionError("pde_residual_check: field shape " + shape_string(field.values.shape()) +
                             " does not match grid");
    }
    const double dx = g.x[1] - g.x[0];
    for (std::size_t k = 1; k + 1 < g.n_x(); ++k) {
        if (std::abs(g.x[k + 1] - g.x[k] - dx) > 1e-9 * std::max(1.0, std::abs(dx))) {
            throw ConfigError("pde_residual_check: spatial samples are not uniform");
        }
    }
    const double dt = g.step();
    const Tensor& u = field.values;
    ResidualReport rep;
    rep.residual = Tensor(u.shape());
    for (std::size_t k = 1; k + 1 < g.n_x(); ++k) {
        for (std::size_t j = 1; j + 1 < g.n_t; ++j) {
            const double x = g.x[k];
            const double t = g.time(j);
            const double utt = (u(k, j + 1) - 2.0 * u(k, j) + u(k, j - 1)) / (dt * dt);
            const double uxx = (u(k + 1, j) - 2.0 * u(k, j) + u(k - 1, j)) / (dx * dx);
            const double r = utt - speed_squared(x, t) * uxx - rhs(x, t);
            rep.residual(k, j) = r;
            if (std::abs(r) > rep.max_abs) {
                rep.max_abs = std::abs(r);
                rep.k = k;
                rep.j = j;
            }
        }
    }
    return rep;
}

struct ConvergenceReport {
    double coarse = 0.0;
    double fine = 0.0;
    double ratio() const { return coarse / fine; }
};

/// Residual on a window and on the same window with both spacings halved.
/// `generate` maps a grid to the field sampled on it.
inline ConvergenceReport residual_convergence(const std::function<WaveField(const SpaceTimeGrid&)>& generate,
                                              double x_lo, double x_hi, std::size_t n_x, double t_end,
                                              std::size_t n_t, const Fn2& speed_squared, const Fn2& rhs) {
    SpaceTimeGrid coarse{t_end, n_t, uniform_points(x_lo, x_hi, n_x)};
    SpaceTimeGrid fine{t_end, 2 * n_t, uniform_points(x_lo, x_hi, 2 * n_x - 1)};
    ConvergenceReport rep;
    rep.coarse = pde_residual_check(generate(coarse), speed_squared, rhs).max_abs;
    rep.fine = pde_residual_check(generate(fine), speed_squared, rhs).max_abs;
    return rep;
}

}  // namespace dpn
