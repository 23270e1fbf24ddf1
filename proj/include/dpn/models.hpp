#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dpn/errors.hpp"
#include "dpn/mlp.hpp"
#include "dpn/parallel.hpp"
#include "dpn/prng.hpp"
#include "dpn/tensor.hpp"
#include "dpn/wavegen.hpp"

namespace dpn {

// ---------------------------------------------------------------------------
// Causal branch
// ---------------------------------------------------------------------------
//
// The first layer holds one weight per (hidden unit, signal row, lag column).
// Output time j (0-based) reads signal columns 0..j against weight columns
// n_t-1-(j-j'), so the newest sample always meets the last weight column.
// The window is realised as a GEMM against a lagged copy of the signal whose
// column j carries only columns 0..j, which keeps causality exact.

struct CausalBranch {
    Mlp mlp;  // layer_sizes[0] == rows * n_t
    std::size_t rows = 0;
    std::size_t n_t = 0;
    std::vector<double> input_scale;  // per signal row, fixed (not trained)
};

inline CausalBranch make_causal_branch(std::size_t rows, std::size_t n_t, const std::vector<std::size_t>& hidden,
                                       std::size_t width, Activation activation) {
    if (rows == 0 || n_t == 0 || width == 0) throw ConfigError("causal branch needs rows, n_t and width >= 1");
    std::vector<std::size_t> sizes{rows * n_t};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(width);
    return CausalBranch{make_mlp(std::move(sizes), activation), rows, n_t, std::vector<double>(rows, 1.0)};
}

/// Lagged signal: X[(r, c), j] = scale_r * f[r, j - (n_t-1-c)], zero when that index is negative.
inline Tensor toeplitz_input(const CausalBranch& branch, const Tensor& signal) {
    require_rank(signal, 2, "causal branch signal");
    if (signal.dim(0) != branch.rows || signal.dim(1) != branch.n_t) {
        throw DimensionError("causal branch expects a " + std::to_string(branch.rows) + "x" +
                             std::to_string(branch.n_t) + " signal, got " + shape_string(signal.shape()));
    }
    const std::size_t n = branch.n_t;
    Tensor x({branch.rows * n, n});
    for (std::size_t r = 0; r < branch.rows; ++r) {
        const auto f = signal.row(r);
        const double s = branch.input_scale[r];
        for (std::size_t c = 0; c < n; ++c) {
            auto out = x.row(r * n + c);
            const std::size_t lag = n - 1 - c;
            for (std::size_t j = lag; j < n; ++j) out[j] = s * f[j - lag];
        }
    }
    return x;
}

struct BranchCache {
    Tensor lagged;  // (rows*n_t) x n_t
    Tensor pre0;    // n_t x hidden0
    MlpCache rest;
};

namespace detail {

inline Tensor activate_layer(const Mlp& mlp, const Tensor& pre, std::size_t layer, ActivationPattern* pattern) {
    if (!all_finite(pre.data())) throw NumericError("non-finite activation in mlp layer " + std::to_string(layer));
    if (mlp.layers() == 1) return pre;
    record_pattern(pattern, mlp.activation, pre.data());
    Tensor a(pre.shape());
    for (std::size_t i = 0; i < pre.size(); ++i) a[i] = activate(mlp.activation, pre[i]);
    return a;
}

inline void add_bias_rows(Tensor& t, const Tensor& bias) {
    for (std::size_t r = 0; r < t.dim(0); ++r) {
        auto row = t.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
    }
}

}  // namespace detail

/// Rows are output times; row j depends only on signal columns 0..j.
inline Tensor causal_branch_forward(const CausalBranch& branch, const Tensor& signal, BranchCache* cache = nullptr,
                                    ActivationPattern* pattern = nullptr) {
    Tensor lagged = toeplitz_input(branch, signal);
    const Mlp& mlp = branch.mlp;
    Tensor pre0({branch.n_t, mlp.layer_sizes[1]});
    as_matrix(pre0).noalias() = (as_matrix(mlp.weights[0]) * as_matrix(lagged)).transpose();
    detail::add_bias_rows(pre0, mlp.biases[0]);
    Tensor a0 = detail::activate_layer(mlp, pre0, 0, pattern);
    Tensor out = mlp.layers() == 1 ? std::move(a0)
                                   : mlp_forward_range(mlp, 1, std::move(a0), cache ? &cache->rest : nullptr, pattern);
    if (cache) {
        cache->lagged = std::move(lagged);
        cache->pre0 = std::move(pre0);
    }
    return out;
}

/// Branch features for window length `window` (number of signal columns
/// read). Window 0 is the empty sum: the first layer sees only its bias.
inline Tensor causal_branch_row(const CausalBranch& branch, const Tensor& signal, std::size_t window) {
    if (window > branch.n_t) throw DimensionError("branch window exceeds the signal length");
    if (window > 0) {
        const Tensor all = causal_branch_forward(branch, signal);
        const auto r = all.row(window - 1);
        return Tensor({1, r.size()}, std::vector<double>(r.begin(), r.end()));
    }
    const Mlp& mlp = branch.mlp;
    Tensor pre0({1, mlp.layer_sizes[1]}, std::vector<double>(mlp.biases[0].storage()));
    Tensor a0 = detail::activate_layer(mlp, pre0, 0, nullptr);
    return mlp.layers() == 1 ? a0 : mlp_forward_range(mlp, 1, std::move(a0));
}

inline void causal_branch_backward(const CausalBranch& branch, const BranchCache& cache, Tensor dout,
                                   CausalBranch& grad) {
    const Mlp& mlp = branch.mlp;
    Tensor dz = mlp.layers() == 1 ? std::move(dout) : mlp_backward_range(mlp, 1, cache.rest, std::move(dout), grad.mlp, true);
    if (mlp.layers() > 1) {
        for (std::size_t i = 0; i < dz.size(); ++i) dz[i] *= activate_grad(mlp.activation, cache.pre0[i]);
    }
    as_matrix(grad.mlp.weights[0]).noalias() += as_matrix(dz).transpose() * as_matrix(cache.lagged).transpose();
    auto& gb = grad.mlp.biases[0];
    for (std::size_t r = 0; r < dz.dim(0); ++r) {
        const auto row = dz.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) gb[c] += row[c];
    }
}

// ---------------------------------------------------------------------------
// Trunk
// ---------------------------------------------------------------------------

struct Trunk {
    Mlp mlp;                  // scalar input
    double time_scale = 1.0;  // network input is time_scale * tau
};

inline Tensor trunk_input(const Trunk& trunk, std::span<const double> times) {
    if (times.empty()) throw DimensionError("trunk needs at least one time");
    Tensor in({times.size(), 1});
    for (std::size_t j = 0; j < times.size(); ++j) in[j] = trunk.time_scale * times[j];
    return in;
}

inline Tensor trunk_forward(const Trunk& trunk, std::span<const double> times, MlpCache* cache = nullptr,
                            ActivationPattern* pattern = nullptr) {
    return mlp_forward(trunk.mlp, trunk_input(trunk, times), cache, pattern);
}

/// Trunk features and their derivative with respect to tau.
inline std::pair<Tensor, Tensor> trunk_forward_tangent(const Trunk& trunk, std::span<const double> times) {
    return mlp_forward_tangent(trunk.mlp, trunk_input(trunk, times),
                               Tensor({times.size(), 1}, trunk.time_scale));
}

// ---------------------------------------------------------------------------
// CPOD-DeepONet
// ---------------------------------------------------------------------------

struct CpodConfig {
    std::size_t signal_rows = 21;
    std::size_t n_t = 400;
    std::size_t source_modes = 10;    // N
    std::size_t solution_modes = 10;  // M, spatial basis has 2M+1 functions
    std::vector<std::size_t> branch_hidden{128, 128, 128};
    std::vector<std::size_t> trunk_hidden{100, 100, 100};
    std::size_t width = 500;  // p
    Activation activation = Activation::relu;
    double time_scale = 1.0;
    // He bounds for the projections are multiplied by this. The branch ⊙ trunk
    // product is much larger than unit variance, so full He scaling starts
    // the field several times too large.
    double projection_gain = 0.1;
};

struct CpodModel {
    CpodConfig config;
    CausalBranch branch;
    Trunk trunk;
    Tensor projection;  // p x NBx

    std::size_t basis_count() const { return basis_size(config.solution_modes); }
};

inline Mlp make_trunk_mlp(const std::vector<std::size_t>& hidden, std::size_t width, Activation activation) {
    std::vector<std::size_t> sizes{1};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(width);
    return make_mlp(std::move(sizes), activation);
}

/// Zero-initialised model with the configured architecture.
inline CpodModel make_cpod_shape(const CpodConfig& cfg) {
    if (cfg.solution_modes < cfg.source_modes) {
        throw ConfigError("solution modes M=" + std::to_string(cfg.solution_modes) +
                          " must be >= source modes N=" + std::to_string(cfg.source_modes));
    }
    if (!(cfg.time_scale > 0.0)) throw ConfigError("trunk time scale must be positive");
    CpodModel m;
    m.config = cfg;
    m.branch = make_causal_branch(cfg.signal_rows, cfg.n_t, cfg.branch_hidden, cfg.width, cfg.activation);
    m.trunk = Trunk{make_trunk_mlp(cfg.trunk_hidden, cfg.width, cfg.activation), cfg.time_scale};
    m.projection = Tensor({cfg.width, basis_size(cfg.solution_modes)});
    return m;
}

inline CpodModel make_cpod(const CpodConfig& cfg, std::uint64_t seed) {
    CpodModel m = make_cpod_shape(cfg);
    Prng rng(seed);
    init_he(m.branch.mlp, rng);
    init_he(m.trunk.mlp, rng);
    init_he(m.projection, cfg.width, rng);
    scale_inplace(m.projection, cfg.projection_gain);
    return m;
}

inline CpodModel zeros_like(const CpodModel& m) {
    CpodModel g = make_cpod_shape(m.config);
    g.branch.input_scale = m.branch.input_scale;
    return g;
}

inline std::vector<Tensor*> parameters(CpodModel& m) {
    std::vector<Tensor*> out;
    append_parameters(m.branch.mlp, out);
    append_parameters(m.trunk.mlp, out);
    out.push_back(&m.projection);
    return out;
}

inline std::vector<const Tensor*> parameters(const CpodModel& m) {
    std::vector<const Tensor*> out;
    append_parameters(m.branch.mlp, out);
    append_parameters(m.trunk.mlp, out);
    out.push_back(&m.projection);
    return out;
}

/// Contracts y_x (N_x x NBx) against y_t (N_t x NBx): u[k][j] = sum_n y_x[k][n] y_t[j][n].
inline Tensor assemble_field(const Tensor& basis, const Tensor& y_t) {
    if (basis.dim(1) != y_t.dim(1)) {
        throw DimensionError("basis has " + std::to_string(basis.dim(1)) + " channels but the time coefficients have " +
                             std::to_string(y_t.dim(1)));
    }
    return matmul_nt(basis, y_t);
}

/// y_t = (branch ⊙ trunk) · projection, shape N_t x NBx.
inline Tensor cpod_time_coefficients(const CpodModel& m, const Tensor& signal, std::span<const double> times) {
    const Tensor b = causal_branch_forward(m.branch, signal);
    const Tensor t = trunk_forward(m.trunk, times);
    if (b.dim(0) != t.dim(0)) throw DimensionError("trunk times do not match the signal length");
    return matmul(hadamard(b, t), m.projection);
}

inline Tensor cpod_forward(const CpodModel& m, const Tensor& signal, const Tensor& basis,
                           std::span<const double> times) {
    return assemble_field(basis, cpod_time_coefficients(m, signal, times));
}

inline Tensor cpod_forward(const CpodModel& m, const Tensor& signal, std::span<const double> x,
                           std::span<const double> times) {
    return cpod_forward(m, signal, fourier_basis_matrix(x, m.config.solution_modes), times);
}

/// Batched form: output [batch x N_x x N_t].
inline Tensor cpod_forward_batch(const CpodModel& m, const std::vector<const Tensor*>& signals,
                                 std::span<const double> x, std::span<const double> times) {
    if (signals.empty()) throw DimensionError("empty batch");
    const Tensor basis = fourier_basis_matrix(x, m.config.solution_modes);
    Tensor out({signals.size(), x.size(), times.size()});
    for (std::size_t b = 0; b < signals.size(); ++b) {
        const Tensor u = cpod_forward(m, *signals[b], basis, times);
        std::copy(u.storage().begin(), u.storage().end(), out.storage().begin() + b * u.size());
    }
    return out;
}

// ---------------------------------------------------------------------------
// DeepPropNet
// ---------------------------------------------------------------------------

struct PropNetConfig {
    CpodConfig source;
    std::vector<double> sensor_x;
    std::vector<std::size_t> ic_branch_hidden{128, 128, 128};
    std::vector<std::size_t> ic_trunk_hidden{100, 100, 100};
};

struct PropNetModel {
    PropNetConfig config;
    CpodModel cpod;
    Mlp ic_branch;  // input [u(sensors), v(sensors)]
    Trunk ic_trunk;
    Tensor ic_projection;  // p x NBx
    double u_scale = 1.0;  // fixed input normalisation of the sensor values
    double v_scale = 1.0;

    std::size_t sensor_count() const { return config.sensor_x.size(); }
};

inline PropNetModel make_propnet_shape(const PropNetConfig& cfg) {
    if (cfg.sensor_x.empty()) throw ConfigError("propnet needs at least one initial-condition sensor");
    PropNetModel m;
    m.config = cfg;
    m.cpod = make_cpod_shape(cfg.source);
    std::vector<std::size_t> sizes{2 * cfg.sensor_x.size()};
    sizes.insert(sizes.end(), cfg.ic_branch_hidden.begin(), cfg.ic_branch_hidden.end());
    sizes.push_back(cfg.source.width);
    m.ic_branch = make_mlp(std::move(sizes), cfg.source.activation);
    m.ic_trunk = Trunk{make_trunk_mlp(cfg.ic_trunk_hidden, cfg.source.width, cfg.source.activation), cfg.source.time_scale};
    m.ic_projection = Tensor({cfg.source.width, basis_size(cfg.source.solution_modes)});
    return m;
}

inline PropNetModel make_propnet(const PropNetConfig& cfg, std::uint64_t seed) {
    PropNetModel m = make_propnet_shape(cfg);
    m.cpod = make_cpod(cfg.source, seed);
    Prng rng = Prng::substream(seed, 1);
    init_he(m.ic_branch, rng);
    init_he(m.ic_trunk.mlp, rng);
    init_he(m.ic_projection, cfg.source.width, rng);
    scale_inplace(m.ic_projection, cfg.source.projection_gain);
    return m;
}

inline PropNetModel zeros_like(const PropNetModel& m) {
    PropNetModel g = make_propnet_shape(m.config);
    g.cpod.branch.input_scale = m.cpod.branch.input_scale;
    g.u_scale = m.u_scale;
    g.v_scale = m.v_scale;
    return g;
}

inline std::vector<Tensor*> parameters(PropNetModel& m) {
    std::vector<Tensor*> out = parameters(m.cpod);
    append_parameters(m.ic_branch, out);
    append_parameters(m.ic_trunk.mlp, out);
    out.push_back(&m.ic_projection);
    return out;
}

inline std::vector<const Tensor*> parameters(const PropNetModel& m) {
    std::vector<const Tensor*> out = parameters(m.cpod);
    append_parameters(m.ic_branch, out);
    append_parameters(m.ic_trunk.mlp, out);
    out.push_back(&m.ic_projection);
    return out;
}

/// Scaled initial-condition input row [u_scale * u, v_scale * v].
inline Tensor ic_input(const PropNetModel& m, std::span<const double> ic) {
    if (ic.size() != 2 * m.sensor_count()) {
        throw DimensionError("initial condition has " + std::to_string(ic.size()) + " values, expected " +
                             std::to_string(2 * m.sensor_count()) + " (u and v at each sensor)");
    }
    Tensor in({1, ic.size()});
    const std::size_t s = m.sensor_count();
    for (std::size_t i = 0; i < ic.size(); ++i) in[i] = (i < s ? m.u_scale : m.v_scale) * ic[i];
    return in;
}

/// Feature row (1 x p) broadcast across all times.
inline Tensor ic_branch_forward(const PropNetModel& m, std::span<const double> ic, MlpCache* cache = nullptr,
                                ActivationPattern* pattern = nullptr) {
    return mlp_forward(m.ic_branch, ic_input(m, ic), cache, pattern);
}

namespace detail {

inline Tensor broadcast_hadamard(const Tensor& row, const Tensor& t) {
    Tensor out(t.shape());
    for (std::size_t j = 0; j < t.dim(0); ++j) {
        const auto src = t.row(j);
        auto dst = out.row(j);
        for (std::size_t c = 0; c < src.size(); ++c) dst[c] = row[c] * src[c];
    }
    return out;
}

}  // namespace detail

/// y_i = (ic_branch broadcast ⊙ ic_trunk) · ic_projection.
inline Tensor ic_time_coefficients(const PropNetModel& m, std::span<const double> ic, std::span<const double> times) {
    return matmul(detail::broadcast_hadamard(ic_branch_forward(m, ic), trunk_forward(m.ic_trunk, times)),
                  m.ic_projection);
}

inline Tensor propnet_forward(const PropNetModel& m, std::span<const double> ic, const Tensor& signal,
                              const Tensor& basis, std::span<const double> times) {
    Tensor y = cpod_time_coefficients(m.cpod, signal, times);
    add_inplace(y, ic_time_coefficients(m, ic, times));
    return assemble_field(basis, y);
}

inline Tensor propnet_forward(const PropNetModel& m, std::span<const double> ic, const Tensor& signal,
                              std::span<const double> x, std::span<const double> times) {
    return propnet_forward(m, ic, signal, fourier_basis_matrix(x, m.cpod.config.solution_modes), times);
}

// ---------------------------------------------------------------------------
// Evaluation at arbitrary times and the velocity hand-off
// ---------------------------------------------------------------------------

/// Number of signal samples at or before time t: ceil(t/h) clamped to [0, n_t].
inline std::size_t causal_window(double t, double h, std::size_t n_t) {
    if (!(h > 0.0)) throw ConfigError("time step must be positive");
    const double w = std::ceil(t / h - 1e-9);
    if (w <= 0.0) return 0;
    return std::min<std::size_t>(static_cast<std::size_t>(w), n_t);
}

// finite_difference and exact hold the branch at the window for t and vary
// only the trunks. backward takes (3u(t) - 4u(t-h) + u(t-2h)) / 2h with each
// time read through its own causal window, so it also sees how the branch
// features change as the window grows.
enum class DerivativeMode { finite_difference, exact, backward };

inline std::string to_string(DerivativeMode m) {
    switch (m) {
        case DerivativeMode::finite_difference: return "central";
        case DerivativeMode::exact: return "exact";
        default: return "backward";
    }
}

inline DerivativeMode parse_derivative_mode(const std::string& s) {
    if (s == "central") return DerivativeMode::finite_difference;
    if (s == "exact") return DerivativeMode::exact;
    if (s == "backward") return DerivativeMode::backward;
    throw ConfigError("unknown derivative mode '" + s + "' (expected central, exact or backward)");
}

namespace detail {

// Time coefficient row at time s given fixed branch features. When
// `derivative` is set the trunks are differentiated in s instead.
inline Tensor time_row(const CpodModel& m, const Tensor& branch_row, const PropNetModel* pn, const Tensor* ic_row,
                       double s, bool derivative) {
    const double ts[1] = {s};
    auto trunk_eval = [&](const Trunk& trunk) {
        return derivative ? trunk_forward_tangent(trunk, ts).second : trunk_forward(trunk, ts);
    };
    Tensor y = matmul(hadamard(branch_row, trunk_eval(m.trunk)), m.projection);
    if (pn) add_inplace(y, matmul(hadamard(*ic_row, trunk_eval(pn->ic_trunk)), pn->ic_projection));
    return y;
}

inline std::vector<double> field_row(const Tensor& basis, const Tensor& y) {
    const Tensor u = assemble_field(basis, y);
    return u.storage();
}

inline std::vector<double> evaluate_at(const CpodModel& m, const PropNetModel* pn, std::span<const double> ic,
                                       const Tensor& signal, std::span<const double> x, double t, double h,
                                       std::optional<DerivativeMode> mode, double delta) {
    if (mode && *mode == DerivativeMode::backward) {
        const auto u0 = evaluate_at(m, pn, ic, signal, x, t, h, std::nullopt, 0.0);
        const auto u1 = evaluate_at(m, pn, ic, signal, x, t - h, h, std::nullopt, 0.0);
        const auto u2 = evaluate_at(m, pn, ic, signal, x, t - 2.0 * h, h, std::nullopt, 0.0);
        std::vector<double> v(u0.size());
        for (std::size_t k = 0; k < v.size(); ++k) v[k] = (3.0 * u0[k] - 4.0 * u1[k] + u2[k]) / (2.0 * h);
        return v;
    }
    const Tensor br = causal_branch_row(m.branch, signal, causal_window(t, h, m.config.n_t));
    Tensor ic_row;
    if (pn) ic_row = ic_branch_forward(*pn, ic);
    const Tensor basis = fourier_basis_matrix(x, m.config.solution_modes);
    const Tensor* icp = pn ? &ic_row : nullptr;
    if (!mode) return field_row(basis, time_row(m, br, pn, icp, t, false));
    if (*mode == DerivativeMode::exact) return field_row(basis, time_row(m, br, pn, icp, t, true));
    if (!(delta > 0.0)) throw ConfigError("finite-difference delta must be positive");
    const auto up = field_row(basis, time_row(m, br, pn, icp, t + delta, false));
    const auto dn = field_row(basis, time_row(m, br, pn, icp, t - delta, false));
    std::vector<double> v(up.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = (up[k] - dn[k]) / (2.0 * delta);
    return v;
}

}  // namespace detail

/// u(x, t) at arbitrary (block-local) t; h is the signal sampling step.
inline std::vector<double> field_at(const CpodModel& m, const Tensor& signal, std::span<const double> x, double t,
                                    double h) {
    return detail::evaluate_at(m, nullptr, {}, signal, x, t, h, std::nullopt, 0.0);
}

inline std::vector<double> field_at(const PropNetModel& m, std::span<const double> ic, const Tensor& signal,
                                    std::span<const double> x, double t, double h) {
    return detail::evaluate_at(m.cpod, &m, ic, signal, x, t, h, std::nullopt, 0.0);
}

/// u_t(x, t). The branch is held at the window for t; only the trunks vary.
inline std::vector<double> field_time_derivative(const CpodModel& m, const Tensor& signal, std::span<const double> x,
                                                 double t, double h, DerivativeMode mode, double delta) {
    return detail::evaluate_at(m, nullptr, {}, signal, x, t, h, mode, delta);
}

inline std::vector<double> field_time_derivative(const PropNetModel& m, std::span<const double> ic,
                                                 const Tensor& signal, std::span<const double> x, double t, double h,
                                                 DerivativeMode mode, double delta) {
    return detail::evaluate_at(m.cpod, &m, ic, signal, x, t, h, mode, delta);
}

// ---------------------------------------------------------------------------
// SSE loss and its gradient
// ---------------------------------------------------------------------------

/// One training example. `basis` is the Fourier basis at the case's x
/// samples; `ic` is only read by the propnet path.
struct ModelSample {
    const Tensor* signal = nullptr;
    const Tensor* basis = nullptr;
    const Tensor* target = nullptr;  // N_x x N_t
    std::span<const double> ic{};
};

namespace detail {

struct CaseGrad {
    CpodModel src;
    Tensor d_trunk;
    Mlp ic_branch;
    Tensor d_ic_trunk;
    Tensor d_ic_projection;
    double loss = 0.0;
    ActivationPattern pattern;
};

inline void zero(Tensor& t) { t.fill(0.0); }

inline void zero(Mlp& mlp) {
    for (auto& w : mlp.weights) w.fill(0.0);
    for (auto& b : mlp.biases) b.fill(0.0);
}

inline void add(Mlp& acc, const Mlp& g) {
    for (std::size_t l = 0; l < acc.layers(); ++l) {
        add_inplace(acc.weights[l], g.weights[l]);
        add_inplace(acc.biases[l], g.biases[l]);
    }
}

// Loss (1/B) sum_b ||U_b - target_b||^2 and, when `grad` is set, its
// gradient. Each case's gradient is computed from zero in its own buffer and
// buffers are summed in case order, so the result does not depend on
// `threads`.
inline double batch_loss(const CpodModel& m, const PropNetModel* pn, std::span<const ModelSample> batch,
                         std::span<const double> times, CpodModel* grad, PropNetModel* pn_grad,
                         ActivationPattern* pattern, std::size_t threads, std::vector<double>* sample_sq_error) {
    if (batch.empty()) throw DimensionError("empty batch");
    if (sample_sq_error) sample_sq_error->assign(batch.size(), 0.0);
    const bool want_grad = grad != nullptr;
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    MlpCache trunk_cache, ic_trunk_cache;
    const Tensor trunk = trunk_forward(m.trunk, times, want_grad ? &trunk_cache : nullptr, pattern);
    Tensor ic_trunk;
    if (pn) ic_trunk = trunk_forward(pn->ic_trunk, times, want_grad ? &ic_trunk_cache : nullptr, pattern);

    const std::size_t workers = std::max<std::size_t>(1, std::min(threads, batch.size()));
    std::vector<CaseGrad> slots(workers);
    if (want_grad) {
        for (auto& s : slots) {
            s.src = zeros_like(m);
            s.d_trunk = Tensor::zeros_like(trunk);
            if (pn) {
                s.ic_branch = zeros_like(pn->ic_branch);
                s.d_ic_trunk = Tensor::zeros_like(ic_trunk);
                s.d_ic_projection = Tensor::zeros_like(pn->ic_projection);
            }
        }
    }

    auto run_case = [&](const ModelSample& smp, CaseGrad& g) {
        if (want_grad) {
            zero(g.src.branch.mlp);
            zero(g.src.projection);
            zero(g.d_trunk);
            if (pn) {
                zero(g.ic_branch);
                zero(g.d_ic_trunk);
                zero(g.d_ic_projection);
            }
        }
        g.pattern.clear();
        ActivationPattern* pat = pattern ? &g.pattern : nullptr;
        BranchCache bc;
        const Tensor b = causal_branch_forward(m.branch, *smp.signal, want_grad ? &bc : nullptr, pat);
        if (b.dim(0) != trunk.dim(0)) throw DimensionError("trunk times do not match the signal length");
        const Tensor p = hadamard(b, trunk);
        Tensor y = matmul(p, m.projection);
        MlpCache icc;
        Tensor ib, q;
        if (pn) {
            ib = ic_branch_forward(*pn, smp.ic, want_grad ? &icc : nullptr, pat);
            q = broadcast_hadamard(ib, ic_trunk);
            add_inplace(y, matmul(q, pn->ic_projection));
        }
        const Tensor u = assemble_field(*smp.basis, y);
        require_same_shape(u, *smp.target, "sse target");
        Tensor du(u.shape());
        double loss = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double r = u[i] - (*smp.target)[i];
            loss += r * r;
            du[i] = 2.0 * r * inv_b;
        }
        g.loss = loss;
        if (!want_grad) return;

        const Tensor dy = matmul_tn(du, *smp.basis);  // N_t x NBx
        add_matmul_tn(g.src.projection, p, dy);
        const Tensor dp = matmul_nt(dy, m.projection);
        g.d_trunk = hadamard(dp, b);
        causal_branch_backward(m.branch, bc, hadamard(dp, trunk), g.src.branch);
        if (pn) {
            add_matmul_tn(g.d_ic_projection, q, dy);
            const Tensor dq = matmul_nt(dy, pn->ic_projection);
            Tensor dib({1, ib.size()});
            for (std::size_t j = 0; j < dq.dim(0); ++j) {
                const auto dr = dq.row(j);
                const auto tr = ic_trunk.row(j);
                for (std::size_t c = 0; c < dr.size(); ++c) dib[c] += dr[c] * tr[c];
            }
            g.d_ic_trunk = broadcast_hadamard(ib, dq);
            mlp_backward(pn->ic_branch, icc, std::move(dib), g.ic_branch);
        }
    };

    double loss = 0.0;
    Tensor d_trunk, d_ic_trunk;
    if (want_grad) {
        d_trunk = Tensor::zeros_like(trunk);
        if (pn) d_ic_trunk = Tensor::zeros_like(ic_trunk);
    }
    for (std::size_t start = 0; start < batch.size(); start += workers) {
        const std::size_t count = std::min(workers, batch.size() - start);
        parallel_for(count, workers, [&](std::size_t w) { run_case(batch[start + w], slots[w]); });
        for (std::size_t w = 0; w < count; ++w) {
            const CaseGrad& g = slots[w];
            loss += g.loss * inv_b;
            if (sample_sq_error) (*sample_sq_error)[start + w] = g.loss;
            if (pattern) pattern->insert(pattern->end(), g.pattern.begin(), g.pattern.end());
            if (!want_grad) continue;
            add(grad->branch.mlp, g.src.branch.mlp);
            add_inplace(grad->projection, g.src.projection);
            add_inplace(d_trunk, g.d_trunk);
            if (pn) {
                add(pn_grad->ic_branch, g.ic_branch);
                add_inplace(pn_grad->ic_projection, g.d_ic_projection);
                add_inplace(d_ic_trunk, g.d_ic_trunk);
            }
        }
    }
    if (want_grad) {
        mlp_backward(m.trunk.mlp, trunk_cache, std::move(d_trunk), grad->trunk.mlp);
        if (pn) mlp_backward(pn->ic_trunk.mlp, ic_trunk_cache, std::move(d_ic_trunk), pn_grad->ic_trunk.mlp);
    }
    return loss;
}

}  // namespace detail

/// Mean over the batch of the summed squared nodal error. Gradients are
/// accumulated into `grad` when given; `sample_sq_error` receives each
/// sample's unscaled squared error.
inline double cpod_loss(const CpodModel& m, std::span<const ModelSample> batch, std::span<const double> times,
                        CpodModel* grad = nullptr, ActivationPattern* pattern = nullptr, std::size_t threads = 1,
                        std::vector<double>* sample_sq_error = nullptr) {
    return detail::batch_loss(m, nullptr, batch, times, grad, nullptr, pattern, threads, sample_sq_error);
}

inline double propnet_loss(const PropNetModel& m, std::span<const ModelSample> batch, std::span<const double> times,
                           PropNetModel* grad = nullptr, ActivationPattern* pattern = nullptr,
                           std::size_t threads = 1, std::vector<double>* sample_sq_error = nullptr) {
    for (const auto& s : batch) {
        if (s.ic.size() != 2 * m.sensor_count()) throw DimensionError("sample initial condition has the wrong length");
    }
    return detail::batch_loss(m.cpod, &m, batch, times, grad ? &grad->cpod : nullptr, grad, pattern, threads,
                              sample_sq_error);
}

}  // namespace dpn
