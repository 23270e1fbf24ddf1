#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "dpn/dataset.hpp"
#include "dpn/errors.hpp"
#include "dpn/metrics.hpp"
#include "dpn/models.hpp"
#include "dpn/parallel.hpp"
#include "dpn/tensor.hpp"

namespace dpn {

/// Partition of [0, t_end] into n_blocks equal blocks of steps_per_block samples.
struct BlockSchedule {
    double t_end = 1.0;
    std::size_t n_blocks = 5;
    std::size_t steps_per_block = 80;

    std::size_t n_t() const { return n_blocks * steps_per_block; }
    double block_length() const { return t_end / static_cast<double>(n_blocks); }
    double step() const { return t_end / static_cast<double>(n_t()); }
    double block_start(std::size_t i) const { return static_cast<double>(i) * block_length(); }

    /// Block-local sample times tau_j = (j+1) h.
    std::vector<double> local_times() const {
        std::vector<double> t(steps_per_block);
        for (std::size_t j = 0; j < t.size(); ++j) t[j] = static_cast<double>(j + 1) * step();
        return t;
    }

    void validate() const {
        if (n_blocks < 1 || steps_per_block < 1) throw ConfigError("block schedule needs at least one block and step");
        if (!(t_end > 0.0)) throw ConfigError("block schedule horizon must be positive");
    }

    void require_grid(std::size_t grid_n_t, double grid_t_end) const {
        validate();
        if (n_t() != grid_n_t) {
            throw ConfigError(std::to_string(n_blocks) + " blocks x " + std::to_string(steps_per_block) +
                              " steps does not cover the " + std::to_string(grid_n_t) + "-step grid");
        }
        if (std::abs(t_end - grid_t_end) > 1e-12 * grid_t_end) throw ConfigError("block schedule horizon differs from the grid");
    }
};

namespace detail {

inline Tensor column_block(const Tensor& m, std::size_t block, const BlockSchedule& s, const char* what) {
    require_rank(m, 2, what);
    if (block >= s.n_blocks) {
        throw ConfigError("block " + std::to_string(block) + " out of range (" + std::to_string(s.n_blocks) + " blocks)");
    }
    if (m.dim(1) != s.n_t()) throw DimensionError(std::string(what) + " has the wrong number of time columns");
    const std::size_t w = s.steps_per_block, c0 = block * w;
    Tensor out({m.dim(0), w});
    for (std::size_t r = 0; r < m.dim(0); ++r) {
        const auto src = m.row(r);
        std::copy(src.begin() + c0, src.begin() + c0 + w, out.row(r).begin());
    }
    return out;
}

}  // namespace detail

/// Signal columns of one block, re-indexed to local time.
inline Tensor restrict_signal(const Tensor& signal, std::size_t block, const BlockSchedule& s) {
    return detail::column_block(signal, block, s, "signal");
}

inline Tensor restrict_field(const Tensor& field, std::size_t block, const BlockSchedule& s) {
    return detail::column_block(field, block, s, "field");
}

/// Equispaced sensor locations including both ends.
inline std::vector<double> sensor_points(double lo, double hi, std::size_t n) {
    if (n == 1) return {0.5 * (lo + hi)};
    return uniform_points(lo, hi, n);
}

/// [u, v] concatenated, the layout the initial-condition branch reads.
inline std::vector<double> pack_ic(const std::vector<double>& u, const std::vector<double>& v) {
    std::vector<double> ic(u);
    ic.insert(ic.end(), v.begin(), v.end());
    return ic;
}

enum class InitMode { exact, predicted };

inline std::string to_string(InitMode m) { return m == InitMode::exact ? "exact" : "predicted"; }

inline InitMode parse_init_mode(const std::string& s) {
    if (s == "exact") return InitMode::exact;
    if (s == "predicted") return InitMode::predicted;
    throw ConfigError("unknown init mode '" + s + "' (expected exact or predicted)");
}

/// Initial condition handed to block `block` at t = block_start(block).
struct HandOff {
    std::size_t block = 0;
    double t = 0.0;
    std::vector<double> u, v;  // at the sensors
};

/// Exact (u, u_t) at the sensors for a global time.
using SensorState = std::function<std::pair<std::vector<double>, std::vector<double>>(double t)>;

struct RolloutReference {
    const Tensor* field = nullptr;  // N_x x N_t reference at the evaluation points
    SensorState sensor_state;       // required in exact mode
};

struct RolloutOptions {
    DerivativeMode derivative = DerivativeMode::backward;
    double delta_fraction = 0.1;  // central-difference step as a fraction of h
};

struct RolloutResult {
    InitMode mode = InitMode::predicted;
    Tensor field;                      // N_x x N_t, blocks tiled in time order
    std::vector<HandOff> handoffs;     // one per block
    std::vector<double> block_rel_l2;  // empty without a reference field
    double rel_l2 = std::nan("");      // block-summed over the whole domain
};

/// Block-by-block evaluation of one propagator over [0, t_end].
inline RolloutResult rollout(const PropNetModel& model, const Tensor& signal, std::span<const double> x,
                             const std::vector<double>& u0, const std::vector<double>& v0, const BlockSchedule& s,
                             InitMode mode, const RolloutReference& ref = {}, const RolloutOptions& opt = {}) {
    s.validate();
    if (model.cpod.config.n_t != s.steps_per_block) {
        throw ConfigError("model expects " + std::to_string(model.cpod.config.n_t) + "-step blocks, schedule has " +
                          std::to_string(s.steps_per_block));
    }
    if (mode == InitMode::exact && !ref.sensor_state) throw ConfigError("exact-init rollout needs a reference state");
    if (ref.field && (ref.field->dim(0) != x.size() || ref.field->dim(1) != s.n_t())) {
        throw DimensionError("reference field does not match the rollout grid");
    }
    const std::size_t w = s.steps_per_block;
    const double h = s.step();
    const auto times = s.local_times();
    const Tensor basis = fourier_basis_matrix(x, model.cpod.config.solution_modes);
    const std::vector<double>& sensors = model.config.sensor_x;

    RolloutResult r;
    r.mode = mode;
    r.field = Tensor({x.size(), s.n_t()});
    std::vector<double> u = u0, v = v0;
    std::vector<double> err_norms, ref_norms;
    for (std::size_t b = 0; b < s.n_blocks; ++b) {
        if (mode == InitMode::exact) std::tie(u, v) = ref.sensor_state(s.block_start(b));
        for (double e : u)
            if (!std::isfinite(e)) throw NumericError("non-finite hand-off entering block " + std::to_string(b));
        for (double e : v)
            if (!std::isfinite(e)) throw NumericError("non-finite hand-off entering block " + std::to_string(b));
        r.handoffs.push_back({b, s.block_start(b), u, v});
        const std::vector<double> ic = pack_ic(u, v);
        const Tensor block_signal = restrict_signal(signal, b, s);
        const Tensor ub = propnet_forward(model, ic, block_signal, basis, times);
        for (std::size_t k = 0; k < x.size(); ++k) std::copy(ub.row(k).begin(), ub.row(k).end(), r.field.row(k).begin() + b * w);
        if (ref.field) {
            const Tensor rb = restrict_field(*ref.field, b, s);
            double e = 0.0, t = 0.0;
            for (std::size_t q = 0; q < ub.size(); ++q) {
                e += (ub[q] - rb[q]) * (ub[q] - rb[q]);
                t += rb[q] * rb[q];
            }
            err_norms.push_back(std::sqrt(e));
            ref_norms.push_back(std::sqrt(t));
            r.block_rel_l2.push_back(t > 0.0 ? std::sqrt(e / t) : std::nan(""));
        }
        if (mode == InitMode::predicted && b + 1 < s.n_blocks) {
            const double dt = s.block_length();
            u = field_at(model, ic, block_signal, sensors, dt, h);
            v = field_time_derivative(model, ic, block_signal, sensors, dt, h, opt.derivative, opt.delta_fraction * h);
        }
    }
    if (ref.field) r.rel_l2 = block_relative_l2(err_norms, ref_norms);
    return r;
}

/// Rollout of dataset case `index` on its own x samples.
inline RolloutResult rollout_case(const PropNetModel& model, const WaveDataset& ds, std::size_t index,
                                  const BlockSchedule& s, InitMode mode, const RolloutOptions& opt = {}) {
    const WaveCase& c = ds.cases.at(index);
    s.require_grid(ds.config.n_t, ds.config.t_end);
    const auto& sensors = model.config.sensor_x;
    RolloutReference ref;
    ref.field = &c.field.values;
    ref.sensor_state = [&](double t) { return case_state(ds.config, c.coefficients, sensors, t); };
    const auto [u0, v0] = ref.sensor_state(0.0);
    return rollout(model, c.signal.coeffs, c.field.grid.x, u0, v0, s, mode, ref, opt);
}

struct InitComparison {
    std::vector<double> exact, predicted;  // per case, block-summed relative L2
    RelativeL2 exact_summary, predicted_summary;
};

inline InitComparison compare_init_modes(const PropNetModel& model, const WaveDataset& ds, const BlockSchedule& s,
                                         const RolloutOptions& opt = {}, std::size_t threads = 1) {
    InitComparison out;
    out.exact.assign(ds.cases.size(), 0.0);
    out.predicted.assign(ds.cases.size(), 0.0);
    parallel_for(ds.cases.size(), threads, [&](std::size_t i) {
        out.exact[i] = rollout_case(model, ds, i, s, InitMode::exact, opt).rel_l2;
        out.predicted[i] = rollout_case(model, ds, i, s, InitMode::predicted, opt).rel_l2;
    });
    out.exact_summary = summarize_relative_l2(out.exact);
    out.predicted_summary = summarize_relative_l2(out.predicted);
    return out;
}

// ---------------------------------------------------------------------------
// CSV exports
// ---------------------------------------------------------------------------

/// Rows case,block,t,x,u_pred,u_exact,abs_err for every node of a rollout.
inline void write_rollout_csv(std::ostream& os, std::size_t case_index, const RolloutResult& r,
                              std::span<const double> x, const Tensor& reference, const BlockSchedule& s,
                              bool header = true) {
    if (header) os << "case,block,t,x,u_pred,u_exact,abs_err\n";
    os << std::setprecision(17);
    for (std::size_t j = 0; j < s.n_t(); ++j) {
        const std::size_t b = j / s.steps_per_block;
        const double t = static_cast<double>(j + 1) * s.step();
        for (std::size_t k = 0; k < x.size(); ++k) {
            const double p = r.field(k, j), e = reference(k, j);
            os << case_index << ',' << b << ',' << t << ',' << x[k] << ',' << p << ',' << e << ',' << std::abs(p - e)
               << '\n';
        }
    }
}

/// Rows case,mode,block,rel_l2 plus a full-domain row per rollout (block "all").
inline void write_rollout_summary_csv(std::ostream& os, const std::vector<std::pair<std::size_t, RolloutResult>>& runs) {
    os << "case,mode,block,rel_l2\n" << std::setprecision(17);
    for (const auto& [i, r] : runs) {
        for (std::size_t b = 0; b < r.block_rel_l2.size(); ++b)
            os << i << ',' << to_string(r.mode) << ',' << b << ',' << r.block_rel_l2[b] << '\n';
        os << i << ',' << to_string(r.mode) << ",all," << r.rel_l2 << '\n';
    }
}

/// Paired table case,exact_rel_l2,predicted_rel_l2 followed by summary rows.
inline void write_comparison_csv(std::ostream& os, const InitComparison& c) {
    os << "case,exact_rel_l2,predicted_rel_l2\n" << std::setprecision(17);
    for (std::size_t i = 0; i < c.exact.size(); ++i) os << i << ',' << c.exact[i] << ',' << c.predicted[i] << '\n';
    if (c.exact.empty()) return;
    os << "mean," << c.exact_summary.mean << ',' << c.predicted_summary.mean << '\n';
    os << "std," << c.exact_summary.stddev << ',' << c.predicted_summary.stddev << '\n';
    os << "max," << c.exact_summary.max << ',' << c.predicted_summary.max << '\n';
}

}  // namespace dpn
