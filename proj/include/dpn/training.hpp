#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dpn/adam.hpp"
#include "dpn/dataset.hpp"
#include "dpn/errors.hpp"
#include "dpn/metrics.hpp"
#include "dpn/models.hpp"
#include "dpn/propagator.hpp"
#include "dpn/prng.hpp"

namespace dpn {

// ---------------------------------------------------------------------------
// Sample sets
// ---------------------------------------------------------------------------

/// Training examples plus the storage they point into. CPOD sets borrow
/// signals and targets from the dataset, which must outlive the set.
/// Propnet sets own one sample per (case, block).
struct SampleSet {
    std::vector<double> times;
    std::vector<Tensor> bases;
    std::vector<Tensor> signals, targets;  // owned (propnet only)
    std::vector<std::vector<double>> ics;  // owned (propnet only)
    std::vector<ModelSample> samples;
    std::vector<std::size_t> case_of;  // originating case of each sample
    std::vector<double> target_sq;     // ||target||^2 per sample
    std::size_t n_cases = 0;

    std::size_t size() const { return samples.size(); }
};

namespace detail {

// One basis per case, shared when the x samples coincide.
inline std::vector<std::size_t> build_bases(const WaveDataset& ds, std::size_t modes, std::vector<Tensor>& bases) {
    std::vector<std::size_t> which(ds.cases.size());
    for (std::size_t i = 0; i < ds.cases.size(); ++i) {
        const auto& x = ds.cases[i].field.grid.x;
        if (i > 0 && x == ds.cases[0].field.grid.x) {
            which[i] = which[0];
            continue;
        }
        which[i] = bases.size();
        bases.push_back(fourier_basis_matrix(x, modes));
    }
    return which;
}

inline void finish(SampleSet& set) {
    set.target_sq.resize(set.samples.size());
    for (std::size_t i = 0; i < set.samples.size(); ++i) set.target_sq[i] = sum_squares(set.samples[i].target->data());
}

}  // namespace detail

inline SampleSet cpod_samples(const WaveDataset& ds, std::size_t solution_modes) {
    SampleSet set;
    set.n_cases = ds.cases.size();
    const double h = ds.config.t_end / static_cast<double>(ds.config.n_t);
    for (std::size_t j = 0; j < ds.config.n_t; ++j) set.times.push_back(static_cast<double>(j + 1) * h);
    const auto which = detail::build_bases(ds, solution_modes, set.bases);
    for (std::size_t i = 0; i < ds.cases.size(); ++i) {
        set.samples.push_back({&ds.cases[i].signal.coeffs, &set.bases[which[i]], &ds.cases[i].field.values, {}});
        set.case_of.push_back(i);
    }
    detail::finish(set);
    return set;
}

/// Pooled block samples with exact initial conditions at each block start.
inline SampleSet propnet_samples(const WaveDataset& ds, const BlockSchedule& s, const std::vector<double>& sensors,
                                 std::size_t solution_modes) {
    s.require_grid(ds.config.n_t, ds.config.t_end);
    SampleSet set;
    set.n_cases = ds.cases.size();
    set.times = s.local_times();
    const auto which = detail::build_bases(ds, solution_modes, set.bases);
    const std::size_t n = ds.cases.size() * s.n_blocks;
    set.signals.reserve(n);
    set.targets.reserve(n);
    set.ics.reserve(n);
    for (std::size_t i = 0; i < ds.cases.size(); ++i) {
        const WaveCase& c = ds.cases[i];
        for (std::size_t b = 0; b < s.n_blocks; ++b) {
            set.signals.push_back(restrict_signal(c.signal.coeffs, b, s));
            set.targets.push_back(restrict_field(c.field.values, b, s));
            const auto [u, v] = case_state(ds.config, c.coefficients, sensors, s.block_start(b));
            set.ics.push_back(pack_ic(u, v));
            set.case_of.push_back(i);
        }
    }
    for (std::size_t q = 0; q < n; ++q) {
        set.samples.push_back({&set.signals[q], &set.bases[which[set.case_of[q]]], &set.targets[q], set.ics[q]});
    }
    detail::finish(set);
    return set;
}

/// Replaces each block's initial condition with the hand-off of a
/// predicted-init rollout of the current model (block 0 keeps the data).
inline void refresh_predicted_inits(const PropNetModel& model, const WaveDataset& ds, const BlockSchedule& s,
                                    SampleSet& set, const RolloutOptions& opt = {}, std::size_t threads = 1) {
    if (set.size() != ds.cases.size() * s.n_blocks) throw DimensionError("sample set does not match the dataset blocks");
    parallel_for(ds.cases.size(), threads, [&](std::size_t i) {
        const RolloutResult r = rollout_case(model, ds, i, s, InitMode::predicted, opt);
        for (std::size_t b = 1; b < s.n_blocks; ++b) {
            const auto ic = pack_ic(r.handoffs[b].u, r.handoffs[b].v);
            std::copy(ic.begin(), ic.end(), set.ics[i * s.n_blocks + b].begin());
        }
    });
}

// ---------------------------------------------------------------------------
// Fixed input normalisation
// ---------------------------------------------------------------------------

inline double inverse_rms(double sum_sq, std::size_t count) {
    const double rms = count ? std::sqrt(sum_sq / static_cast<double>(count)) : 0.0;
    return rms > 1e-12 ? 1.0 / rms : 1.0;
}

/// Per-row 1/rms of the signal over every case and time.
inline std::vector<double> signal_scales(const WaveDataset& ds) {
    const std::size_t rows = ds.config.signal_rows();
    std::vector<double> sq(rows, 0.0);
    for (const auto& c : ds.cases)
        for (std::size_t r = 0; r < rows; ++r) sq[r] += sum_squares(c.signal.coeffs.row(r));
    std::vector<double> scale(rows);
    for (std::size_t r = 0; r < rows; ++r) scale[r] = inverse_rms(sq[r], ds.cases.size() * ds.config.n_t);
    return scale;
}

/// 1/rms of u and of v over the initial conditions of a propnet sample set.
inline std::pair<double, double> ic_scales(const SampleSet& set, std::size_t sensors) {
    double su = 0.0, sv = 0.0;
    for (const auto& ic : set.ics) {
        for (std::size_t k = 0; k < sensors; ++k) {
            su += ic[k] * ic[k];
            sv += ic[sensors + k] * ic[sensors + k];
        }
    }
    const std::size_t n = set.ics.size() * sensors;
    return {inverse_rms(su, n), inverse_rms(sv, n)};
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

inline double model_loss(const CpodModel& m, std::span<const ModelSample> batch, std::span<const double> times,
                         CpodModel* grad, std::size_t threads, std::vector<double>* sq) {
    return cpod_loss(m, batch, times, grad, nullptr, threads, sq);
}

inline double model_loss(const PropNetModel& m, std::span<const ModelSample> batch, std::span<const double> times,
                         PropNetModel* grad, std::size_t threads, std::vector<double>* sq) {
    return propnet_loss(m, batch, times, grad, nullptr, threads, sq);
}

/// Per-case relative L2 over the set; a case split into blocks sums its
/// block norms before dividing.
template <class Model>
RelativeL2 evaluate(const Model& m, const SampleSet& set, std::size_t threads = 1) {
    if (set.size() == 0) return summarize_relative_l2({});
    std::vector<double> sq;
    model_loss(m, set.samples, set.times, nullptr, threads, &sq);
    std::vector<std::vector<double>> en(set.n_cases), tn(set.n_cases);
    for (std::size_t q = 0; q < set.size(); ++q) {
        en[set.case_of[q]].push_back(std::sqrt(sq[q]));
        tn[set.case_of[q]].push_back(std::sqrt(set.target_sq[q]));
    }
    std::vector<double> per(set.n_cases);
    for (std::size_t i = 0; i < set.n_cases; ++i) per[i] = block_relative_l2(en[i], tn[i]);
    return summarize_relative_l2(std::move(per));
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
    std::size_t batch_size = 20;
    std::size_t epochs = 500;
    double learning_rate = 1e-4;
    std::uint64_t seed = 0;
    std::size_t eval_every = 1;  // epochs between full train/test evaluations
    std::size_t threads = 1;

    void validate() const {
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
        if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    }
};

struct EpochRecord {
    std::size_t epoch = 0;               // 1-based
    double train_rel_l2 = std::nan("");  // full training set, end of epoch
    double test_rel_l2 = std::nan("");
    double batch_mean_rel_l2 = 0.0;  // mean of the per-batch values below
    double seconds = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    // Relative L2 of each batch under the parameters that batch was trained
    // with, epoch-major.
    std::vector<double> batch_trace;
    std::size_t batches_per_epoch = 0;
};

template <class Model>
struct TrainHooks {
    std::function<void(std::size_t epoch, Model&)> before_epoch;  // epoch is 0-based
    std::function<void(const EpochRecord&)> after_epoch;
};

inline std::vector<Tensor*> model_parameters(CpodModel& m) { return parameters(m); }
inline std::vector<Tensor*> model_parameters(PropNetModel& m) { return parameters(m); }

template <class Model>
TrainReport train(Model& model, SampleSet& train_set, const SampleSet* test_set, const TrainConfig& cfg,
                  const TrainHooks<Model>& hooks = {}) {
    cfg.validate();
    TrainReport report;
    if (cfg.epochs == 0) return report;
    if (train_set.size() == 0) throw DataError("cannot train on an empty dataset");
    const std::size_t n = train_set.size();
    const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
    report.batches_per_epoch = batches;

    Model grad = zeros_like(model);
    const auto params = model_parameters(model);
    const auto grads_mut = model_parameters(grad);
    const std::vector<const Tensor*> grads(grads_mut.begin(), grads_mut.end());
    AdamState adam;
    adam.learning_rate = cfg.learning_rate;
    Prng rng = Prng::substream(cfg.seed, 0x7261696eULL);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<ModelSample> batch;
    std::vector<double> sq;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        if (hooks.before_epoch) hooks.before_epoch(epoch, model);
        shuffle(order, rng);
        double batch_sum = 0.0;
        for (std::size_t b = 0; b < batches; ++b) {
            const std::size_t lo = b * cfg.batch_size, hi = std::min(n, lo + cfg.batch_size);
            batch.clear();
            for (std::size_t q = lo; q < hi; ++q) batch.push_back(train_set.samples[order[q]]);
            double loss = 0.0;
            try {
                loss = model_loss(model, batch, train_set.times, &grad, cfg.threads, &sq);
            } catch (const NumericError& e) {
                throw NumericError("epoch " + std::to_string(epoch + 1) + " batch " + std::to_string(b + 1) + ": " +
                                   e.what());
            }
            if (!std::isfinite(loss)) {
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch + 1) + " batch " +
                                   std::to_string(b + 1));
            }
            double rel = 0.0;
            std::size_t counted = 0;
            for (std::size_t q = 0; q < batch.size(); ++q) {
                const double t = train_set.target_sq[order[lo + q]];
                if (t > 0.0) {
                    rel += std::sqrt(sq[q] / t);
                    ++counted;
                }
            }
            rel = counted ? rel / static_cast<double>(counted) : std::nan("");
            report.batch_trace.push_back(rel);
            batch_sum += rel;
            adam_step(params, grads, adam);
            for (Tensor* g : grads_mut) g->fill(0.0);
        }
        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.batch_mean_rel_l2 = batch_sum / static_cast<double>(batches);
        if ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs) {
            rec.train_rel_l2 = evaluate(model, train_set, cfg.threads).mean;
            if (test_set && test_set->size() > 0) rec.test_rel_l2 = evaluate(model, *test_set, cfg.threads).mean;
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        report.epochs.push_back(rec);
        if (hooks.after_epoch) hooks.after_epoch(rec);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Report CSVs
// ---------------------------------------------------------------------------

/// epoch,train_rel_l2,test_rel_l2,seconds. With `zero_seconds` the timing
/// column is written as 0 so the file is reproducible byte for byte.
inline void write_report_csv(std::ostream& os, const TrainReport& r, bool zero_seconds = false) {
    os << "epoch,train_rel_l2,test_rel_l2,seconds\n" << std::setprecision(17);
    for (const auto& e : r.epochs) {
        os << e.epoch << ',' << e.train_rel_l2 << ',' << e.test_rel_l2 << ',' << (zero_seconds ? 0.0 : e.seconds)
           << '\n';
    }
}

inline void write_batch_trace_csv(std::ostream& os, const TrainReport& r) {
    os << "epoch,batch,rel_l2\n" << std::setprecision(17);
    for (std::size_t i = 0; i < r.batch_trace.size(); ++i) {
        os << i / r.batches_per_epoch + 1 << ',' << i % r.batches_per_epoch + 1 << ',' << r.batch_trace[i] << '\n';
    }
}

inline void write_epoch_aggregate_csv(std::ostream& os, const TrainReport& r) {
    os << "epoch,batch_mean_rel_l2\n" << std::setprecision(17);
    for (const auto& e : r.epochs) os << e.epoch << ',' << e.batch_mean_rel_l2 << '\n';
}

inline void write_timing_csv(std::ostream& os, const TrainReport& r) {
    os << "epoch,seconds\n" << std::setprecision(17);
    for (const auto& e : r.epochs) os << e.epoch << ',' << e.seconds << '\n';
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------
//
//   DPNCKPT1 <kind>\n
//   key=value lines (architecture, payload length, meta.* entries)\n
//   END\n
//   little-endian float64 payload:
//     time_scale, input_scale[rows], [u_scale, v_scale, sensor_x[sensors]],
//     parameters in declaration order

inline constexpr const char* kCheckpointMagic = "DPNCKPT1";

using CheckpointMeta = std::map<std::string, std::string>;

namespace detail {

inline std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s.empty() ? "-" : s;
}

inline std::vector<std::size_t> split_sizes(const std::string& s) {
    std::vector<std::size_t> out;
    if (s == "-") return out;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ',')) out.push_back(io::parse_u64(tok));
    return out;
}

inline void write_cpod_header(std::ostream& os, const CpodConfig& c) {
    os << "activation=" << activation_name(c.activation) << "\nsignal_rows=" << c.signal_rows << "\nn_t=" << c.n_t
       << "\nsource_modes=" << c.source_modes << "\nsolution_modes=" << c.solution_modes
       << "\nbranch_hidden=" << join_sizes(c.branch_hidden) << "\ntrunk_hidden=" << join_sizes(c.trunk_hidden)
       << "\nwidth=" << c.width << '\n';
}

inline CpodConfig read_cpod_header(const std::map<std::string, std::string>& kv) {
    CpodConfig c;
    c.activation = parse_activation(io::require_key(kv, "activation"));
    c.signal_rows = io::parse_u64(io::require_key(kv, "signal_rows"));
    c.n_t = io::parse_u64(io::require_key(kv, "n_t"));
    c.source_modes = io::parse_u64(io::require_key(kv, "source_modes"));
    c.solution_modes = io::parse_u64(io::require_key(kv, "solution_modes"));
    c.branch_hidden = split_sizes(io::require_key(kv, "branch_hidden"));
    c.trunk_hidden = split_sizes(io::require_key(kv, "trunk_hidden"));
    c.width = io::parse_u64(io::require_key(kv, "width"));
    return c;
}

inline std::size_t parameter_count(const std::vector<const Tensor*>& ps) {
    std::size_t n = 0;
    for (const Tensor* p : ps) n += p->size();
    return n;
}

inline void write_payload(std::ostream& os, const std::vector<double>& head, const std::vector<const Tensor*>& ps) {
    io::write_f64(os, head);
    for (const Tensor* p : ps) io::write_f64(os, p->data());
}

inline void read_payload(std::istream& is, std::vector<double>& head, const std::vector<Tensor*>& ps) {
    io::read_f64(is, head, "checkpoint header values");
    for (std::size_t i = 0; i < ps.size(); ++i) io::read_f64(is, ps[i]->data(), "checkpoint tensor " + std::to_string(i));
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after the checkpoint payload");
}

struct CheckpointHeader {
    std::string kind;
    std::map<std::string, std::string> kv;
    CheckpointMeta meta;
};

inline CheckpointHeader read_checkpoint_header(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw FormatError("empty checkpoint file");
    std::istringstream hs(line);
    CheckpointHeader h;
    std::string magic;
    hs >> magic >> h.kind;
    if (magic != kCheckpointMagic) throw FormatError("bad checkpoint magic '" + magic + "' (expected DPNCKPT1)");
    while (true) {
        if (!std::getline(is, line)) throw FormatError("checkpoint header is not terminated by END");
        if (line == "END") break;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("malformed checkpoint header line '" + line + "'");
        const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        if (key.rfind("meta.", 0) == 0) {
            h.meta[key.substr(5)] = value;
        } else {
            h.kv[key] = value;
        }
    }
    return h;
}

inline void require_kind(const CheckpointHeader& h, const std::string& expected) {
    if (h.kind != expected) {
        throw FormatError("checkpoint holds a " + h.kind + " model but a " + expected + " model was requested");
    }
}

inline void write_meta(std::ostream& os, const CheckpointMeta& meta) {
    for (const auto& [k, v] : meta) {
        if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
            throw ConfigError("checkpoint metadata key/value may not contain '=' or newlines: " + k);
        }
        os << "meta." << k << '=' << v << '\n';
    }
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const CpodModel& m, const CheckpointMeta& meta = {}) {
    const auto ps = parameters(m);
    os << kCheckpointMagic << " cpod\nformat=1\n";
    detail::write_cpod_header(os, m.config);
    os << "parameters=" << detail::parameter_count(ps) << '\n';
    detail::write_meta(os, meta);
    os << "END\n";
    std::vector<double> head{m.trunk.time_scale};
    head.insert(head.end(), m.branch.input_scale.begin(), m.branch.input_scale.end());
    detail::write_payload(os, head, ps);
}

inline void write_checkpoint(std::ostream& os, const PropNetModel& m, const CheckpointMeta& meta = {}) {
    const auto ps = parameters(m);
    os << kCheckpointMagic << " propnet\nformat=1\n";
    detail::write_cpod_header(os, m.config.source);
    os << "sensors=" << m.sensor_count() << "\nic_branch_hidden=" << detail::join_sizes(m.config.ic_branch_hidden)
       << "\nic_trunk_hidden=" << detail::join_sizes(m.config.ic_trunk_hidden)
       << "\nparameters=" << detail::parameter_count(ps) << '\n';
    detail::write_meta(os, meta);
    os << "END\n";
    std::vector<double> head{m.cpod.trunk.time_scale};
    head.insert(head.end(), m.cpod.branch.input_scale.begin(), m.cpod.branch.input_scale.end());
    head.push_back(m.u_scale);
    head.push_back(m.v_scale);
    head.insert(head.end(), m.config.sensor_x.begin(), m.config.sensor_x.end());
    detail::write_payload(os, head, ps);
}

inline CpodModel read_cpod_checkpoint(std::istream& is, CheckpointMeta* meta = nullptr) {
    const auto h = detail::read_checkpoint_header(is);
    detail::require_kind(h, "cpod");
    CpodConfig cfg = detail::read_cpod_header(h.kv);
    std::vector<double> head(1 + cfg.signal_rows);
    CpodModel m = make_cpod_shape(cfg);
    const auto ps = parameters(m);
    if (io::parse_u64(io::require_key(h.kv, "parameters")) != detail::parameter_count(parameters(std::as_const(m)))) {
        throw FormatError("checkpoint parameter count disagrees with its architecture");
    }
    detail::read_payload(is, head, ps);
    if (!(head[0] > 0.0)) throw FormatError("checkpoint time scale must be positive");
    m.config.time_scale = m.trunk.time_scale = head[0];
    m.branch.input_scale.assign(head.begin() + 1, head.end());
    if (meta) *meta = h.meta;
    return m;
}

inline PropNetModel read_propnet_checkpoint(std::istream& is, CheckpointMeta* meta = nullptr) {
    const auto h = detail::read_checkpoint_header(is);
    detail::require_kind(h, "propnet");
    PropNetConfig cfg;
    cfg.source = detail::read_cpod_header(h.kv);
    const std::size_t sensors = io::parse_u64(io::require_key(h.kv, "sensors"));
    if (sensors == 0) throw FormatError("checkpoint has no sensors");
    cfg.sensor_x.assign(sensors, 0.0);
    cfg.ic_branch_hidden = detail::split_sizes(io::require_key(h.kv, "ic_branch_hidden"));
    cfg.ic_trunk_hidden = detail::split_sizes(io::require_key(h.kv, "ic_trunk_hidden"));
    PropNetModel m = make_propnet_shape(cfg);
    if (io::parse_u64(io::require_key(h.kv, "parameters")) != detail::parameter_count(parameters(std::as_const(m)))) {
        throw FormatError("checkpoint parameter count disagrees with its architecture");
    }
    std::vector<double> head(1 + cfg.source.signal_rows + 2 + sensors);
    detail::read_payload(is, head, parameters(m));
    const double ts = head[0];
    if (!(ts > 0.0)) throw FormatError("checkpoint time scale must be positive");
    m.config.source.time_scale = m.cpod.config.time_scale = m.cpod.trunk.time_scale = m.ic_trunk.time_scale = ts;
    const std::size_t rows = cfg.source.signal_rows;
    m.cpod.branch.input_scale.assign(head.begin() + 1, head.begin() + 1 + rows);
    m.u_scale = head[1 + rows];
    m.v_scale = head[2 + rows];
    m.config.sensor_x.assign(head.begin() + 3 + rows, head.end());
    if (meta) *meta = h.meta;
    return m;
}

/// Model kind recorded in a checkpoint file ("cpod" or "propnet").
inline std::string checkpoint_kind(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open checkpoint '" + path + "'");
    return detail::read_checkpoint_header(is).kind;
}

template <class Model>
void save_checkpoint(const Model& m, const std::string& path, const CheckpointMeta& meta = {}) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open '" + path + "' for writing");
    write_checkpoint(os, m, meta);
    if (!os) throw FormatError("write to '" + path + "' failed");
}

inline CpodModel load_cpod_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open checkpoint '" + path + "'");
    return read_cpod_checkpoint(is, meta);
}

inline PropNetModel load_propnet_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open checkpoint '" + path + "'");
    return read_propnet_checkpoint(is, meta);
}

}  // namespace dpn
