#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dpn/dataset.hpp"
#include "dpn/errors.hpp"
#include "dpn/metrics.hpp"
#include "dpn/models.hpp"
#include "dpn/propagator.hpp"
#include "dpn/training.hpp"

namespace dpn {

enum class ModelKind { cpod, propnet };

inline std::string to_string(ModelKind k) { return k == ModelKind::cpod ? "cpod" : "propnet"; }

inline ModelKind parse_model_kind(const std::string& s) {
    if (s == "cpod") return ModelKind::cpod;
    if (s == "propnet") return ModelKind::propnet;
    throw ConfigError("unknown model '" + s + "' (expected cpod or propnet)");
}

/// Every setting of an experiment run. Defaults follow the published
/// full-scale settings; the desk presets shrink them.
struct ExperimentConfig {
    // data
    CaseKind kind = CaseKind::constant_speed;
    std::size_t modes = 10;
    std::size_t speed_mode = 10;
    double wave_speed = 2.0;
    std::size_t n_t = 400;
    std::size_t n_x = 400;
    double t_end = 1.0;
    double x_lo = -0.5;
    double x_hi = 1.0;
    XSampling sampling = XSampling::uniform;
    std::size_t train_cases = 1000;
    std::size_t test_cases = 100;
    std::uint64_t train_seed = 42;
    std::uint64_t test_seed = 43;
    double residual_tolerance = 5e-2;

    // model
    ModelKind model = ModelKind::cpod;
    std::size_t solution_modes = 0;  // 0 means the same as modes
    std::vector<std::size_t> branch_hidden{128, 128, 128};
    std::vector<std::size_t> trunk_hidden{100, 100, 100};
    std::size_t width = 500;
    Activation activation = Activation::relu;
    double projection_gain = 0.1;
    std::size_t sensors = 100;
    std::vector<std::size_t> ic_branch_hidden{128, 128, 128};
    std::vector<std::size_t> ic_trunk_hidden{100, 100, 100};
    std::uint64_t init_seed = 1;

    // training
    std::size_t epochs = 500;
    std::size_t batch_size = 20;
    double learning_rate = 1e-4;
    std::uint64_t shuffle_seed = 0;
    std::size_t eval_every = 1;
    std::size_t predicted_init_epochs = 0;

    // block schedule
    std::size_t blocks = 5;
    std::size_t steps_per_block = 80;

    // rollout
    std::string init_mode = "both";  // exact, predicted or both
    DerivativeMode derivative = DerivativeMode::backward;
    double delta_fraction = 0.1;
    std::string rollout_cases = "0";  // comma list or "all"
    std::size_t eval_n_x = 0;         // 0 evaluates on the dataset's own x samples
    double eval_x_lo = -10.0;
    double eval_x_hi = 10.0;

    // files and execution
    std::string out_dir = "out";
    std::string train_data;  // empty: <out_dir>/train.dpn
    std::string test_data;   // empty: <out_dir>/test.dpn
    std::string dataset;     // eval/rollout input, empty: the test data
    std::string checkpoint;  // empty: <out_dir>/model.ckpt
    std::size_t threads = 1;
    bool deterministic = false;

    std::size_t effective_solution_modes() const { return solution_modes ? solution_modes : modes; }
    std::size_t effective_threads() const { return deterministic ? 1 : std::max<std::size_t>(threads, 1); }

    std::string out_path(const std::string& name) const { return (std::filesystem::path(out_dir) / name).string(); }
    std::string train_path() const { return train_data.empty() ? out_path("train.dpn") : train_data; }
    std::string test_path() const { return test_data.empty() ? out_path("test.dpn") : test_data; }
    std::string eval_path() const { return dataset.empty() ? test_path() : dataset; }
    std::string checkpoint_path() const { return checkpoint.empty() ? out_path("model.ckpt") : checkpoint; }

    BlockSchedule schedule() const { return {t_end, blocks, steps_per_block}; }

    RolloutOptions rollout_options() const { return {derivative, delta_fraction}; }

    DatasetConfig dataset_config(bool train) const {
        DatasetConfig d;
        d.kind = kind;
        d.n_cases = train ? train_cases : test_cases;
        d.n_modes = modes;
        d.speed_mode = speed_mode;
        d.wave_speed = wave_speed;
        d.n_t = n_t;
        d.n_x = n_x;
        d.t_end = t_end;
        d.x_lo = x_lo;
        d.x_hi = x_hi;
        d.sampling = sampling;
        d.seed = train ? train_seed : test_seed;
        d.residual_tolerance = residual_tolerance;
        d.threads = effective_threads();
        return d;
    }

    TrainConfig train_config() const {
        TrainConfig t;
        t.batch_size = batch_size;
        t.epochs = epochs;
        t.learning_rate = learning_rate;
        t.seed = shuffle_seed;
        t.eval_every = eval_every;
        t.threads = effective_threads();
        return t;
    }
};

// ---------------------------------------------------------------------------
// Key=value access
// ---------------------------------------------------------------------------

struct ConfigField {
    std::string key;
    std::string help;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    bool flag = false;  // boolean switch on the command line
};

namespace detail {

template <class F>
auto parse_or_config_error(const std::string& key, const std::string& value, F&& parse) {
    try {
        return parse(value);
    } catch (const FormatError&) {
        throw ConfigError("bad value '" + value + "' for " + key);
    }
}

inline std::size_t parse_count(const std::string& key, const std::string& v) {
    if (!v.empty() && v[0] == '-') throw ConfigError("bad value '" + v + "' for " + key + " (must be >= 0)");
    return parse_or_config_error(key, v, [](const std::string& s) { return io::parse_u64(s); });
}

inline std::vector<std::size_t> parse_count_list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    if (v.empty() || v == "-") return out;
    std::istringstream is(v);
    for (std::string tok; std::getline(is, tok, ',');) out.push_back(parse_count(key, tok));
    return out;
}

inline std::string join_list(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s.empty() ? "-" : s;
}

inline ConfigField count_field(std::string key, std::string help, std::size_t ExperimentConfig::*m) {
    return {key, std::move(help), [m](const ExperimentConfig& c) { return std::to_string(c.*m); },
            [m, key](ExperimentConfig& c, const std::string& v) { c.*m = parse_count(key, v); }};
}

inline ConfigField seed_field(std::string key, std::string help, std::uint64_t ExperimentConfig::*m) {
    return {key, std::move(help), [m](const ExperimentConfig& c) { return std::to_string(c.*m); },
            [m, key](ExperimentConfig& c, const std::string& v) { c.*m = parse_count(key, v); }};
}

inline ConfigField real_field(std::string key, std::string help, double ExperimentConfig::*m) {
    return {key, std::move(help), [m](const ExperimentConfig& c) { return io::format_double(c.*m); },
            [m, key](ExperimentConfig& c, const std::string& v) {
                c.*m = parse_or_config_error(key, v, [](const std::string& s) { return io::parse_double(s); });
            }};
}

inline ConfigField text_field(std::string key, std::string help, std::string ExperimentConfig::*m) {
    return {key, std::move(help), [m](const ExperimentConfig& c) { return c.*m; },
            [m](ExperimentConfig& c, const std::string& v) { c.*m = v; }};
}

inline ConfigField list_field(std::string key, std::string help, std::vector<std::size_t> ExperimentConfig::*m) {
    return {key, std::move(help), [m](const ExperimentConfig& c) { return join_list(c.*m); },
            [m, key](ExperimentConfig& c, const std::string& v) { c.*m = parse_count_list(key, v); }};
}

}  // namespace detail

/// All configuration keys in manifest order.
inline const std::vector<ConfigField>& config_fields() {
    using namespace detail;
    using C = ExperimentConfig;
    static const std::vector<ConfigField> fields = [] {
        std::vector<ConfigField> f;
        f.push_back({"case", "problem family: constant-speed or variable-speed",
                     [](const C& c) { return to_string(c.kind); },
                     [](C& c, const std::string& v) { c.kind = parse_case_kind(v); }});
        f.push_back(count_field("modes", "source modes N (constant speed) or initial-condition modes M", &C::modes));
        f.push_back(count_field("speed_mode", "wave-speed mode n (variable speed)", &C::speed_mode));
        f.push_back(real_field("wave_speed", "wave speed c (constant speed)", &C::wave_speed));
        f.push_back(count_field("n_t", "time samples per case", &C::n_t));
        f.push_back(count_field("n_x", "space samples per case", &C::n_x));
        f.push_back(real_field("t_end", "time horizon T", &C::t_end));
        f.push_back(real_field("x_lo", "lower end of the space domain", &C::x_lo));
        f.push_back(real_field("x_hi", "upper end of the space domain", &C::x_hi));
        f.push_back({"sampling", "x sampling: uniform or random",
                     [](const C& c) { return std::string(c.sampling == XSampling::uniform ? "uniform" : "random"); },
                     [](C& c, const std::string& v) { c.sampling = parse_sampling(v); }});
        f.push_back(count_field("train_cases", "training cases", &C::train_cases));
        f.push_back(count_field("test_cases", "test cases", &C::test_cases));
        f.push_back(seed_field("train_seed", "training data seed", &C::train_seed));
        f.push_back(seed_field("test_seed", "test data seed", &C::test_seed));
        f.push_back(real_field("residual_tolerance", "PDE residual gate for generated cases", &C::residual_tolerance));
        f.push_back({"model", "cpod or propnet", [](const C& c) { return to_string(c.model); },
                     [](C& c, const std::string& v) { c.model = parse_model_kind(v); }});
        f.push_back(count_field("solution_modes", "spatial Fourier modes of the output (0: same as modes)",
                                &C::solution_modes));
        f.push_back(list_field("branch_hidden", "hidden widths of the causal branch", &C::branch_hidden));
        f.push_back(list_field("trunk_hidden", "hidden widths of the time trunk", &C::trunk_hidden));
        f.push_back(count_field("width", "shared branch/trunk output width p", &C::width));
        f.push_back({"activation", "relu or tanh", [](const C& c) { return std::string(activation_name(c.activation)); },
                     [](C& c, const std::string& v) { c.activation = parse_activation(v); }});
        f.push_back(real_field("projection_gain", "initial scale of the output projections", &C::projection_gain));
        f.push_back(count_field("sensors", "initial-condition sensors (propnet)", &C::sensors));
        f.push_back(list_field("ic_branch_hidden", "hidden widths of the initial-condition branch", &C::ic_branch_hidden));
        f.push_back(list_field("ic_trunk_hidden", "hidden widths of the initial-condition trunk", &C::ic_trunk_hidden));
        f.push_back(seed_field("init_seed", "parameter initialisation seed", &C::init_seed));
        f.push_back(count_field("epochs", "training epochs (exact initial conditions for propnet)", &C::epochs));
        f.push_back(count_field("batch_size", "cases (or blocks) per batch", &C::batch_size));
        f.push_back(real_field("learning_rate", "Adam learning rate", &C::learning_rate));
        f.push_back(seed_field("shuffle_seed", "batch shuffle seed", &C::shuffle_seed));
        f.push_back(count_field("eval_every", "epochs between full train/test evaluations", &C::eval_every));
        f.push_back(count_field("predicted_init_epochs",
                                "extra propnet epochs whose block inputs come from the model's own rollout",
                                &C::predicted_init_epochs));
        f.push_back(count_field("blocks", "time blocks of the propagator schedule", &C::blocks));
        f.push_back(count_field("steps_per_block", "time samples per block", &C::steps_per_block));
        f.push_back(text_field("init_mode", "rollout initial conditions: exact, predicted or both", &C::init_mode));
        f.push_back({"derivative", "hand-off velocity: backward, central or exact",
                     [](const C& c) { return to_string(c.derivative); },
                     [](C& c, const std::string& v) { c.derivative = parse_derivative_mode(v); }});
        f.push_back(real_field("delta_fraction", "central-difference step as a fraction of the time step",
                               &C::delta_fraction));
        f.push_back(text_field("rollout_cases", "cases exported by rollout: comma list or all", &C::rollout_cases));
        f.push_back(count_field("eval_n_x", "rollout points on [eval_x_lo, eval_x_hi] (0: dataset x)", &C::eval_n_x));
        f.push_back(real_field("eval_x_lo", "lower end of the rollout evaluation domain", &C::eval_x_lo));
        f.push_back(real_field("eval_x_hi", "upper end of the rollout evaluation domain", &C::eval_x_hi));
        f.push_back(text_field("out_dir", "output directory", &C::out_dir));
        f.push_back(text_field("train_data", "training dataset path (default <out_dir>/train.dpn)", &C::train_data));
        f.push_back(text_field("test_data", "test dataset path (default <out_dir>/test.dpn)", &C::test_data));
        f.push_back(text_field("dataset", "dataset read by eval, rollout and compare-init (default test data)",
                               &C::dataset));
        f.push_back(text_field("checkpoint", "checkpoint path (default <out_dir>/model.ckpt)", &C::checkpoint));
        f.push_back(count_field("threads", "worker threads", &C::threads));
        f.push_back({"deterministic", "single-threaded reductions and zeroed timings",
                     [](const C& c) { return std::string(c.deterministic ? "true" : "false"); },
                     [](C& c, const std::string& v) {
                         if (v == "true" || v == "1") {
                             c.deterministic = true;
                         } else if (v == "false" || v == "0") {
                             c.deterministic = false;
                         } else {
                             throw ConfigError("bad value '" + v + "' for deterministic (expected true or false)");
                         }
                     },
                     true});
        return f;
    }();
    return fields;
}

inline void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
    for (const auto& f : config_fields()) {
        if (f.key == key) {
            f.set(c, value);
            return;
        }
    }
    throw ConfigError("unknown configuration key '" + key + "'");
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

/// Flat key=value text; '#' starts a comment.
inline void apply_config_text(ExperimentConfig& c, std::istream& is, const std::string& source) {
    std::size_t line_no = 0;
    for (std::string line; std::getline(is, line);) {
        ++line_no;
        line = trim(line.substr(0, line.find('#')));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key=value, got '" + line + "'");
        }
        set_config_value(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

inline void apply_config_file(ExperimentConfig& c, const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file '" + path + "'");
    apply_config_text(c, is, path);
}

/// Named starting points. "full-*" use the full-size settings,
/// "desk-*" the reduced single-core runs.
inline void apply_preset(ExperimentConfig& c, const std::string& name) {
    auto desk = [&](CaseKind kind) {
        c.kind = kind;
        c.modes = 5;
        c.speed_mode = 5;
        c.n_x = 100;
        c.train_cases = 200;
        c.test_cases = 50;
        c.learning_rate = 1e-3;
        c.eval_every = 10;
    };
    if (name == "full-case1") {
        c.kind = CaseKind::constant_speed;
    } else if (name == "full-case2") {
        c.kind = CaseKind::variable_speed;
    } else if (name == "full-propnet") {
        c.kind = CaseKind::variable_speed;
        c.model = ModelKind::propnet;
        c.predicted_init_epochs = 100;
    } else if (name == "desk-case1" || name == "desk-case2") {
        desk(name == "desk-case1" ? CaseKind::constant_speed : CaseKind::variable_speed);
        c.n_t = 100;
        c.epochs = 100;
    } else if (name == "desk-propnet") {
        desk(CaseKind::variable_speed);
        c.model = ModelKind::propnet;
        c.epochs = 50;
        c.predicted_init_epochs = 50;
    } else {
        throw ConfigError("unknown preset '" + name +
                          "' (expected full-case1, full-case2, full-propnet, desk-case1, desk-case2 or desk-propnet)");
    }
}

inline void write_config(std::ostream& os, const ExperimentConfig& c) {
    for (const auto& f : config_fields()) os << f.key << '=' << f.get(c) << '\n';
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

inline constexpr const char* kManifestMagic = "DPNMANIFEST1";

/// Resolved configuration plus inputs and outputs of one command. Contains
/// no timestamps, so deterministic reruns produce identical manifests.
inline void write_manifest(const ExperimentConfig& c, const std::string& command,
                           const std::vector<std::pair<std::string, std::string>>& extra) {
    std::ofstream os(c.out_path(command + ".manifest"));
    if (!os) throw FormatError("cannot write manifest in '" + c.out_dir + "'");
    os << kManifestMagic << "\ncommand=" << command << "\ndataset_format=" << kDatasetMagic
       << "\ncheckpoint_format=" << kCheckpointMagic << '\n';
    write_config(os, c);
    for (const auto& [k, v] : extra) os << k << '=' << v << '\n';
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

namespace detail {

inline void prepare_out_dir(const ExperimentConfig& c) {
    std::error_code ec;
    std::filesystem::create_directories(c.out_dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" + c.out_dir + "': " + ec.message());
}

template <class Write>
void write_file(const std::string& path, Write&& write) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open '" + path + "' for writing");
    write(os);
    if (!os) throw FormatError("write to '" + path + "' failed");
}

inline void echo_config(std::ostream& log, const ExperimentConfig& c, const std::string& command) {
    log << "# " << command << " with resolved configuration\n";
    write_config(log, c);
}

/// Rejects a dataset whose header disagrees with the configuration before
/// any data is read.
inline DatasetConfig check_dataset_header(const std::string& path, const ExperimentConfig& c) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open dataset '" + path + "'");
    const DatasetConfig h = read_dataset_header(is);
    auto mismatch = [&](const std::string& what, const std::string& file, const std::string& cfg) {
        if (file != cfg) {
            throw ConfigError("dataset '" + path + "' has " + what + "=" + file + " but the configuration asks for " +
                              cfg);
        }
    };
    mismatch("case", to_string(h.kind), to_string(c.kind));
    mismatch("modes", std::to_string(h.n_modes), std::to_string(c.modes));
    mismatch("n_t", std::to_string(h.n_t), std::to_string(c.n_t));
    mismatch("n_x", std::to_string(h.n_x), std::to_string(c.n_x));
    if (c.kind == CaseKind::variable_speed) {
        mismatch("speed_mode", std::to_string(h.speed_mode), std::to_string(c.speed_mode));
    }
    return h;
}

inline CpodConfig cpod_config(const ExperimentConfig& c, std::size_t n_t, double time_scale) {
    CpodConfig m;
    m.signal_rows = c.dataset_config(true).signal_rows();
    m.n_t = n_t;
    m.source_modes = c.modes;
    m.solution_modes = c.effective_solution_modes();
    m.branch_hidden = c.branch_hidden;
    m.trunk_hidden = c.trunk_hidden;
    m.width = c.width;
    m.activation = c.activation;
    m.time_scale = time_scale;
    m.projection_gain = c.projection_gain;
    return m;
}

inline CheckpointMeta train_meta(const ExperimentConfig& c, const TrainReport& r) {
    CheckpointMeta meta;
    meta["epochs"] = std::to_string(c.epochs);
    meta["predicted_init_epochs"] = std::to_string(c.model == ModelKind::propnet ? c.predicted_init_epochs : 0);
    meta["train_seed"] = std::to_string(c.train_seed);
    meta["init_seed"] = std::to_string(c.init_seed);
    meta["shuffle_seed"] = std::to_string(c.shuffle_seed);
    meta["learning_rate"] = io::format_double(c.learning_rate);
    meta["batch_size"] = std::to_string(c.batch_size);
    if (!r.epochs.empty()) {
        meta["final_train_rel_l2"] = io::format_double(r.epochs.back().train_rel_l2);
        meta["final_test_rel_l2"] = io::format_double(r.epochs.back().test_rel_l2);
    }
    return meta;
}

inline void append_report(TrainReport& into, const TrainReport& more) {
    const std::size_t offset = into.epochs.size();
    if (into.batches_per_epoch == 0) into.batches_per_epoch = more.batches_per_epoch;
    for (auto e : more.epochs) {
        e.epoch += offset;
        into.epochs.push_back(e);
    }
    into.batch_trace.insert(into.batch_trace.end(), more.batch_trace.begin(), more.batch_trace.end());
}

template <class Model>
TrainHooks<Model> progress_hooks(std::ostream& log, const std::string& phase) {
    TrainHooks<Model> h;
    h.after_epoch = [&log, phase](const EpochRecord& r) {
        if (std::isnan(r.train_rel_l2)) return;
        log << phase << " epoch " << r.epoch << " batch_rel_l2=" << r.batch_mean_rel_l2
            << " train_rel_l2=" << r.train_rel_l2 << " test_rel_l2=" << r.test_rel_l2 << '\n'
            << std::flush;
    };
    return h;
}

/// Schedule implied by a propnet checkpoint applied to a dataset grid.
inline BlockSchedule schedule_for(const PropNetModel& m, const DatasetConfig& d) {
    const std::size_t w = m.cpod.config.n_t;
    if (w == 0 || d.n_t % w != 0) {
        throw ConfigError("checkpoint blocks of " + std::to_string(w) + " steps do not tile the dataset's " +
                          std::to_string(d.n_t) + "-step grid");
    }
    return {d.t_end, d.n_t / w, w};
}

inline void check_signal_rows(std::size_t model_rows, const DatasetConfig& d) {
    if (model_rows != d.signal_rows()) {
        throw ConfigError("checkpoint expects " + std::to_string(model_rows) + " signal rows but the dataset has " +
                          std::to_string(d.signal_rows()));
    }
}

inline std::vector<std::size_t> parse_case_list(const std::string& text, std::size_t n_cases) {
    std::vector<std::size_t> out;
    if (text == "all") {
        for (std::size_t i = 0; i < n_cases; ++i) out.push_back(i);
        return out;
    }
    for (std::size_t i : parse_count_list("rollout_cases", text)) {
        if (i >= n_cases) {
            throw ConfigError("rollout case " + std::to_string(i) + " out of range (" + std::to_string(n_cases) +
                              " cases)");
        }
        out.push_back(i);
    }
    return out;
}

inline std::vector<InitMode> parse_init_modes(const std::string& text) {
    if (text == "both") return {InitMode::exact, InitMode::predicted};
    return {parse_init_mode(text)};
}

inline void write_summary_rows(std::ostream& os, const RelativeL2& r) {
    os << "mean," << r.mean << "\nstd," << r.stddev << "\nmax," << r.max << '\n';
}

}  // namespace detail

/// Generates the training and test datasets.
inline void cmd_gen_data(const ExperimentConfig& c, std::ostream& log) {
    detail::echo_config(log, c, "gen-data");
    detail::prepare_out_dir(c);
    const WaveDataset train = build_dataset(c.dataset_config(true));
    save_dataset(train, c.train_path());
    log << "wrote " << train.cases.size() << " training cases to " << c.train_path() << '\n';
    const WaveDataset test = build_dataset(c.dataset_config(false));
    save_dataset(test, c.test_path());
    log << "wrote " << test.cases.size() << " test cases to " << c.test_path() << '\n';
    write_manifest(c, "gen-data", {{"output.train", c.train_path()}, {"output.test", c.test_path()}});
}

/// Trains a model and writes the checkpoint and training reports.
inline TrainReport cmd_train(const ExperimentConfig& c, std::ostream& log) {
    detail::echo_config(log, c, "train");
    c.train_config().validate();
    detail::check_dataset_header(c.train_path(), c);
    const bool have_test = std::filesystem::exists(c.test_path());
    if (have_test) detail::check_dataset_header(c.test_path(), c);
    detail::prepare_out_dir(c);
    const WaveDataset train_ds = load_dataset(c.train_path());
    const WaveDataset test_ds = have_test ? load_dataset(c.test_path()) : WaveDataset{};
    const TrainConfig tc = c.train_config();
    const std::size_t modes = c.effective_solution_modes();

    TrainReport report;
    if (c.model == ModelKind::cpod) {
        CpodModel m = make_cpod(detail::cpod_config(c, c.n_t, 1.0 / c.t_end), c.init_seed);
        m.branch.input_scale = signal_scales(train_ds);
        SampleSet tr = cpod_samples(train_ds, modes);
        const SampleSet te = have_test ? cpod_samples(test_ds, modes) : SampleSet{};
        report = train(m, tr, have_test ? &te : nullptr, tc, detail::progress_hooks<CpodModel>(log, "train"));
        save_checkpoint(m, c.checkpoint_path(), detail::train_meta(c, report));
    } else {
        const BlockSchedule s = c.schedule();
        s.require_grid(c.n_t, c.t_end);
        if (c.sensors == 0) throw ConfigError("propnet needs at least one sensor");
        PropNetConfig pc;
        pc.source = detail::cpod_config(c, s.steps_per_block, 1.0 / s.block_length());
        pc.sensor_x = sensor_points(c.x_lo, c.x_hi, c.sensors);
        pc.ic_branch_hidden = c.ic_branch_hidden;
        pc.ic_trunk_hidden = c.ic_trunk_hidden;
        PropNetModel m = make_propnet(pc, c.init_seed);
        m.cpod.branch.input_scale = signal_scales(train_ds);
        SampleSet tr = propnet_samples(train_ds, s, pc.sensor_x, modes);
        const SampleSet te = have_test ? propnet_samples(test_ds, s, pc.sensor_x, modes) : SampleSet{};
        std::tie(m.u_scale, m.v_scale) = ic_scales(tr, c.sensors);
        report = train(m, tr, have_test ? &te : nullptr, tc, detail::progress_hooks<PropNetModel>(log, "exact-init"));
        if (c.predicted_init_epochs > 0) {
            TrainConfig ft = tc;
            ft.epochs = c.predicted_init_epochs;
            ft.seed = tc.seed + 1;
            auto hooks = detail::progress_hooks<PropNetModel>(log, "predicted-init");
            hooks.before_epoch = [&](std::size_t, PropNetModel& model) {
                refresh_predicted_inits(model, train_ds, s, tr, c.rollout_options(), tc.threads);
            };
            detail::append_report(report, train(m, tr, have_test ? &te : nullptr, ft, hooks));
        }
        save_checkpoint(m, c.checkpoint_path(), detail::train_meta(c, report));
    }
    log << "wrote checkpoint " << c.checkpoint_path() << '\n';
    detail::write_file(c.out_path("report.csv"), [&](std::ostream& os) { write_report_csv(os, report, c.deterministic); });
    detail::write_file(c.out_path("batch_trace.csv"), [&](std::ostream& os) { write_batch_trace_csv(os, report); });
    detail::write_file(c.out_path("epoch_aggregate.csv"),
                       [&](std::ostream& os) { write_epoch_aggregate_csv(os, report); });
    detail::write_file(c.out_path("timing.csv"), [&](std::ostream& os) { write_timing_csv(os, report); });
    write_manifest(c, "train",
                   {{"input.train", c.train_path()},
                    {"input.test", have_test ? c.test_path() : "-"},
                    {"output.checkpoint", c.checkpoint_path()}});
    return report;
}

/// Per-case relative L2 of a checkpoint on a dataset. Propnet cases are
/// scored block by block with exact initial conditions.
inline RelativeL2 cmd_eval(const ExperimentConfig& c, std::ostream& log) {
    detail::echo_config(log, c, "eval");
    detail::prepare_out_dir(c);
    const std::string kind = checkpoint_kind(c.checkpoint_path());
    const WaveDataset ds = load_dataset(c.eval_path());
    RelativeL2 r;
    if (kind == "cpod") {
        const CpodModel m = load_cpod_checkpoint(c.checkpoint_path());
        detail::check_signal_rows(m.config.signal_rows, ds.config);
        if (m.config.n_t != ds.config.n_t) {
            throw ConfigError("checkpoint expects " + std::to_string(m.config.n_t) + " time samples but the dataset has " +
                              std::to_string(ds.config.n_t));
        }
        r = evaluate(m, cpod_samples(ds, m.config.solution_modes), c.effective_threads());
    } else {
        const PropNetModel m = load_propnet_checkpoint(c.checkpoint_path());
        detail::check_signal_rows(m.cpod.config.signal_rows, ds.config);
        const BlockSchedule s = detail::schedule_for(m, ds.config);
        r = evaluate(m, propnet_samples(ds, s, m.config.sensor_x, m.cpod.config.solution_modes), c.effective_threads());
    }
    detail::write_file(c.out_path("eval.csv"), [&](std::ostream& os) {
        os << "case,rel_l2\n" << std::setprecision(17);
        for (std::size_t i = 0; i < r.per_case.size(); ++i) os << i << ',' << r.per_case[i] << '\n';
        if (!r.per_case.empty()) detail::write_summary_rows(os, r);
    });
    log << "relative L2 over " << r.per_case.size() << " cases: mean=" << r.mean << " std=" << r.stddev
        << " max=" << r.max << '\n';
    write_manifest(c, "eval", {{"input.checkpoint", c.checkpoint_path()}, {"input.dataset", c.eval_path()}});
    return r;
}

/// Block-by-block rollouts of selected cases with field and summary CSVs.
inline std::vector<std::pair<std::size_t, RolloutResult>> cmd_rollout(const ExperimentConfig& c, std::ostream& log) {
    detail::echo_config(log, c, "rollout");
    detail::prepare_out_dir(c);
    const PropNetModel m = load_propnet_checkpoint(c.checkpoint_path());
    const WaveDataset ds = load_dataset(c.eval_path());
    detail::check_signal_rows(m.cpod.config.signal_rows, ds.config);
    const BlockSchedule s = detail::schedule_for(m, ds.config);
    const auto cases = detail::parse_case_list(c.rollout_cases, ds.cases.size());
    const auto modes = detail::parse_init_modes(c.init_mode);
    if (c.eval_n_x > 0 && !(c.eval_x_hi > c.eval_x_lo)) throw ConfigError("eval_x_hi must exceed eval_x_lo");

    std::vector<std::pair<std::size_t, RolloutResult>> runs;
    std::map<InitMode, std::ofstream> fields;
    for (InitMode mode : modes) {
        const std::string path = c.out_path("rollout_" + to_string(mode) + ".csv");
        fields[mode].open(path, std::ios::binary);
        if (!fields[mode]) throw FormatError("cannot open '" + path + "' for writing");
    }
    for (std::size_t i : cases) {
        const WaveCase& wc = ds.cases[i];
        std::vector<double> x = wc.field.grid.x;
        Tensor reference = wc.field.values;
        if (c.eval_n_x > 0) {
            x = uniform_points(c.eval_x_lo, c.eval_x_hi, c.eval_n_x);
            reference = Tensor({x.size(), s.n_t()});
            for (std::size_t j = 0; j < s.n_t(); ++j) {
                const auto u = case_state(ds.config, wc.coefficients, x, static_cast<double>(j + 1) * s.step()).first;
                for (std::size_t k = 0; k < x.size(); ++k) reference(k, j) = u[k];
            }
        }
        RolloutReference ref;
        ref.field = &reference;
        ref.sensor_state = [&](double t) { return case_state(ds.config, wc.coefficients, m.config.sensor_x, t); };
        const auto [u0, v0] = ref.sensor_state(0.0);
        for (InitMode mode : modes) {
            RolloutResult r = rollout(m, wc.signal.coeffs, x, u0, v0, s, mode, ref, c.rollout_options());
            write_rollout_csv(fields[mode], i, r, x, reference, s, i == cases.front());
            log << "case " << i << ' ' << to_string(mode) << "-init relative L2 " << r.rel_l2 << '\n';
            runs.emplace_back(i, std::move(r));
        }
    }
    detail::write_file(c.out_path("rollout_summary.csv"), [&](std::ostream& os) { write_rollout_summary_csv(os, runs); });
    write_manifest(c, "rollout", {{"input.checkpoint", c.checkpoint_path()}, {"input.dataset", c.eval_path()}});
    return runs;
}

/// Paired exact-init and predicted-init errors over a whole dataset.
inline InitComparison cmd_compare_init(const ExperimentConfig& c, std::ostream& log) {
    detail::echo_config(log, c, "compare-init");
    detail::prepare_out_dir(c);
    const PropNetModel m = load_propnet_checkpoint(c.checkpoint_path());
    const WaveDataset ds = load_dataset(c.eval_path());
    detail::check_signal_rows(m.cpod.config.signal_rows, ds.config);
    const BlockSchedule s = detail::schedule_for(m, ds.config);
    const InitComparison cmp = compare_init_modes(m, ds, s, c.rollout_options(), c.effective_threads());
    detail::write_file(c.out_path("compare_init.csv"), [&](std::ostream& os) { write_comparison_csv(os, cmp); });
    log << "exact-init mean=" << cmp.exact_summary.mean << " std=" << cmp.exact_summary.stddev
        << "; predicted-init mean=" << cmp.predicted_summary.mean << " std=" << cmp.predicted_summary.stddev << '\n';
    write_manifest(c, "compare-init", {{"input.checkpoint", c.checkpoint_path()}, {"input.dataset", c.eval_path()}});
    return cmp;
}

// ---------------------------------------------------------------------------
// Exit codes
// ---------------------------------------------------------------------------

enum ExitCode : int {
    kExitOk = 0,
    kExitInternal = 1,
    kExitConfig = 2,
    kExitData = 3,
    kExitDivergence = 4,
};

/// Runs `body`, reporting a library error on `err` and mapping it to an exit code.
template <class Body>
int run_with_exit_code(Body&& body, std::ostream& err) {
    try {
        body();
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DimensionError& e) {
        err << "configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const FormatError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const NumericError& e) {
        err << "numeric divergence: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
}

}  // namespace dpn
