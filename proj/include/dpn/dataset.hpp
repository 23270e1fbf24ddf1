#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dpn/errors.hpp"
#include "dpn/parallel.hpp"
#include "dpn/prng.hpp"
#include "dpn/wavegen.hpp"

namespace dpn {

enum class CaseKind { constant_speed, variable_speed };

inline std::string to_string(CaseKind kind) {
    return kind == CaseKind::constant_speed ? "constant-speed" : "variable-speed";
}

inline CaseKind parse_case_kind(const std::string& s) {
    if (s == "constant-speed" || s == "case1") return CaseKind::constant_speed;
    if (s == "variable-speed" || s == "case2") return CaseKind::variable_speed;
    throw ConfigError("unknown case kind '" + s + "' (expected constant-speed or variable-speed)");
}

enum class XSampling { uniform, random };

inline std::string to_string(XSampling s) { return s == XSampling::uniform ? "uniform" : "random"; }

inline XSampling parse_sampling(const std::string& s) {
    if (s == "uniform") return XSampling::uniform;
    if (s == "random") return XSampling::random;
    throw ConfigError("unknown x sampling '" + s + "' (expected uniform or random)");
}

struct DatasetConfig {
    CaseKind kind = CaseKind::constant_speed;
    std::size_t n_cases = 1000;
    std::size_t n_modes = 10;  // N for constant-speed, M for variable-speed
    int speed_mode = 10;       // n in c(x,t)² = cos(2nπ(t+x)) + 1
    double wave_speed = 2.0;   // constant-speed case
    std::size_t n_t = 400;
    std::size_t n_x = 400;
    double t_end = 1.0;
    double x_lo = -0.5;
    double x_hi = 1.0;
    XSampling sampling = XSampling::uniform;
    std::uint64_t seed = 42;
    // Gate: max |u_tt − c²u_xx − f| / max(1, max |f|) on the check grid.
    double residual_tolerance = 5e-2;
    std::size_t check_n_x = 201;  // over [x_lo, x_lo + 0.5]
    std::size_t check_n_t = 401;  // over (0, t_end]
    std::size_t threads = 1;

    std::size_t signal_rows() const {
        return kind == CaseKind::constant_speed ? basis_size(n_modes) : 4 * n_modes;
    }
    std::size_t record_length() const { return kind == CaseKind::constant_speed ? 2 * n_modes + 3 : n_modes; }

    void validate() const {
        if (n_t < 1 || n_x < 1) throw ConfigError("dataset grid needs n_t >= 1 and n_x >= 1");
        if (!(t_end > 0.0)) throw ConfigError("t_end must be positive");
        if (!(x_hi > x_lo)) throw ConfigError("x_hi must exceed x_lo");
        if (kind == CaseKind::variable_speed && (n_modes < 1 || speed_mode < 1)) {
            throw ConfigError("variable-speed data needs n_modes >= 1 and speed_mode >= 1");
        }
        if (kind == CaseKind::constant_speed && !(wave_speed > 0.0)) throw ConfigError("wave_speed must be positive");
    }
};

struct WaveCase {
    std::vector<double> coefficients;
    RhsSignal signal;
    WaveField field;
};

struct WaveDataset {
    DatasetConfig config;
    std::vector<WaveCase> cases;
};

// ---------------------------------------------------------------------------
// Case records and analytic evaluation
// ---------------------------------------------------------------------------

/// Coefficient record layout: constant-speed [a_1..a_N, b_1..b_N, c_0, c_1, c_2];
/// variable-speed [c_1..c_M].
inline Case1Record case1_record(const DatasetConfig& cfg, const std::vector<double>& coeffs) {
    const std::size_t n = cfg.n_modes;
    if (coeffs.size() != 2 * n + 3) throw FormatError("constant-speed record has wrong length");
    Case1Record r;
    r.wave_speed = cfg.wave_speed;
    r.a.assign(coeffs.begin(), coeffs.begin() + n);
    r.b.assign(coeffs.begin() + n, coeffs.begin() + 2 * n);
    std::copy(coeffs.begin() + 2 * n, coeffs.end(), r.c.begin());
    return r;
}

inline std::vector<double> flatten(const Case1Record& r) {
    std::vector<double> out(r.a);
    out.insert(out.end(), r.b.begin(), r.b.end());
    out.insert(out.end(), r.c.begin(), r.c.end());
    return out;
}

inline Case2Record case2_record(const DatasetConfig& cfg, const std::vector<double>& coeffs) {
    if (coeffs.size() != cfg.n_modes) throw FormatError("variable-speed record has wrong length");
    return Case2Record{coeffs, cfg.speed_mode};
}

inline WaveField case_field(const DatasetConfig& cfg, const std::vector<double>& coeffs, const SpaceTimeGrid& grid) {
    return cfg.kind == CaseKind::constant_speed ? generate_case1_field(case1_record(cfg, coeffs), grid)
                                                : generate_case2_field(case2_record(cfg, coeffs), grid);
}

inline RhsSignal case_signal(const DatasetConfig& cfg, const std::vector<double>& coeffs, const SpaceTimeGrid& grid) {
    return cfg.kind == CaseKind::constant_speed ? case1_signal(case1_record(cfg, coeffs), grid)
                                                : case2_signal(case2_record(cfg, coeffs), grid);
}

/// Exact (u, u_t) at points xs and time t.
inline std::pair<std::vector<double>, std::vector<double>> case_state(const DatasetConfig& cfg,
                                                                     const std::vector<double>& coeffs,
                                                                     std::span<const double> xs, double t) {
    if (cfg.kind == CaseKind::constant_speed) return case1_state(case1_record(cfg, coeffs), xs, t);
    const Case2Record r = case2_record(cfg, coeffs);
    std::vector<double> u(xs.size()), v(xs.size());
    for (std::size_t k = 0; k < xs.size(); ++k) {
        u[k] = case2_solution(r, xs[k], t);
        v[k] = case2_velocity(r, xs[k], t);
    }
    return {std::move(u), std::move(v)};
}

inline Fn2 case_rhs(const DatasetConfig& cfg, const std::vector<double>& coeffs) {
    if (cfg.kind == CaseKind::constant_speed) {
        return [r = case1_record(cfg, coeffs)](double x, double t) { return case1_rhs(r, x, t); };
    }
    return [r = case2_record(cfg, coeffs)](double x, double t) { return case2_rhs(r, x, t); };
}

inline Fn2 case_speed_squared(const DatasetConfig& cfg) {
    if (cfg.kind == CaseKind::constant_speed) {
        const double c2 = cfg.wave_speed * cfg.wave_speed;
        return [c2](double, double) { return c2; };
    }
    return [n = cfg.speed_mode](double x, double t) { return case2_speed_squared(n, x, t); };
}

/// Relative PDE residual of one case on the configured check grid.
inline double case_relative_residual(const DatasetConfig& cfg, const std::vector<double>& coeffs) {
    const SpaceTimeGrid check{cfg.t_end, cfg.check_n_t, uniform_points(cfg.x_lo, cfg.x_lo + 0.5, cfg.check_n_x)};
    const Fn2 rhs = case_rhs(cfg, coeffs);
    const ResidualReport rep = pde_residual_check(case_field(cfg, coeffs, check), case_speed_squared(cfg), rhs);
    double f_max = 1.0;
    for (std::size_t k = 1; k + 1 < check.n_x(); ++k)
        for (std::size_t j = 1; j + 1 < check.n_t; ++j) f_max = std::max(f_max, std::abs(rhs(check.x[k], check.time(j))));
    return rep.max_abs / f_max;
}

/// Case `index` of a run: draws from Prng::substream(seed, index), so cases
/// can be generated in any order.
inline WaveCase generate_case(const DatasetConfig& cfg, std::size_t index) {
    Prng rng = Prng::substream(cfg.seed, index);
    WaveCase c;
    if (cfg.kind == CaseKind::constant_speed) {
        c.coefficients = flatten(sample_case1(rng, cfg.n_modes, cfg.wave_speed));
    } else {
        c.coefficients = sample_case2(rng, cfg.n_modes, cfg.speed_mode).c;
    }
    SpaceTimeGrid grid{cfg.t_end, cfg.n_t, {}};
    if (cfg.sampling == XSampling::uniform) {
        grid.x = uniform_points(cfg.x_lo, cfg.x_hi, cfg.n_x);
    } else {
        grid.x.resize(cfg.n_x);
        for (double& x : grid.x) x = rng.uniform(cfg.x_lo, cfg.x_hi);
        std::sort(grid.x.begin(), grid.x.end());
    }
    c.signal = case_signal(cfg, c.coefficients, grid);
    c.field = case_field(cfg, c.coefficients, grid);
    return c;
}

/// Generates every case and validates each against the PDE before returning.
inline WaveDataset build_dataset(const DatasetConfig& cfg) {
    cfg.validate();
    WaveDataset ds;
    ds.config = cfg;
    ds.cases.resize(cfg.n_cases);
    std::vector<double> residuals(cfg.n_cases, 0.0);
    parallel_for(cfg.n_cases, cfg.threads, [&](std::size_t i) {
        ds.cases[i] = generate_case(cfg, i);
        residuals[i] = case_relative_residual(cfg, ds.cases[i].coefficients);
    });
    for (std::size_t i = 0; i < cfg.n_cases; ++i) {
        if (!(residuals[i] <= cfg.residual_tolerance)) {
            std::ostringstream os;
            os << "case " << i << " fails the PDE residual check: relative residual " << residuals[i]
               << " > tolerance " << cfg.residual_tolerance;
            throw DataError(os.str());
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Binary format
// ---------------------------------------------------------------------------
//
//   DPNDATA1 <case_kind> <N_cases> <N_modes> <N_t> <N_x> <seed>\n
//   META t_end=.. x_lo=.. x_hi=.. sampling=.. wave_speed=.. speed_mode=.. signal_rows=.. record_length=..\n
//   per case, little-endian float64:
//     record[record_length] x[N_x] signal[signal_rows][N_t] initial_u[N_x] initial_v[N_x] field[N_x][N_t]

inline constexpr const char* kDatasetMagic = "DPNDATA1";

namespace io {

inline void write_f64(std::ostream& os, std::span<const double> values) {
    std::vector<unsigned char> buf(values.size() * 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(values[i]);
        for (int b = 0; b < 8; ++b) buf[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

inline void read_f64(std::istream& is, std::span<double> out, const std::string& what) {
    std::vector<unsigned char> buf(out.size() * 8);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(is.gcount()) != buf.size()) throw FormatError("truncated file while reading " + what);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[i * 8 + b]) << (8 * b);
        out[i] = std::bit_cast<double>(bits);
    }
}

inline std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline std::map<std::string, std::string> parse_key_values(const std::string& line, const std::string& tag) {
    std::istringstream is(line);
    std::string head;
    is >> head;
    if (head != tag) throw FormatError("expected '" + tag + "' line, got '" + head + "'");
    std::map<std::string, std::string> kv;
    std::string token;
    while (is >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) throw FormatError("malformed key=value token '" + token + "'");
        kv[token.substr(0, eq)] = token.substr(eq + 1);
    }
    return kv;
}

inline const std::string& require_key(const std::map<std::string, std::string>& kv, const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("missing key '" + key + "'");
    return it->second;
}

inline double parse_double(const std::string& s) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw FormatError("bad number '" + s + "'");
        return v;
    } catch (const std::logic_error&) {
        throw FormatError("bad number '" + s + "'");
    }
}

inline std::uint64_t parse_u64(const std::string& s) {
    try {
        std::size_t pos = 0;
        const auto v = std::stoull(s, &pos);
        if (pos != s.size()) throw FormatError("bad integer '" + s + "'");
        return v;
    } catch (const std::logic_error&) {
        throw FormatError("bad integer '" + s + "'");
    }
}

}  // namespace io

inline void write_dataset(std::ostream& os, const WaveDataset& ds) {
    const auto& c = ds.config;
    os << kDatasetMagic << ' ' << to_string(c.kind) << ' ' << ds.cases.size() << ' ' << c.n_modes << ' ' << c.n_t << ' '
       << c.n_x << ' ' << c.seed << '\n';
    os << "META t_end=" << io::format_double(c.t_end) << " x_lo=" << io::format_double(c.x_lo)
       << " x_hi=" << io::format_double(c.x_hi) << " sampling=" << to_string(c.sampling)
       << " wave_speed=" << io::format_double(c.wave_speed) << " speed_mode=" << c.speed_mode
       << " signal_rows=" << c.signal_rows() << " record_length=" << c.record_length() << '\n';
    for (const auto& wc : ds.cases) {
        io::write_f64(os, wc.coefficients);
        io::write_f64(os, wc.field.grid.x);
        io::write_f64(os, wc.signal.coeffs.data());
        io::write_f64(os, wc.field.initial_u);
        io::write_f64(os, wc.field.initial_v);
        io::write_f64(os, wc.field.values.data());
    }
}

inline void save_dataset(const WaveDataset& ds, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open '" + path + "' for writing");
    write_dataset(os, ds);
    if (!os) throw FormatError("write to '" + path + "' failed");
}

/// Reads only the two header lines.
inline DatasetConfig read_dataset_header(std::istream& is, std::size_t* n_cases = nullptr) {
    std::string line;
    if (!std::getline(is, line)) throw FormatError("empty dataset file");
    std::istringstream hs(line);
    std::string magic, kind;
    std::uint64_t cases = 0, modes = 0, n_t = 0, n_x = 0, seed = 0;
    hs >> magic;
    if (magic != kDatasetMagic) throw FormatError("bad dataset magic '" + magic + "' (expected DPNDATA1)");
    if (!(hs >> kind >> cases >> modes >> n_t >> n_x >> seed)) throw FormatError("malformed dataset header");
    DatasetConfig c;
    c.kind = parse_case_kind(kind);
    c.n_cases = cases;
    c.n_modes = modes;
    c.n_t = n_t;
    c.n_x = n_x;
    c.seed = seed;
    if (!std::getline(is, line)) throw FormatError("missing META line");
    const auto kv = io::parse_key_values(line, "META");
    c.t_end = io::parse_double(io::require_key(kv, "t_end"));
    c.x_lo = io::parse_double(io::require_key(kv, "x_lo"));
    c.x_hi = io::parse_double(io::require_key(kv, "x_hi"));
    c.sampling = parse_sampling(io::require_key(kv, "sampling"));
    c.wave_speed = io::parse_double(io::require_key(kv, "wave_speed"));
    c.speed_mode = static_cast<int>(io::parse_u64(io::require_key(kv, "speed_mode")));
    if (io::parse_u64(io::require_key(kv, "signal_rows")) != c.signal_rows() ||
        io::parse_u64(io::require_key(kv, "record_length")) != c.record_length()) {
        throw FormatError("dataset META sizes disagree with the header");
    }
    if (c.n_t == 0 || c.n_x == 0) throw FormatError("dataset header has an empty grid");
    if (n_cases) *n_cases = cases;
    return c;
}

inline WaveDataset read_dataset(std::istream& is) {
    std::size_t n_cases = 0;
    WaveDataset ds;
    ds.config = read_dataset_header(is, &n_cases);
    const auto& c = ds.config;
    ds.cases.resize(n_cases);
    for (std::size_t i = 0; i < n_cases; ++i) {
        auto& wc = ds.cases[i];
        const std::string where = "case " + std::to_string(i);
        wc.coefficients.resize(c.record_length());
        io::read_f64(is, wc.coefficients, where + " record");
        wc.field.grid = SpaceTimeGrid{c.t_end, c.n_t, std::vector<double>(c.n_x)};
        io::read_f64(is, wc.field.grid.x, where + " x samples");
        wc.signal = RhsSignal{c.n_modes, Tensor({c.signal_rows(), c.n_t})};
        io::read_f64(is, wc.signal.coeffs.data(), where + " signal");
        wc.field.initial_u.resize(c.n_x);
        wc.field.initial_v.resize(c.n_x);
        io::read_f64(is, wc.field.initial_u, where + " initial_u");
        io::read_f64(is, wc.field.initial_v, where + " initial_v");
        wc.field.values = Tensor({c.n_x, c.n_t});
        io::read_f64(is, wc.field.values.data(), where + " field");
    }
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after the last case");
    return ds;
}

inline WaveDataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open dataset '" + path + "'");
    return read_dataset(is);
}

/// One case as CSV rows x,t,u (t = 0 rows come from initial_u).
inline void export_case_csv(const WaveDataset& ds, std::size_t index, std::ostream& os) {
    if (index >= ds.cases.size()) throw ConfigError("case index " + std::to_string(index) + " out of range");
    const WaveField& f = ds.cases[index].field;
    os << "x,t,u\n" << std::setprecision(17);
    for (std::size_t k = 0; k < f.grid.n_x(); ++k) {
        os << f.grid.x[k] << ',' << 0.0 << ',' << f.initial_u[k] << '\n';
        for (std::size_t j = 0; j < f.grid.n_t; ++j) os << f.grid.x[k] << ',' << f.grid.time(j) << ',' << f.values(k, j) << '\n';
    }
}

}  // namespace dpn
