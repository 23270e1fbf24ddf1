#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dpn/dataset.hpp"

using namespace dpn;

namespace {

DatasetConfig small_config(CaseKind kind) {
    DatasetConfig c;
    c.kind = kind;
    c.n_cases = 3;
    c.n_modes = 2;
    c.speed_mode = 2;
    c.n_t = 20;
    c.n_x = 9;
    c.seed = 7;
    return c;
}

std::string serialize(const WaveDataset& ds) {
    std::ostringstream os(std::ios::binary);
    write_dataset(os, ds);
    return os.str();
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("dpn_test_" + name)).string();
}

}  // namespace

TEST(Dataset, ConstantSpeedCasesHaveDocumentedShapes) {
    const WaveDataset ds = build_dataset(small_config(CaseKind::constant_speed));
    ASSERT_EQ(ds.cases.size(), 3u);
    for (const auto& c : ds.cases) {
        EXPECT_EQ(c.coefficients.size(), 7u);
        EXPECT_EQ(c.signal.coeffs.shape(), (Shape{5, 20}));
        EXPECT_EQ(c.field.values.shape(), (Shape{9, 20}));
        for (double v : c.field.initial_u) EXPECT_EQ(v, 0.0);
        for (double v : c.field.initial_v) EXPECT_EQ(v, 0.0);
    }
}

TEST(Dataset, VariableSpeedSignalHasFourRowsPerMode) {
    const WaveDataset ds = build_dataset(small_config(CaseKind::variable_speed));
    EXPECT_EQ(ds.cases[0].signal.coeffs.dim(0), 8u);
    EXPECT_EQ(ds.cases[0].coefficients.size(), 2u);
    // u(x, 0) = sum c_m cos(2 m pi x)
    const auto& c = ds.cases[1];
    for (std::size_t k = 0; k < c.field.grid.n_x(); ++k) {
        const double x = c.field.grid.x[k];
        const double u = c.coefficients[0] * std::cos(kTwoPi * x) + c.coefficients[1] * std::cos(2 * kTwoPi * x);
        EXPECT_NEAR(c.field.initial_u[k], u, 1e-12);
    }
}

TEST(Dataset, ZeroCasesIsValidAndRoundTrips) {
    DatasetConfig cfg = small_config(CaseKind::constant_speed);
    cfg.n_cases = 0;
    const WaveDataset ds = build_dataset(cfg);
    EXPECT_TRUE(ds.cases.empty());
    std::istringstream is(serialize(ds));
    EXPECT_TRUE(read_dataset(is).cases.empty());
}

TEST(Dataset, SameSeedGivesByteIdenticalFiles) {
    const auto cfg = small_config(CaseKind::variable_speed);
    EXPECT_EQ(serialize(build_dataset(cfg)), serialize(build_dataset(cfg)));
    auto other = cfg;
    other.seed = 8;
    EXPECT_NE(serialize(build_dataset(cfg)), serialize(build_dataset(other)));
}

TEST(Dataset, ThreadCountDoesNotChangeContents) {
    auto cfg = small_config(CaseKind::constant_speed);
    cfg.n_cases = 5;
    const std::string one = serialize(build_dataset(cfg));
    cfg.threads = 3;
    EXPECT_EQ(one, serialize(build_dataset(cfg)));
}

TEST(Dataset, HeaderLineFollowsFormat) {
    const std::string bytes = serialize(build_dataset(small_config(CaseKind::constant_speed)));
    EXPECT_EQ(bytes.substr(0, bytes.find('\n')), "DPNDATA1 constant-speed 3 2 20 9 7");
}

TEST(Dataset, PayloadIsLittleEndianFloat64InDocumentedOrder) {
    const WaveDataset ds = build_dataset(small_config(CaseKind::constant_speed));
    const std::string bytes = serialize(ds);
    std::size_t pos = bytes.find('\n');
    pos = bytes.find('\n', pos + 1) + 1;
    auto read_at = [&](std::size_t index) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + index * 8 + b])) << (8 * b);
        return std::bit_cast<double>(bits);
    };
    EXPECT_EQ(read_at(0), ds.cases[0].coefficients[0]);
    EXPECT_EQ(read_at(7), ds.cases[0].field.grid.x[0]);
    EXPECT_EQ(read_at(7 + 9), ds.cases[0].signal.coeffs(0, 0));
    const std::size_t per_case = 7 + 9 + 5 * 20 + 9 + 9 + 9 * 20;
    EXPECT_EQ(bytes.size() - pos, 3 * per_case * 8);
    EXPECT_EQ(read_at(per_case - 1), ds.cases[0].field.values(8, 19));
}

TEST(Dataset, FileRoundTripIsBitExact) {
    auto cfg = small_config(CaseKind::variable_speed);
    cfg.sampling = XSampling::random;
    const WaveDataset ds = build_dataset(cfg);
    const std::string path = temp_path("roundtrip.dpn");
    save_dataset(ds, path);
    const WaveDataset back = load_dataset(path);
    std::filesystem::remove(path);
    EXPECT_EQ(serialize(back), serialize(ds));
    EXPECT_EQ(back.config.sampling, XSampling::random);
    EXPECT_EQ(back.cases[2].field.values, ds.cases[2].field.values);
}

TEST(Dataset, TruncatedFileIsAFormatError) {
    const std::string bytes = serialize(build_dataset(small_config(CaseKind::constant_speed)));
    std::istringstream is(bytes.substr(0, bytes.size() - 5));
    EXPECT_THROW(read_dataset(is), FormatError);
    std::istringstream bad("DPNDATA9 constant-speed 0 2 20 9 7\n");
    EXPECT_THROW(read_dataset(bad), FormatError);
}

TEST(Dataset, RandomSamplingStaysInDomain) {
    auto cfg = small_config(CaseKind::constant_speed);
    cfg.sampling = XSampling::random;
    const WaveDataset ds = build_dataset(cfg);
    for (const auto& c : ds.cases)
        for (double x : c.field.grid.x) {
            EXPECT_GE(x, cfg.x_lo);
            EXPECT_LT(x, cfg.x_hi);
        }
    EXPECT_NE(ds.cases[0].field.grid.x, ds.cases[1].field.grid.x);
}

TEST(Dataset, ResidualGateRejectsWithCaseIndex) {
    auto cfg = small_config(CaseKind::constant_speed);
    cfg.residual_tolerance = 1e-12;
    try {
        build_dataset(cfg);
        FAIL() << "expected a data error";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("case 0"), std::string::npos) << e.what();
    }
}

TEST(Dataset, GeneratedCasesPassTheResidualGate) {
    for (auto kind : {CaseKind::constant_speed, CaseKind::variable_speed}) {
        auto cfg = small_config(kind);
        cfg.n_modes = 10;
        cfg.speed_mode = 10;
        const auto rec = generate_case(cfg, 0).coefficients;
        EXPECT_LT(case_relative_residual(cfg, rec), cfg.residual_tolerance) << to_string(kind);
    }
}

TEST(Dataset, CaseStateMatchesGeneratedField) {
    for (auto kind : {CaseKind::constant_speed, CaseKind::variable_speed}) {
        const auto cfg = small_config(kind);
        const WaveCase c = generate_case(cfg, 1);
        const double t = c.field.grid.time(9);
        const auto [u, v] = case_state(cfg, c.coefficients, c.field.grid.x, t);
        for (std::size_t k = 0; k < u.size(); ++k) EXPECT_NEAR(u[k], c.field.values(k, 9), 1e-12);
        // velocity against a central difference of the exact field
        const double d = 1e-5;
        const auto up = case_state(cfg, c.coefficients, c.field.grid.x, t + d).first;
        const auto dn = case_state(cfg, c.coefficients, c.field.grid.x, t - d).first;
        for (std::size_t k = 0; k < v.size(); ++k) EXPECT_NEAR(v[k], (up[k] - dn[k]) / (2 * d), 1e-5 * (1 + std::abs(v[k])));
    }
}

TEST(Dataset, CsvExportListsEveryNode) {
    const WaveDataset ds = build_dataset(small_config(CaseKind::constant_speed));
    std::ostringstream os;
    export_case_csv(ds, 2, os);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "x,t,u");
    std::size_t rows = 0;
    while (std::getline(is, line)) ++rows;
    EXPECT_EQ(rows, 9u * 21u);
    EXPECT_THROW(export_case_csv(ds, 3, os), ConfigError);
}

TEST(Dataset, UnknownNamesAreConfigErrors) {
    EXPECT_THROW(parse_case_kind("case3"), ConfigError);
    EXPECT_THROW(parse_sampling("sobol"), ConfigError);
}
