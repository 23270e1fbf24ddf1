#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "dpn/propagator.hpp"

using namespace dpn;

namespace {

DatasetConfig case2_data(std::size_t cases, std::uint64_t seed) {
    DatasetConfig c;
    c.kind = CaseKind::variable_speed;
    c.n_cases = cases;
    c.n_modes = 2;
    c.speed_mode = 2;
    c.n_t = 20;
    c.n_x = 12;
    c.seed = seed;
    return c;
}

const BlockSchedule kSchedule{1.0, 4, 5};

PropNetModel small_propnet(std::uint64_t seed, std::size_t steps = 5) {
    PropNetConfig pc;
    pc.source.signal_rows = 8;
    pc.source.n_t = steps;
    pc.source.source_modes = 2;
    pc.source.solution_modes = 2;
    pc.source.branch_hidden = {16, 16};
    pc.source.trunk_hidden = {16, 16};
    pc.source.width = 12;
    pc.source.time_scale = 4.0;
    pc.sensor_x = sensor_points(-0.5, 1.0, 5);
    pc.ic_branch_hidden = {16};
    pc.ic_trunk_hidden = {16};
    PropNetModel m = make_propnet(pc, seed);
    // non-zero biases so every block output depends on its inputs
    Prng rng(seed ^ 0x33);
    for (Mlp* mlp : {&m.cpod.branch.mlp, &m.cpod.trunk.mlp, &m.ic_branch, &m.ic_trunk.mlp})
        for (auto& b : mlp->biases)
            for (double& v : b.data()) v = rng.uniform(-0.2, 0.2);
    return m;
}

Tensor ramp(std::size_t rows, std::size_t cols) {
    Tensor t({rows, cols});
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<double>(i);
    return t;
}

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    for (std::string l; std::getline(is, l);) out.push_back(l);
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Block schedule and restriction
// ---------------------------------------------------------------------------

TEST(Schedule, BlockBoundariesAreMultiplesOfTheBlockLength) {
    const BlockSchedule s;
    EXPECT_EQ(s.n_t(), 400u);
    for (std::size_t i = 0; i <= s.n_blocks; ++i) EXPECT_NEAR(s.block_start(i), 0.2 * i, 1e-15);
    const auto tau = s.local_times();
    ASSERT_EQ(tau.size(), 80u);
    EXPECT_NEAR(tau.front(), 1.0 / 400, 1e-17);
    EXPECT_NEAR(tau.back(), 0.2, 1e-15);
}

TEST(Schedule, GridMismatchIsAConfigError) {
    const BlockSchedule s{1.0, 3, 7};
    EXPECT_THROW(s.require_grid(20, 1.0), ConfigError);
    EXPECT_THROW(s.require_grid(21, 2.0), ConfigError);
    EXPECT_NO_THROW(s.require_grid(21, 1.0));
    EXPECT_THROW((BlockSchedule{1.0, 0, 5}).validate(), ConfigError);
}

TEST(Restrict, FullHorizonBlockIsTheIdentity) {
    const Tensor f = ramp(3, 12);
    EXPECT_EQ(restrict_signal(f, 0, BlockSchedule{1.0, 1, 12}), f);
}

TEST(Restrict, BlocksPartitionTheColumns) {
    const BlockSchedule s;
    const Tensor f = ramp(4, 400);
    std::vector<Tensor> parts;
    for (std::size_t b = 0; b < 5; ++b) {
        parts.push_back(restrict_signal(f, b, s));
        EXPECT_EQ(parts.back().shape(), (Shape{4, 80}));
    }
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t j = 0; j < 400; ++j) EXPECT_EQ(parts[j / 80](r, j % 80), f(r, j));
}

TEST(Restrict, OutOfRangeBlockAndWrongWidthAreRejected) {
    const Tensor f = ramp(2, 20);
    EXPECT_THROW(restrict_field(f, 4, kSchedule), ConfigError);
    EXPECT_THROW(restrict_field(ramp(2, 19), 0, kSchedule), DimensionError);
}

TEST(Sensors, EquispacedWithBothEnds) {
    const auto s = sensor_points(-0.5, 1.0, 4);
    ASSERT_EQ(s.size(), 4u);
    EXPECT_DOUBLE_EQ(s[0], -0.5);
    EXPECT_DOUBLE_EQ(s[1], 0.0);
    EXPECT_DOUBLE_EQ(s[3], 1.0);
    EXPECT_EQ(pack_ic({1, 2}, {3, 4}), (std::vector<double>{1, 2, 3, 4}));
}

// ---------------------------------------------------------------------------
// Rollout
// ---------------------------------------------------------------------------

TEST(Rollout, ExactInitEqualsIndependentBlockEvaluations) {
    const WaveDataset ds = build_dataset(case2_data(1, 3));
    const PropNetModel m = small_propnet(1);
    const WaveCase& c = ds.cases[0];
    const RolloutResult r = rollout_case(m, ds, 0, kSchedule, InitMode::exact);
    for (std::size_t b = 0; b < 4; ++b) {
        const auto [u, v] = case_state(ds.config, c.coefficients, m.config.sensor_x, 0.25 * b);
        const Tensor block = propnet_forward(m, pack_ic(u, v), restrict_signal(c.signal.coeffs, b, kSchedule),
                                             c.field.grid.x, kSchedule.local_times());
        EXPECT_EQ(restrict_field(r.field, b, kSchedule), block) << "block " << b;
        EXPECT_EQ(r.handoffs[b].u, u);
        EXPECT_EQ(r.handoffs[b].v, v);
    }
}

TEST(Rollout, PredictedHandOffsAreTheModelsOwnBlockEnd) {
    const WaveDataset ds = build_dataset(case2_data(1, 4));
    const PropNetModel m = small_propnet(2);
    const WaveCase& c = ds.cases[0];
    const RolloutResult r = rollout_case(m, ds, 0, kSchedule, InitMode::predicted);
    for (std::size_t b = 1; b < 4; ++b) {
        const auto& prev = r.handoffs[b - 1];
        const Tensor sig = restrict_signal(c.signal.coeffs, b - 1, kSchedule);
        const auto ic = pack_ic(prev.u, prev.v);
        EXPECT_EQ(r.handoffs[b].u, field_at(m, ic, sig, m.config.sensor_x, 0.25, 0.05));
        // backward difference through the three windows ending at the block end
        const auto u2 = field_at(m, ic, sig, m.config.sensor_x, 0.25, 0.05);
        const auto u1 = field_at(m, ic, sig, m.config.sensor_x, 0.20, 0.05);
        const auto u0 = field_at(m, ic, sig, m.config.sensor_x, 0.15, 0.05);
        for (std::size_t k = 0; k < u2.size(); ++k)
            EXPECT_NEAR(r.handoffs[b].v[k], (3 * u2[k] - 4 * u1[k] + u0[k]) / 0.1, 1e-9 * (1 + std::abs(u2[k])));
    }
}

TEST(Rollout, PredictedModeIgnoresTheReferenceField) {
    const WaveDataset ds = build_dataset(case2_data(1, 5));
    const PropNetModel m = small_propnet(3);
    const WaveCase& c = ds.cases[0];
    const auto [u0, v0] = case_state(ds.config, c.coefficients, m.config.sensor_x, 0.0);
    Tensor corrupt = c.field.values;
    for (double& v : corrupt.data()) v = -7.0 * v + 1.0;
    RolloutReference clean{&c.field.values, {}}, bad{&corrupt, {}};
    const auto a = rollout(m, c.signal.coeffs, c.field.grid.x, u0, v0, kSchedule, InitMode::predicted, clean);
    const auto b = rollout(m, c.signal.coeffs, c.field.grid.x, u0, v0, kSchedule, InitMode::predicted, bad);
    EXPECT_EQ(a.field, b.field);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(a.handoffs[i].u, b.handoffs[i].u);
    EXPECT_NE(a.rel_l2, b.rel_l2);
}

TEST(Rollout, SelfConsistentReferenceGivesZeroErrorAndMatchingHandOffs) {
    const WaveDataset ds = build_dataset(case2_data(1, 6));
    const PropNetModel m = small_propnet(4);
    const WaveCase& c = ds.cases[0];
    const auto [u0, v0] = case_state(ds.config, c.coefficients, m.config.sensor_x, 0.0);
    const auto pred = rollout(m, c.signal.coeffs, c.field.grid.x, u0, v0, kSchedule, InitMode::predicted);
    // a reference that the model reproduces exactly on every block
    RolloutReference ref;
    ref.field = &pred.field;
    ref.sensor_state = [&](double t) {
        const auto& h = pred.handoffs.at(static_cast<std::size_t>(std::lround(t / 0.25)));
        return std::make_pair(h.u, h.v);
    };
    for (InitMode mode : {InitMode::exact, InitMode::predicted}) {
        const auto r = rollout(m, c.signal.coeffs, c.field.grid.x, u0, v0, kSchedule, mode, ref);
        ASSERT_EQ(r.block_rel_l2.size(), 4u);
        for (double e : r.block_rel_l2) EXPECT_EQ(e, 0.0);
        EXPECT_EQ(r.rel_l2, 0.0);
        for (std::size_t b = 0; b < 4; ++b) EXPECT_EQ(r.handoffs[b].u, pred.handoffs[b].u);
    }
}

TEST(Rollout, NonFiniteHandOffNamesTheBlock) {
    const WaveDataset ds = build_dataset(case2_data(1, 7));
    const PropNetModel m = small_propnet(5);
    const WaveCase& c = ds.cases[0];
    RolloutReference ref;
    ref.sensor_state = [&](double t) {
        auto s = case_state(ds.config, c.coefficients, m.config.sensor_x, t);
        if (t > 0.6) s.second[2] = std::numeric_limits<double>::infinity();
        return s;
    };
    const std::vector<double> z(5, 0.0);
    try {
        rollout(m, c.signal.coeffs, c.field.grid.x, z, z, kSchedule, InitMode::exact, ref);
        FAIL() << "expected a numeric error";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("block 3"), std::string::npos) << e.what();
    }
}

TEST(Rollout, RejectsMismatchedSetups) {
    const WaveDataset ds = build_dataset(case2_data(1, 8));
    const WaveCase& c = ds.cases[0];
    const std::vector<double> z(5, 0.0);
    EXPECT_THROW(rollout(small_propnet(1, 4), c.signal.coeffs, c.field.grid.x, z, z, kSchedule, InitMode::predicted),
                 ConfigError);
    EXPECT_THROW(rollout(small_propnet(1), c.signal.coeffs, c.field.grid.x, z, z, kSchedule, InitMode::exact),
                 ConfigError);
    const Tensor wrong({3, 20});
    RolloutReference ref{&wrong, {}};
    EXPECT_THROW(
        rollout(small_propnet(1), c.signal.coeffs, c.field.grid.x, z, z, kSchedule, InitMode::predicted, ref),
        DimensionError);
}

TEST(Rollout, EvaluatesOutsideTheTrainingDomain) {
    const WaveDataset ds = build_dataset(case2_data(1, 9));
    const PropNetModel m = small_propnet(6);
    const WaveCase& c = ds.cases[0];
    const auto x = uniform_points(-10.0, 10.0, 41);
    Tensor reference({41, 20});
    for (std::size_t j = 0; j < 20; ++j) {
        const auto u = case_state(ds.config, c.coefficients, x, (j + 1) * 0.05).first;
        for (std::size_t k = 0; k < 41; ++k) reference(k, j) = u[k];
    }
    RolloutReference ref{&reference, {}};
    const auto [u0, v0] = case_state(ds.config, c.coefficients, m.config.sensor_x, 0.0);
    const auto r = rollout(m, c.signal.coeffs, x, u0, v0, kSchedule, InitMode::predicted, ref);
    EXPECT_EQ(r.field.shape(), (Shape{41, 20}));
    EXPECT_TRUE(all_finite(r.field.data()));
    EXPECT_TRUE(std::isfinite(r.rel_l2));
}

// ---------------------------------------------------------------------------
// Init-mode comparison and CSV exports
// ---------------------------------------------------------------------------

TEST(Compare, EmptyDatasetGivesAnEmptyTable) {
    const WaveDataset ds = build_dataset(case2_data(0, 1));
    const auto cmp = compare_init_modes(small_propnet(1), ds, kSchedule);
    EXPECT_TRUE(cmp.exact.empty());
    std::ostringstream os;
    write_comparison_csv(os, cmp);
    EXPECT_EQ(os.str(), "case,exact_rel_l2,predicted_rel_l2\n");
}

TEST(Compare, PairsMatchIndividualRolloutsAndThreadCount) {
    const WaveDataset ds = build_dataset(case2_data(3, 2));
    const PropNetModel m = small_propnet(7);
    const auto a = compare_init_modes(m, ds, kSchedule, {}, 1);
    const auto b = compare_init_modes(m, ds, kSchedule, {}, 2);
    EXPECT_EQ(a.exact, b.exact);
    EXPECT_EQ(a.predicted, b.predicted);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(a.exact[i], rollout_case(m, ds, i, kSchedule, InitMode::exact).rel_l2);
        EXPECT_EQ(a.predicted[i], rollout_case(m, ds, i, kSchedule, InitMode::predicted).rel_l2);
    }
    std::ostringstream os;
    write_comparison_csv(os, a);
    const auto l = lines(os.str());
    ASSERT_EQ(l.size(), 7u);
    EXPECT_EQ(l[4].substr(0, 5), "mean,");
    EXPECT_EQ(l[6].substr(0, 4), "max,");
}

TEST(Csv, RolloutRowsCoverEveryNode) {
    const WaveDataset ds = build_dataset(case2_data(1, 3));
    const PropNetModel m = small_propnet(8);
    const WaveCase& c = ds.cases[0];
    const auto r = rollout_case(m, ds, 0, kSchedule, InitMode::predicted);
    std::ostringstream os;
    write_rollout_csv(os, 0, r, c.field.grid.x, c.field.values, kSchedule);
    const auto l = lines(os.str());
    ASSERT_EQ(l.size(), 1 + 20u * 12u);
    EXPECT_EQ(l[0], "case,block,t,x,u_pred,u_exact,abs_err");
    EXPECT_EQ(l.back().substr(0, 6), "0,3,1,");

    std::ostringstream sum;
    write_rollout_summary_csv(sum, {{0, r}});
    const auto s = lines(sum.str());
    ASSERT_EQ(s.size(), 6u);
    EXPECT_EQ(s[1].substr(0, 12), "0,predicted,");
    EXPECT_EQ(s[5].substr(0, 16), "0,predicted,all,");
}

TEST(Modes, NamesRoundTrip) {
    for (InitMode m : {InitMode::exact, InitMode::predicted}) EXPECT_EQ(parse_init_mode(to_string(m)), m);
    EXPECT_THROW(parse_init_mode("oracle"), ConfigError);
}
