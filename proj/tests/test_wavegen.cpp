#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "dpn/prng.hpp"
#include "dpn/wavegen.hpp"

using namespace dpn;

namespace {

// Classical RK4 on A'' + ω²A = F(t), A(0) = A'(0) = 0. Test-only oracle for
// the per-mode Duhamel amplitudes.
std::pair<double, double> rk4_mode(double omega, const std::function<double(double)>& forcing, double t_end,
                                   std::size_t steps) {
    double a = 0.0, v = 0.0;
    const double h = t_end / static_cast<double>(steps);
    const auto acc = [&](double t, double x) { return forcing(t) - omega * omega * x; };
    for (std::size_t i = 0; i < steps; ++i) {
        const double t = static_cast<double>(i) * h;
        const double k1a = v, k1v = acc(t, a);
        const double k2a = v + 0.5 * h * k1v, k2v = acc(t + 0.5 * h, a + 0.5 * h * k1a);
        const double k3a = v + 0.5 * h * k2v, k3v = acc(t + 0.5 * h, a + 0.5 * h * k2a);
        const double k4a = v + h * k3v, k4v = acc(t + h, a + h * k3a);
        a += h / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a);
        v += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
    }
    return {a, v};
}

Case1Record zero_case1(std::size_t modes) {
    Case1Record r;
    r.a.assign(modes, 0.0);
    r.b.assign(modes, 0.0);
    return r;
}

const Fn1 kZero1 = [](double) { return 0.0; };

}  // namespace

TEST(FourierBasis, KnownValues) {
    const auto at0 = fourier_basis(0.0, 1);
    ASSERT_EQ(at0.size(), 3u);
    EXPECT_EQ(at0[0], 1.0);
    EXPECT_EQ(at0[1], 1.0);
    EXPECT_EQ(at0[2], 0.0);
    const auto quarter = fourier_basis(0.25, 1);
    EXPECT_EQ(quarter[0], 1.0);
    EXPECT_NEAR(quarter[1], 0.0, 1e-15);
    EXPECT_NEAR(quarter[2], 1.0, 1e-15);
    EXPECT_EQ(fourier_basis(0.3, 10).size(), 21u);
    EXPECT_EQ(fourier_basis(0.3, 0).size(), 1u);
}

TEST(FourierBasis, OrderIsCosThenSinPerMode) {
    const double x = 0.137;
    const auto b = fourier_basis(x, 3);
    for (int m = 1; m <= 3; ++m) {
        EXPECT_DOUBLE_EQ(b[2 * m - 1], std::cos(2 * kPi * m * x));
        EXPECT_DOUBLE_EQ(b[2 * m], std::sin(2 * kPi * m * x));
    }
}

TEST(Case1, ZeroDrawsGiveZeroSignal) {
    const SpaceTimeGrid grid{1.0, 20, uniform_points(0, 1, 5)};
    const RhsSignal s = case1_signal(zero_case1(10), grid);
    EXPECT_EQ(s.rows(), 21u);
    for (double v : s.coeffs.data()) EXPECT_EQ(v, 0.0);
}

TEST(Case1, ConstantSourceOnlyFillsFirstRow) {
    const SpaceTimeGrid grid{1.0, 20, uniform_points(0, 1, 5)};
    Case1Record r = zero_case1(10);
    r.c[0] = 1.0;
    const RhsSignal s = case1_signal(r, grid);
    for (std::size_t j = 0; j < 20; ++j) {
        EXPECT_EQ(s.coeffs(0, j), 1.0);
        for (std::size_t row = 1; row < 21; ++row) EXPECT_EQ(s.coeffs(row, j), 0.0);
    }
}

TEST(Case1, SamplingIsDeterministicAndInUnitInterval) {
    Prng r1(42), r2(42);
    const Case1Record a = sample_case1(r1, 10);
    const Case1Record b = sample_case1(r2, 10);
    EXPECT_EQ(a.a, b.a);
    EXPECT_EQ(a.b, b.b);
    EXPECT_EQ(a.c, b.c);
    for (double v : a.a) {
        EXPECT_GE(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
    const SpaceTimeGrid grid{1.0, 50, uniform_points(0, 1, 3)};
    EXPECT_EQ(case1_signal(a, grid).coeffs, case1_signal(b, grid).coeffs);
}

TEST(Case1, SignalRowsReconstructTheSource) {
    Prng rng(3);
    const Case1Record r = sample_case1(rng, 4);
    const SpaceTimeGrid grid{1.0, 16, {}};
    const RhsSignal s = case1_signal(r, grid);
    for (double x : {-0.3, 0.1, 0.77}) {
        const auto basis = fourier_basis(x, 4);
        for (std::size_t j = 0; j < grid.n_t; ++j) {
            double f = 0.0;
            for (std::size_t row = 0; row < basis.size(); ++row) f += s.coeffs(row, j) * basis[row];
            EXPECT_NEAR(f, case1_rhs(r, x, grid.time(j)), 1e-9);
        }
    }
}

TEST(Dalembert, HomogeneousClosedForm) {
    const Fn1 u0 = [](double x) { return std::sin(kTwoPi * x); };
    const Fn2 f = [](double, double) { return 0.0; };
    for (double x : {-0.4, 0.0, 0.31}) {
        for (double t : {0.0, 0.2, 0.9}) {
            const double expected = 0.5 * (std::sin(kTwoPi * (x - 2 * t)) + std::sin(kTwoPi * (x + 2 * t)));
            EXPECT_NEAR(dalembert_solution(u0, kZero1, f, 2.0, x, t, 200), expected, 1e-14);
        }
    }
}

TEST(Dalembert, ConstantSourceGivesHalfTSquared) {
    const Fn2 one = [](double, double) { return 1.0; };
    for (double t : {0.1, 0.5, 1.0}) {
        EXPECT_NEAR(dalembert_solution(kZero1, kZero1, one, 2.0, 0.3, t, 200), t * t / 2.0, 1e-6);
    }
}

TEST(Dalembert, RejectsBadConfiguration) {
    const Fn2 one = [](double, double) { return 1.0; };
    EXPECT_THROW(dalembert_solution(kZero1, kZero1, one, 2.0, 0.0, 1.0, 1), ConfigError);
    EXPECT_THROW(dalembert_solution(kZero1, kZero1, one, 0.0, 0.0, 1.0, 10), ConfigError);
}

TEST(Dalembert, VelocityIntegralConvergesAtSecondOrder) {
    const Fn1 v0 = [](double x) { return std::cos(kTwoPi * x) + x * x; };
    const Fn2 f = [](double, double) { return 0.0; };
    const double x = 0.2, t = 0.3, c = 2.0;
    const double a = x - c * t, b = x + c * t;
    const double exact = ((std::sin(kTwoPi * b) - std::sin(kTwoPi * a)) / kTwoPi + (b * b * b - a * a * a) / 3.0) / (2 * c);
    const double e1 = std::abs(dalembert_solution(kZero1, v0, f, c, x, t, 50) - exact);
    const double e2 = std::abs(dalembert_solution(kZero1, v0, f, c, x, t, 100) - exact);
    EXPECT_GT(e1 / e2, 3.5);
    EXPECT_LT(e1 / e2, 4.5);
}

TEST(Dalembert, SingleCase1ModeMatchesModeOdeOracle) {
    Case1Record r = zero_case1(1);
    r.a[0] = 1.0;
    const Fn2 f = [&](double x, double t) { return case1_rhs(r, x, t); };
    const double omega = 2.0 * kTwoPi;
    const double beta = case1_source_scale(1, 2.0);
    const double t = 0.37, x = 0.11;
    const auto [amp, vel] = rk4_mode(omega, [&](double s) { return beta * std::cos(kTwoPi * s); }, t, 20000);
    const double oracle = amp * std::cos(kTwoPi * x);

    const double q200 = dalembert_solution(kZero1, kZero1, f, 2.0, x, t, 200);
    const double q400 = dalembert_solution(kZero1, kZero1, f, 2.0, x, t, 400);
    EXPECT_NEAR(q400, oracle, 2e-4);
    const double ratio = std::abs(q200 - oracle) / std::abs(q400 - oracle);
    EXPECT_GT(ratio, 3.5);
    EXPECT_LT(ratio, 4.5);

    // Closed-form modal amplitudes agree with the ODE oracle to integrator accuracy.
    const ModalState m = case1_modal_state(r, t);
    EXPECT_NEAR(m.u[1], amp, 1e-10);
    EXPECT_NEAR(m.v[1], vel, 1e-8);
}

TEST(Case1, ModalAmplitudesMatchOdeOracleForEveryRow) {
    Prng rng(17);
    const Case1Record r = sample_case1(rng, 3);
    const double t = 0.81;
    const ModalState m = case1_modal_state(r, t);
    const auto poly = [&](double s) { return r.c[0] + r.c[1] * s + r.c[2] * s * s; };
    EXPECT_NEAR(m.u[0], rk4_mode(0.0, poly, t, 4000).first, 1e-12);
    for (std::size_t i = 1; i <= 3; ++i) {
        const double k = kTwoPi * static_cast<double>(i);
        const double w = 2.0 * k;
        const double scale = case1_source_scale(i, 2.0);
        const auto ca = rk4_mode(w, [&](double s) { return scale * r.a[i - 1] * std::cos(k * s); }, t, 40000);
        const auto cb = rk4_mode(w, [&](double s) { return scale * r.b[i - 1] * std::sin(k * s); }, t, 40000);
        EXPECT_NEAR(m.u[2 * i - 1], ca.first, 1e-9);
        EXPECT_NEAR(m.v[2 * i - 1], ca.second, 1e-7);
        EXPECT_NEAR(m.u[2 * i], cb.first, 1e-9);
        EXPECT_NEAR(m.v[2 * i], cb.second, 1e-7);
    }
}

TEST(Case1, GeneratedFieldMatchesQuadratureAtSampledNodes) {
    Prng rng(23);
    const Case1Record r = sample_case1(rng, 2);
    const SpaceTimeGrid grid{1.0, 10, uniform_points(-0.5, 1.0, 4)};
    const WaveField field = generate_case1_field(r, grid);
    const Fn2 f = [&](double x, double t) { return case1_rhs(r, x, t); };
    for (std::size_t k : {0u, 3u}) {
        for (std::size_t j : {2u, 9u}) {
            EXPECT_NEAR(field.values(k, j), dalembert_solution(kZero1, kZero1, f, 2.0, grid.x[k], grid.time(j), 400),
                        5e-3 * (1 + std::abs(field.values(k, j))));
        }
    }
}

TEST(Case1, ZeroSignalGivesZeroFieldAndConstantSourceGivesHalfTSquared) {
    const SpaceTimeGrid grid{1.0, 40, uniform_points(-0.5, 1.0, 7)};
    const WaveField zero = generate_case1_field(zero_case1(5), grid);
    for (double v : zero.values.data()) EXPECT_EQ(v, 0.0);
    Case1Record r = zero_case1(5);
    r.c[0] = 1.0;
    const WaveField field = generate_case1_field(r, grid);
    for (std::size_t k = 0; k < grid.n_x(); ++k)
        for (std::size_t j = 0; j < grid.n_t; ++j) EXPECT_NEAR(field.values(k, j), grid.time(j) * grid.time(j) / 2, 1e-12);
    for (double v : field.initial_u) EXPECT_EQ(v, 0.0);
}

TEST(Case1, FieldResidualConvergesAtSecondOrder) {
    Prng rng(42);
    const Case1Record r = sample_case1(rng, 10);
    const auto rep = residual_convergence([&](const SpaceTimeGrid& g) { return generate_case1_field(r, g); }, 0.0, 0.5,
                                          101, 0.5, 200, [](double, double) { return 4.0; },
                                          [&](double x, double t) { return case1_rhs(r, x, t); });
    EXPECT_GT(rep.ratio(), 3.5);
    EXPECT_LT(rep.ratio(), 4.5);
}

TEST(Case2, PointValuesAndCharacteristics) {
    Case2Record r;
    r.c = {1.0, 0.0, 0.0};
    r.speed_mode = 10;
    EXPECT_EQ(case2_solution(r, 0.0, 0.0), 1.0);
    Prng rng(5);
    const Case2Record rr = sample_case2(rng, 10, 10);
    for (int i = 0; i < 50; ++i) {
        const double x = rng.uniform(-1, 1), t = rng.uniform(0, 1), d = rng.uniform(-0.5, 0.5);
        EXPECT_NEAR(case2_solution(rr, x, t), case2_solution(rr, x + d, t - d), 1e-12);
    }
}

TEST(Case2, SamplingDeterminismAndRowCount) {
    Prng r1(42), r2(42);
    const Case2Record a = sample_case2(r1, 10, 10);
    const Case2Record b = sample_case2(r2, 10, 10);
    EXPECT_EQ(a.c, b.c);
    const SpaceTimeGrid grid{1.0, 30, {}};
    EXPECT_EQ(case2_signal(a, grid).rows(), 40u);
    EXPECT_THROW(sample_case2(r1, 0, 10), ConfigError);
}

TEST(Case2, SignalRowsReconstructTheSource) {
    Prng rng(8);
    const Case2Record r = sample_case2(rng, 4, 3);
    const SpaceTimeGrid grid{1.0, 12, {}};
    const RhsSignal s = case2_signal(r, grid);
    for (double x : {-0.2, 0.45}) {
        for (std::size_t j = 0; j < grid.n_t; ++j) {
            double f = 0.0;
            for (std::size_t m = 1; m <= 4; ++m) {
                const double ks = kTwoPi * (m + 3.0), kd = kTwoPi * (3.0 - m);
                const std::size_t row = 4 * (m - 1);
                f += s.coeffs(row, j) * std::cos(ks * x) + s.coeffs(row + 1, j) * std::sin(ks * x) +
                     s.coeffs(row + 2, j) * std::cos(kd * x) + s.coeffs(row + 3, j) * std::sin(kd * x);
            }
            EXPECT_NEAR(f, case2_rhs(r, x, grid.time(j)), 1e-9 * (1 + std::abs(f)));
        }
    }
}

TEST(Case2, VerifiedRhsConvergesAndPrintedFormDoesNot) {
    Prng rng(42);
    const Case2Record r = sample_case2(rng, 3, 3);
    const auto speed = [&](double x, double t) { return case2_speed_squared(r.speed_mode, x, t); };
    const auto gen = [&](const SpaceTimeGrid& g) { return generate_case2_field(r, g); };
    const auto good = residual_convergence(gen, 0.0, 0.5, 101, 0.5, 100, speed,
                                           [&](double x, double t) { return case2_rhs(r, x, t); });
    EXPECT_GT(good.ratio(), 3.5);
    EXPECT_LT(good.ratio(), 4.5);
    const auto printed = residual_convergence(gen, 0.0, 0.5, 101, 0.5, 100, speed, [&](double x, double t) {
        return case2_rhs(r, x, t, Case2RhsForm::printed);
    });
    EXPECT_LT(printed.ratio(), 1.5);
    EXPECT_GT(printed.fine, 100.0 * good.fine);
}

TEST(Case2, FieldStoresInitialState) {
    Prng rng(2);
    const Case2Record r = sample_case2(rng, 5, 5);
    const SpaceTimeGrid grid{1.0, 10, uniform_points(-0.5, 1.0, 6)};
    const WaveField f = generate_case2_field(r, grid);
    for (std::size_t k = 0; k < 6; ++k) {
        EXPECT_EQ(f.initial_u[k], case2_solution(r, grid.x[k], 0.0));
        EXPECT_EQ(f.initial_v[k], case2_velocity(r, grid.x[k], 0.0));
        EXPECT_EQ(f.values(k, 0), case2_solution(r, grid.x[k], grid.time(0)));
    }
}

TEST(ResidualCheck, QuadraticInTimeIsExact) {
    SpaceTimeGrid grid{1.0, 50, uniform_points(0, 1, 20)};
    WaveField field;
    field.grid = grid;
    field.values = Tensor({20, 50});
    for (std::size_t k = 0; k < 20; ++k)
        for (std::size_t j = 0; j < 50; ++j) field.values(k, j) = grid.time(j) * grid.time(j) / 2;
    const auto rep = pde_residual_check(field, [](double, double) { return 3.7; }, [](double, double) { return 1.0; });
    EXPECT_LT(rep.max_abs, 1e-9);
}

TEST(ResidualCheck, CorruptedNodeIsLocalized) {
    SpaceTimeGrid grid{1.0, 100, uniform_points(0, 1, 30)};
    Prng rng(1);
    const Case2Record r = sample_case2(rng, 2, 2);
    WaveField field = generate_case2_field(r, grid);
    field.values(12, 20) += 1e-3;
    const auto rep = pde_residual_check(field, [&](double x, double t) { return case2_speed_squared(2, x, t); },
                                        [&](double x, double t) { return case2_rhs(r, x, t); });
    EXPECT_EQ(rep.k, 12u);
    EXPECT_EQ(rep.j, 20u);
    // Nodes outside the 5-point stencil of the corrupted node are unaffected.
    const auto clean = pde_residual_check(generate_case2_field(r, grid),
                                          [&](double x, double t) { return case2_speed_squared(2, x, t); },
                                          [&](double x, double t) { return case2_rhs(r, x, t); });
    for (std::size_t k = 1; k + 1 < 30; ++k) {
        for (std::size_t j = 1; j + 1 < 100; ++j) {
            const bool in_stencil = (k == 12 && j >= 19 && j <= 21) || (j == 20 && k >= 11 && k <= 13);
            if (!in_stencil) {
                EXPECT_EQ(rep.residual(k, j), clean.residual(k, j));
            }
        }
    }
}

TEST(ResidualCheck, RejectsCoarseOrNonUniformGrids) {
    WaveField field;
    field.grid = SpaceTimeGrid{1.0, 2, uniform_points(0, 1, 5)};
    field.values = Tensor({5, 2});
    const Fn2 zero = [](double, double) { return 0.0; };
    EXPECT_THROW(pde_residual_check(field, zero, zero), ConfigError);
    field.grid = SpaceTimeGrid{1.0, 5, {0.0, 0.1, 0.3, 0.4, 0.5}};
    field.values = Tensor({5, 5});
    EXPECT_THROW(pde_residual_check(field, zero, zero), ConfigError);
}
