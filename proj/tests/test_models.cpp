#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "floquet_kam/models.hpp"

using namespace floquet_kam;

namespace {
constexpr double pi = std::numbers::pi;

// ⟨n|x²|m⟩ on [0,1] by Gauss–Legendre quadrature of 2 sin(nπx) sin(mπx) x²
double x2_quadrature(int n, int m) {
    static const double xg[5] = {0.0, 0.5384693101056831, 0.9061798459386640, -0.5384693101056831, -0.9061798459386640};
    static const double wg[5] = {0.5688888888888889, 0.4786286704993665, 0.2369268850561891, 0.4786286704993665,
                                 0.2369268850561891};
    const int panels = 200;
    double s = 0;
    for (int p = 0; p < panels; ++p) {
        const double a = double(p) / panels, h = 0.5 / panels;
        for (int g = 0; g < 5; ++g) {
            const double x = a + h * (1 + xg[g]);
            s += wg[g] * h * 2 * std::sin(n * pi * x) * std::sin(m * pi * x) * x * x;
        }
    }
    return s;
}

double row_sum(int n, int M) {
    double s = 0;
    for (int m = 1; m <= M; ++m) s += std::abs(square_well_x2(n, m));
    return s;
}
}  // namespace

TEST(SquareWell, MatrixElements) {
    EXPECT_NEAR(square_well_x2(1, 1), 0.282673, 1e-6);
    EXPECT_NEAR(square_well_x2(1, 2), -0.180127, 1e-6);
    EXPECT_NEAR(square_well_x2(1, 1), 1.0 / 3 - 1 / (2 * pi * pi), 1e-15);
    for (int n = 1; n <= 5; ++n)
        for (int m = 1; m <= 5; ++m) {
            EXPECT_NEAR(square_well_x2(n, m), x2_quadrature(n, m), 1e-12) << n << "," << m;
            EXPECT_EQ(square_well_x2(n, m), square_well_x2(m, n));
        }
}

TEST(SquareWell, RowSumClosedForm) {
    for (int n = 1; n <= 5; ++n) {
        double harm = 0;
        for (int j = 1; j < n; ++j) harm += 1.0 / (j * j);
        const double closed = 1.0 / 3 + 2 / (n * n * pi * pi) + 4 / (pi * pi) * harm;
        EXPECT_NEAR(row_sum(n, 400000), closed, 1e-10);
    }
}

TEST(SquareWell, CosDriveSupportAndSymmetry) {
    SquareWellModel m{drive_cos(0.2), 6, 1};
    const BlockOperator V = square_well_blocks(m);
    EXPECT_EQ(V.entries().size(), 2u * 36u);
    for (const auto& [idx, _] : V.entries()) EXPECT_EQ(std::abs(idx.k), 1);
    EXPECT_EQ(hermitian_symmetry_defect(V), 0.0);
    EXPECT_NEAR(std::abs(V.block({1, 0, 0}, 0)(0, 0)), 0.1 * square_well_x2(1, 1), 1e-16);
    const auto sp = square_well_spectrum(6);
    EXPECT_DOUBLE_EQ(sp->delta0(), 3 * pi * pi);
    EXPECT_DOUBLE_EQ(sp->level(5), 36 * pi * pi);
}

TEST(SquareWell, ConstantDriveGivesDiagonalElement) {
    SquareWellModel m{{{0, cplx(1.0)}}, 4, 0};
    const BlockOperator V = square_well_blocks(m);
    EXPECT_NEAR(V.block({0, 0, 0}, 0)(0, 0).real(), 1.0 / 3 - 1 / (2 * pi * pi), 1e-15);
}

TEST(SquareWell, RejectsNonRealDrive) {
    SquareWellModel m{{{1, cplx(0.5, 0.1)}, {-1, cplx(0.5, 0.1)}}, 4, 1};
    EXPECT_THROW(m.validate(), ConfigError);
    SquareWellModel one_sided{{{2, cplx(1.0)}}, 4, 2};
    EXPECT_THROW(square_well_blocks(one_sided), ConfigError);
    EXPECT_THROW((SquareWellModel{drive_cos(), 1, 1}.validate()), ConfigError);
}

TEST(EpsilonV, CosAndSmoothDrives) {
    const double r = 4.0;
    {
        SquareWellModel m{drive_cos(1.0), 6, 1};
        double best = 0;
        for (int n = 1; n <= 6; ++n) best = std::max(best, row_sum(n, 6));
        EXPECT_NEAR(epsilon_V(square_well_blocks(m), r), best, 1e-14);
    }
    {
        const auto z = drive_smooth(4.0, 5);
        SquareWellModel m{z, 6, 5};
        double best = 0;
        for (int n = 1; n <= 6; ++n) best = std::max(best, row_sum(n, 6));
        double weight = 0;
        for (int k = 1; k <= 5; ++k) weight += 2 * std::pow(k, -5.1) * std::pow(k, r);
        EXPECT_NEAR(drive_weight(z, r, 5), weight, 1e-14);
        EXPECT_NEAR(epsilon_V(square_well_blocks(m), r), weight * best, 1e-13);
    }
    // the full row sum tends to 1 for high levels
    EXPECT_NEAR(row_sum(400, 400000), 1.0, 2e-3);
}

TEST(SmoothDrive, SignsAndDecay) {
    const auto z = drive_smooth(2.0, 4, 3.0);
    EXPECT_EQ(z.size(), 8u);
    EXPECT_DOUBLE_EQ(z.at(1).real(), -3.0);
    EXPECT_DOUBLE_EQ(z.at(-2).real(), 3.0 * std::pow(2.0, -3.1));
}

TEST(Rotor, Multiplicities) {
    EXPECT_EQ(rotor_multiplicity(1, 0), 1);
    for (int m = 1; m < 10; ++m) EXPECT_EQ(rotor_multiplicity(1, m), 2);
    for (int m = 0; m < 10; ++m) EXPECT_EQ(rotor_multiplicity(2, m), 2 * m + 1);
    EXPECT_EQ(rotor_multiplicity(3, 2), 9);  // (m+1)² on S³
    const auto sp = rotor_spectrum(2, 5);
    EXPECT_EQ(sp->total_dim(), 25);
    EXPECT_DOUBLE_EQ(sp->level(3), 12.0);
    EXPECT_THROW(rotor_spectrum(0, 3), ConfigError);
}

TEST(Rotor, EnvelopeValues) {
    const auto sp = rotor_spectrum(2, 4);
    EXPECT_DOUBLE_EQ(rotor_envelope(*sp, 2, 1, 3, 2.0), (1 + 2.0) / (4.0 * 100.0));
    EXPECT_THROW(rotor_envelope(*sp, 0, 1, 3, 2.0), UsageError);
}

TEST(Rotor, AnCheck) {
    const auto a1 = rotor_an_check(1, 2000);
    EXPECT_NEAR(a1.series, pi * pi / 6 + 1.0 / 8 - 0.5, 1e-6);
    EXPECT_NEAR(a1.closed_form, pi * pi / 6 + 1.0 / 8 - 0.5, 1e-15);
    for (int n = 1; n <= 50; ++n) {
        const auto a = rotor_an_check(n, 40000);
        EXPECT_NEAR(a.series, a.closed_form, 1e-9) << n;
        EXPECT_LT(a.closed_form, pi * pi / 6);
        EXPECT_GT(a.closed_form, 0.0);
    }
}

TEST(DeltaSigma, SquareWellGrowsAndConverges) {
    const double J = 3 * pi * pi;
    double prev = 0;
    for (int M = 2; M <= 40; M += 2) {
        const auto d = delta_sigma(*square_well_spectrum(M), 2.0, J);
        EXPECT_GE(d.value, prev);
        prev = d.value;
        if (M >= 8) EXPECT_FALSE(d.diverging);
    }
}

TEST(DeltaSigma, RotorDivergenceFlag) {
    const auto sp = rotor_spectrum(2, 40);
    EXPECT_TRUE(delta_sigma(*sp, 3.0, sp->delta0()).diverging);
    EXPECT_LT(delta_sigma(*sp, 3.0, sp->delta0()).local_exponent, 1.0);
    EXPECT_FALSE(delta_sigma(*square_well_spectrum(40), 3.0, 3 * pi * pi).diverging);
}

TEST(DeltaSigma, EmptySumAndHandValue) {
    auto sp = std::make_shared<const Spectrum>(std::vector<double>{0.0, 0.1}, std::vector<int>{1, 1});
    EXPECT_EQ(delta_sigma(*sp, 2.0, 1.0).value, 0.0);
    EXPECT_THROW(delta_sigma(*sp, 0.0, 1.0), ConfigError);
    // two levels, gap 2, J = 1: ordered pair (1, 0) only
    auto two = std::make_shared<const Spectrum>(std::vector<double>{0.0, 2.0}, std::vector<int>{1, 1});
    EXPECT_DOUBLE_EQ(delta_sigma(*two, 2.0, 1.0).value, 0.25);
}

TEST(Json, DriveAndModelParsing) {
    const auto m = square_well_from_json(nlohmann::json::parse(R"({"M_max": 4, "z": [[1, 0.25], [-1, 0.25]]})"));
    EXPECT_EQ(m.M_max, 4);
    EXPECT_EQ(m.K_max, 1);
    EXPECT_EQ(m.z.at(-1), cplx(0.25));
    const auto back = parse_drive(drive_to_json(m.z));
    EXPECT_EQ(back, m.z);
    EXPECT_THROW(square_well_from_json(nlohmann::json::parse(R"({"drive": "square"})")), ConfigError);
    EXPECT_THROW(square_well_from_json(nlohmann::json::parse(R"({"z": [[1, 0.5, 0.5]]})")), ConfigError);
    EXPECT_THROW(square_well_from_json(nlohmann::json::parse(R"({"M_max": "six"})")), ConfigError);
    const auto s = square_well_from_json(nlohmann::json::parse(R"({"drive": "smooth", "K_max": 3, "smoothness": 2})"));
    EXPECT_EQ(s.z.size(), 6u);
    const auto r = rotor_from_json(nlohmann::json::parse(R"({"N": 3, "M_max": 5, "const": 2.5})"));
    EXPECT_EQ(r.N, 3);
    EXPECT_DOUBLE_EQ(r.envelope_const, 2.5);
    EXPECT_THROW(rotor_from_json(nlohmann::json::parse(R"({"N": 0})")), ConfigError);
}
