#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "dpc/chain.hpp"
#include "dpc/stokes.hpp"
#include "oracles.hpp"

using namespace dpc;
using std::numbers::pi;

namespace {

void expect_vec(const Eigen::Vector3d& got, const Eigen::Vector3d& want, double tol = 1e-12) {
    EXPECT_LE((got - want).cwiseAbs().maxCoeff(), tol) << "got " << got.transpose() << " want " << want.transpose();
}

AxisVector random_axis(std::mt19937_64& rng) {
    const auto v = oracle::random_unit(rng);
    return AxisVector::normalized(v[0], v[1], v[2]);
}

}  // namespace

TEST(Normalize, ScalesToUnitNorm) {
    expect_vec(normalize({2, 0, 0}).vec(), {1, 0, 0});
    expect_vec(normalize({0, 0.6, 0.8}).vec(), {0, 0.6, 0.8});
}

TEST(Normalize, RejectsDegenerateInput) {
    EXPECT_THROW(normalize({0, 0, 0}), DegenerateInputError);
    EXPECT_THROW(normalize({1e-13, 0, 0}), DegenerateInputError);
    EXPECT_THROW(normalize({NAN, 0, 1}), DegenerateInputError);
}

TEST(CrossMatrix, MatchesDefinition) {
    Eigen::Matrix3d want;
    want << 0, 0, 0, 0, 0, -1, 0, 1, 0;
    EXPECT_EQ(cross_matrix(AxisVector::basis(1)), want);
    expect_vec(cross_matrix(AxisVector::basis(3)) * Eigen::Vector3d(1, 0, 0), {0, 1, 0});
}

TEST(CrossMatrix, IsAntisymmetricAndComputesCrossProduct) {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 200; ++i) {
        const AxisVector r = random_axis(rng);
        const Eigen::Matrix3d k = cross_matrix(r);
        EXPECT_LE((k + k.transpose()).cwiseAbs().maxCoeff(), 0.0);
        const auto v = oracle::random_unit(rng);
        const Eigen::Vector3d ve(v[0], v[1], v[2]);
        expect_vec(k * ve, r.vec().cross(ve), 1e-15);
    }
}

TEST(Rodrigues, ZeroAngleIsIdentity) {
    EXPECT_LE((rodrigues(AxisVector::basis(3), 0.0).mat() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Rodrigues, HalfTurnAboutS3) {
    const Eigen::Matrix3d want = Eigen::Vector3d(-1, -1, 1).asDiagonal();
    EXPECT_LE((rodrigues(AxisVector::basis(3), pi).mat() - want).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Rodrigues, RightHandRule) {
    expect_vec(rodrigues(AxisVector::basis(3), pi / 2) * Eigen::Vector3d(1, 0, 0), {0, 1, 0}, 1e-15);
}

TEST(Rodrigues, ProperOrthogonalForRandomAxesAndAngles) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ang(-20.0, 20.0);
    for (int i = 0; i < 10000; ++i) {
        const RotationMatrix m = rodrigues(random_axis(rng), ang(rng));
        EXPECT_LE((m.mat().transpose() * m.mat() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_NEAR(m.mat().determinant(), 1.0, 1e-9);
    }
}

TEST(Rodrigues, SameAxisAnglesAdd) {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> ang(-7.0, 7.0);
    for (int i = 0; i < 1000; ++i) {
        const AxisVector r = random_axis(rng);
        const double a = ang(rng);
        const double b = ang(rng);
        const Eigen::Matrix3d lhs = (rodrigues(r, a) * rodrigues(r, b)).mat();
        EXPECT_LE((lhs - rodrigues(r, a + b).mat()).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(Elemental, QuarterTurns) {
    expect_vec(elemental(1, pi / 2) * Eigen::Vector3d(0, 1, 0), {0, 0, 1}, 1e-15);
    expect_vec(elemental(2, pi / 2) * Eigen::Vector3d(0, 0, 1), {1, 0, 0}, 1e-15);
}

TEST(Elemental, MatchesWrittenOutMatrices) {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> ang(-10.0, 10.0);
    for (int axis = 1; axis <= 3; ++axis) {
        for (int i = 0; i < 100; ++i) {
            const double th = ang(rng);
            const oracle::Mat3 want = oracle::elemental(axis, th);
            const RotationMatrix got = elemental(axis, th);
            for (int r = 0; r < 3; ++r) {
                for (int c = 0; c < 3; ++c) {
                    EXPECT_NEAR(got(r, c), want[r][c], 1e-15);
                }
            }
            if (axis == 3) {
                EXPECT_EQ(got.mat(), rodrigues(AxisVector::basis(3), th).mat());
            }
        }
    }
}

TEST(Elemental, RejectsBadAxisIndex) {
    EXPECT_THROW(elemental(0, 1.0), InvalidArgumentError);
    EXPECT_THROW(elemental(4, 1.0), InvalidArgumentError);
}

TEST(RotationMatrix, FromMatrixValidates) {
    EXPECT_NO_THROW(RotationMatrix::from_matrix(elemental(2, 0.3).mat()));
    EXPECT_THROW(RotationMatrix::from_matrix(Eigen::Vector3d(1, 1, -1).asDiagonal()), InvalidArgumentError);
    EXPECT_THROW(RotationMatrix::from_matrix(2.0 * Eigen::Matrix3d::Identity()), InvalidArgumentError);
}

TEST(WaveplateStage, ValidatesInvariants) {
    EXPECT_THROW(WaveplateStage(AxisVector::basis(1), 0.0), InvalidArgumentError);
    EXPECT_THROW(WaveplateStage(AxisVector::basis(1), 1.0, Interval{1.0, -1.0}), InvalidArgumentError);
    EXPECT_DOUBLE_EQ(WaveplateStage::elemental(1).gain(), pi);
    EXPECT_THROW(DPCChain({}), InvalidArgumentError);
}

TEST(Forward, ZeroSignalsLeaveInputUnchanged) {
    const DPCChain chain = DPCChain::euler({1, 3, 1, 3});
    const StokesVector s = normalize({0.3, -0.4, 0.5});
    expect_vec(forward(chain, ControlVector::Zero(4), s).s_out.vec(), s.vec(), 1e-15);
}

TEST(Forward, TwoStageHandProduct) {
    // R1(pi/2) [0,0,1] = [0,-1,0]; R3(pi/2) [0,-1,0] = [1,0,0].
    const DPCChain chain = DPCChain::euler({1, 3});
    ControlVector phi(2);
    phi << 0.5, 0.5;
    const ForwardResult f = forward(chain, phi, StokesVector::basis(3));
    ASSERT_EQ(f.intermediates.size(), 2u);
    expect_vec(f.intermediates[0].vec(), {0, -1, 0}, 1e-15);
    expect_vec(f.intermediates[1].vec(), {1, 0, 0}, 1e-15);
    EXPECT_EQ(f.intermediates.back(), f.s_out);
}

TEST(Forward, AgreesWithDirectProductAndKeepsUnitNorm) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    const std::vector<int> axes{1, 3, 1};
    const DPCChain chain = DPCChain::euler({1, 3, 1});
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> p{u(rng), u(rng), u(rng)};
        const auto s = oracle::random_unit(rng);
        const ForwardResult f = forward(chain, Eigen::Map<const ControlVector>(p.data(), 3), normalize({s[0], s[1], s[2]}));
        const auto want = oracle::chain_output(axes, pi, p, s);
        expect_vec(f.s_out.vec(), {want[0], want[1], want[2]}, 1e-12);
        for (const auto& mid : f.intermediates) {
            EXPECT_NEAR(mid.vec().norm(), 1.0, 1e-9);
        }
    }
}

TEST(Forward, StageOneIsAppliedFirst) {
    const DPCChain ab = DPCChain::euler({1, 3});
    ControlVector phi(2);
    phi << 0.3, 0.7;
    const StokesVector s = normalize({0.2, 0.5, -0.8});
    const Eigen::Vector3d want = elemental(3, pi * 0.7).mat() * elemental(1, pi * 0.3).mat() * s.vec();
    expect_vec(forward(ab, phi, s).s_out.vec(), want, 1e-14);
    expect_vec(ab.matrix(phi) * s.vec(), want, 1e-14);
}

TEST(Forward, SignalsAreNotWrapped) {
    const DPCChain chain = DPCChain::euler({1});
    ControlVector a(1), b(1);
    a << 0.25;
    b << 2.25;
    const StokesVector s = StokesVector::basis(3);
    expect_vec(forward(chain, a, s).s_out.vec(), forward(chain, b, s).s_out.vec(), 1e-12);
}

TEST(Forward, LengthMismatchThrows) {
    EXPECT_THROW(forward(DPCChain::euler({1, 3, 1}), ControlVector::Zero(2), StokesVector::basis(1)),
                 DimensionMismatchError);
}
