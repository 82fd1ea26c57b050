#include <isomortar/mesh.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace isomortar;

namespace {

struct Assembled {
    Eigen::VectorXd f;
    Eigen::MatrixXd K;
    double energy = 0;
};

Assembled assemble_body(const Scene& s, int body, const std::vector<Vec2>& x) {
    const Body& B = s.bodies[body];
    const NeoHookean& mat = s.materials[B.material].law;
    const int n = 2 * s.n_nodes();
    Assembled out{Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Zero(n, n)};
    int e = 0;
    for (auto [su, sv] : patch_elements(B.patch)) {
        const auto c = bulk_element(B.patch, mat, s.X, x, su, sv, body, e++);
        out.energy += c.energy;
        for (std::size_t a = 0; a < c.nodes.size(); ++a) {
            out.f.segment<2>(2 * c.nodes[a]) += c.f.segment<2>(2 * a);
            for (std::size_t b = 0; b < c.nodes.size(); ++b)
                out.K.block<2, 2>(2 * c.nodes[a], 2 * c.nodes[b]) += c.K.block<2, 2>(2 * a, 2 * b);
        }
    }
    return out;
}

Scene curved_block() {
    Scene s;
    s.materials.push_back({"m", {3.0, 0.3}});
    NurbsGrid g = block_grid({0, 0}, 2, 1, 2, 2);
    // bend the top edge to get a genuinely rational, non-affine patch
    g.P[g.P.size() - 2] = to_homogeneous(from_homogeneous(g.P[g.P.size() - 2]) + Vec2(0, 0.2), 0.8);
    add_grid_body(s, "b", 0, g);
    return s;
}

std::vector<Vec2> perturbed(const Scene& s, double amp, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> U(-amp, amp);
    std::vector<Vec2> x = s.X;
    for (auto& p : x) p += Vec2(U(rng), U(rng));
    return x;
}

}  // namespace

TEST(NeoHookean, ReferenceAndShear) {
    const NeoHookean mat{2.6, 0.3};
    EXPECT_NEAR(mat.mu(), 1.0, 1e-15);
    const auto m0 = stress_and_modulus(mat, Mat2::Identity());
    EXPECT_LT(m0.sigma.norm(), 1e-15);
    EXPECT_LT(m0.P.norm(), 1e-15);
    const double g = 1e-6;
    Mat2 F;
    F << 1, g, 0, 1;
    const auto m = stress_and_modulus(mat, F);
    EXPECT_NEAR(m.sigma(0, 1), mat.mu() * g, 1e-9);
    EXPECT_NEAR(m.sigma(1, 0), mat.mu() * g, 1e-9);
}

TEST(NeoHookean, InversionAndValidation) {
    Mat2 F;
    F << 1, 0, 0, -0.5;
    try {
        stress_and_modulus({1, 0.3}, F, 2, 7);
        FAIL();
    } catch (const InversionError& e) {
        EXPECT_EQ(e.element(), 7);
        EXPECT_EQ(e.kind(), ErrorKind::Inversion);
    }
    EXPECT_THROW((NeoHookean{-1, 0.3}.validate()), Error);
    EXPECT_THROW((NeoHookean{1, 0.5}.validate()), Error);
}

TEST(NeoHookean, ModulusFiniteDifference) {
    const NeoHookean mat{1.7, 0.27};
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> U(-0.4, 0.4);
    for (int trial = 0; trial < 20; ++trial) {
        Mat2 F = Mat2::Identity();
        for (int k = 0; k < 4; ++k) F(k / 2, k % 2) += U(rng);
        if (F.determinant() < 0.5 || F.determinant() > 2) continue;
        const auto m = stress_and_modulus(mat, F);
        const double h = 1e-6;
        Mat4 Afd;
        for (int k = 0; k < 2; ++k)
            for (int L = 0; L < 2; ++L) {
                Mat2 Fp = F, Fm = F;
                Fp(k, L) += h;
                Fm(k, L) -= h;
                const Mat2 dP = (stress_and_modulus(mat, Fp).P - stress_and_modulus(mat, Fm).P) / (2 * h);
                for (int i = 0; i < 2; ++i)
                    for (int J = 0; J < 2; ++J) Afd(pair_index(i, J), pair_index(k, L)) = dP(i, J);
            }
        EXPECT_LT((Afd - m.A).norm(), 1e-6 * m.A.norm());
        // P is the derivative of W
        Mat2 Pfd;
        for (int k = 0; k < 4; ++k) {
            Mat2 Fp = F, Fm = F;
            Fp(k / 2, k % 2) += h;
            Fm(k / 2, k % 2) -= h;
            Pfd(k / 2, k % 2) = (stress_and_modulus(mat, Fp).W - stress_and_modulus(mat, Fm).W) / (2 * h);
        }
        EXPECT_LT((Pfd - m.P).norm(), 1e-6 * std::max(1.0, m.P.norm()));
        // spatial tangent pulled back equals A
        const Mat2 S = F.inverse() * m.P;
        const Mat2 Fi = F.inverse();
        Mat4 Apb;
        for (int i = 0; i < 2; ++i)
            for (int J = 0; J < 2; ++J)
                for (int k = 0; k < 2; ++k)
                    for (int L = 0; L < 2; ++L) {
                        double v = (i == k) * S(J, L);
                        for (int j = 0; j < 2; ++j)
                            for (int l = 0; l < 2; ++l)
                                v += m.J * Fi(J, j) * Fi(L, l) * m.c(pair_index(i, j), pair_index(k, l));
                        Apb(pair_index(i, J), pair_index(k, L)) = v;
                    }
        EXPECT_LT((Apb - m.A).norm(), 1e-12 * m.A.norm());
        EXPECT_LT((m.sigma - m.P * F.transpose() / m.J).norm(), 1e-13 * std::max(1.0, m.sigma.norm()));
    }
}

TEST(BulkElement, UndeformedAndRigidRotation) {
    const Scene s = curved_block();
    const auto a = assemble_body(s, 0, s.X);
    EXPECT_LT(a.f.norm(), 1e-14);
    const double th = 10.0 * std::numbers::pi / 180;
    Mat2 R;
    R << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    std::vector<Vec2> x = s.X;
    for (auto& p : x) p = R * p + Vec2(0.3, -1.2);
    EXPECT_LT(assemble_body(s, 0, x).f.norm(), 1e-10);
}

TEST(BulkElement, TangentSymmetryAndFiniteDifference) {
    const Scene s = curved_block();
    const auto x = perturbed(s, 0.05, 5);
    const auto a = assemble_body(s, 0, x);
    EXPECT_LT((a.K - a.K.transpose()).norm(), 1e-12 * a.K.norm());
    const int n = 2 * s.n_nodes();
    Eigen::MatrixXd Kfd(n, n);
    Eigen::VectorXd ffd(n);
    const double h = 1e-6;
    for (int k = 0; k < n; ++k) {
        auto xp = x, xm = x;
        xp[k / 2][k % 2] += h;
        xm[k / 2][k % 2] -= h;
        const auto ap = assemble_body(s, 0, xp), am = assemble_body(s, 0, xm);
        Kfd.col(k) = (ap.f - am.f) / (2 * h);
        ffd[k] = (ap.energy - am.energy) / (2 * h);
    }
    EXPECT_LT((Kfd - a.K).norm(), 1e-6 * a.K.norm());
    EXPECT_LT((ffd - a.f).norm(), 1e-6 * std::max(1.0, a.f.norm()));
}

TEST(BulkElement, UniformStretchStress) {
    Scene s;
    s.materials.push_back({"m", {1.0, 0.3}});
    add_block(s, "b", 0, {0, 0}, 2, 1, 3, 2);
    std::vector<Vec2> x = s.X;
    for (auto& p : x) p.y() *= 0.9;
    std::vector<StressSample> samples;
    const Body& B = s.bodies[0];
    for (auto [su, sv] : patch_elements(B.patch)) bulk_element(B.patch, s.materials[0].law, s.X, x, su, sv, 0, 0, false, &samples);
    Mat2 F = Mat2::Identity();
    F(1, 1) = 0.9;
    const Mat2 sig = stress_and_modulus(s.materials[0].law, F).sigma;
    for (auto& q : samples) EXPECT_LT((q.sigma - sig).norm(), 1e-13);
    EXPECT_EQ(samples.size(), 6u * 9u);
}
