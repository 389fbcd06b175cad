#include <doctest.h>

#include <random>

#include "crangbp/cran_model.hpp"
#include "crangbp/grid_model.hpp"
#include "crangbp/linear_oracle.hpp"
#include "crangbp/random.hpp"
#include "support.hpp"

using namespace crangbp;

namespace {

DenseModel<double> scalar_model(double a, double h, double y, double sn, double sm, double ss) {
    DenseModel<double> m;
    m.A = Matrix<double>::Constant(1, 1, a);
    m.H = Matrix<double>::Constant(1, 1, h);
    m.y = Vector<double>::Constant(1, y);
    m.sigma_n_sq = sn;
    m.sigma_m_sq = sm;
    m.sigma_s_sq = ss;
    return m;
}

DenseModel<Complex> random_dense(std::mt19937_64& rng, Index N, Index M, Index L) {
    const auto inst = testing::random_instance<Complex>(rng, N, M, L, 4);
    return {Matrix<Complex>(inst.A), Matrix<Complex>(inst.H), inst.y, inst.params.sigma_n_sq,
            inst.params.sigma_m_sq, inst.params.sigma_s_sq};
}

}  // namespace

TEST_CASE("scalar examples") {
    CHECK(mmse_estimate(scalar_model(1, 1, 0, 1, 1, 1))(0) == 0.0);
    CHECK(mmse_estimate(scalar_model(2, 3, 6, 1e-6, 1e-6, 1e6))(0) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("information and conditioning forms agree") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 200; ++trial) {
        const auto m = random_dense(rng, 5, 12, 12);
        const auto a = mmse_estimate(m);
        const auto b = mmse_estimate_conditioning(m);
        CHECK(testing::relative_max_diff(a, b) <= 1e-9);
    }
}

TEST_CASE("shrinkage limit approaches generalized least squares") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        auto m = random_dense(rng, 4, 10, 10);
        const Matrix<Complex> G = m.H * m.A;
        Matrix<Complex> S = m.sigma_n_sq * (m.H * m.H.adjoint());
        S.diagonal().array() += m.sigma_m_sq;
        const Matrix<Complex> W = S.llt().solve(G);
        const Vector<Complex> gls = (G.adjoint() * W).ldlt().solve(W.adjoint() * m.y);
        double previous = std::numeric_limits<double>::infinity();
        for (double ss : {1e2, 1e4, 1e6}) {
            m.sigma_s_sq = ss;
            const double gap = (mmse_estimate(m) - gls).norm();
            CHECK(gap < previous);
            previous = gap;
        }
        CHECK(previous < 1e-4 * (1.0 + gls.norm()));
    }
}

TEST_CASE("singular received-noise covariance is reported") {
    DenseModel<double> m;
    m.A = Matrix<double>::Identity(2, 2);
    m.H = Matrix<double>::Ones(2, 2);
    m.y = Vector<double>::Ones(2);
    m.sigma_n_sq = 1.0;
    m.sigma_m_sq = 0.0;
    CHECK_THROWS_AS(mmse_estimate(m), IllConditioned);
    m.sigma_m_sq = -1.0;
    CHECK_THROWS_AS(mmse_estimate(m), std::invalid_argument);
}

TEST_CASE("rank examples") {
    // spanning-tree flows on a 4-bus path with bus 0 as reference
    Matrix<double> tree(3, 3);
    tree << 1, 0, 0, -1, 1, 0, 0, -1, 1;
    CHECK(is_observable(tree).observable);
    CHECK(is_observable(tree).rank == 3);

    Matrix<double> dup = Vector<double>::LinSpaced(5, 1.0, 5.0).transpose().replicate(7, 1);
    CHECK(is_observable(dup).rank == 1);

    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 20; ++trial) {
        const Index N = 8;
        const Index L = 1 + trial % 7;  // L < N
        const auto m = random_dense(rng, N, 20, L);
        const auto info = is_observable(m.H * m.A);
        CHECK_FALSE(info.observable);
        CHECK(info.rank <= L);
    }
    CHECK_FALSE(is_observable(Matrix<double>(0, 3)).observable);
}

TEST_CASE("rank of a product never exceeds the factors") {
    std::mt19937_64 rng(44);
    for (int trial = 0; trial < 50; ++trial) {
        const auto m = random_dense(rng, 2 + trial % 8, 3 + trial % 13, 2 + trial % 17);
        const Index r = is_observable(m.H * m.A).rank;
        CHECK(r <= is_observable(m.H).rank);
        CHECK(r <= is_observable(m.A).rank);
    }
}

TEST_CASE("baseline on exact measurements shows only ridge bias") {
    std::mt19937_64 rng(45);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix<double> A(12, 5);
        for (Index i = 0; i < A.size(); ++i) A(i) = normal(rng);
        Vector<double> s(5);
        for (Index i = 0; i < 5; ++i) s(i) = normal(rng);
        const Vector<double> x = A * s;
        const double sn = 1e-4;
        const double ss = 1e6;
        const Vector<double> est = baseline_estimate_no_cran<double>(A, x, sn, ss);
        // closed-form ridge shrinkage: (A'A + (sn/ss) I)^-1 A'A s
        const Matrix<double> AtA = A.transpose() * A;
        const Matrix<double> reg = AtA + (sn / ss) * Matrix<double>::Identity(5, 5);
        const Vector<double> ridge = reg.ldlt().solve(AtA * s);
        CHECK(testing::relative_max_diff(est, ridge) < 1e-12);
        CHECK((est - s).norm() < 1e-4 * s.norm());
    }
}

TEST_CASE("underdetermined baseline keeps prior-scale variances") {
    Matrix<double> A(2, 4);
    A << 1, 1, 0, 0, 0, 0, 1, 1;
    const auto post = baseline_posterior<double>(A, Vector<double>::Ones(2), 1e-4, 1e4);
    CHECK_FALSE(is_observable(A).observable);
    CHECK(post.variances.maxCoeff() > 1e3);
}

TEST_CASE("30-bus baseline accuracy at sigma_n = 1e-4") {
    // recorded golden fractions: uniform angles 1.0, power-flow states 1.0
    const GridCase grid = load_case(shipped_case_path());
    const auto norm = reference_normalization(grid);
    for (auto mode : {TrueStateMode::UniformAngles, TrueStateMode::DcPowerFlow}) {
        const double bound = mode == TrueStateMode::UniformAngles ? 1e-2 : 1e-3;
        int good = 0;
        for (int trial = 0; trial < 200; ++trial) {
            const std::uint64_t seed = derive_seed(7, {static_cast<std::uint64_t>(trial)});
            const auto cfg = generate_config(grid, 3.0, derive_seed(seed, {tag(Stream::Config)}));
            const SparseMatrix<double> A =
                normalize_rows(build_measurement_matrix(grid, cfg.specs), cfg.specs, norm);
            const auto s = generate_true_state(grid, derive_seed(seed, {tag(Stream::TrueState)}), mode);
            const auto x = simulate_measurements(A, s, 1e-4, derive_seed(seed, {tag(Stream::MeasurementNoise)}));
            const auto est = baseline_estimate_no_cran<double>(Matrix<double>(A), x, 1e-8, 1e4);
            if ((est - s).cwiseAbs().maxCoeff() <= bound) ++good;
        }
        CHECK(good >= 190);
    }
}
