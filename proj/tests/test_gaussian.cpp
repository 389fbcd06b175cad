#include <doctest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "crangbp/gaussian.hpp"

using namespace crangbp;

namespace {

using Msg = GaussianMsg<double>;
using CMsg = GaussianMsg<Complex>;

Msg mv(double mean, double var) { return Msg::from_variance(mean, var); }

std::vector<Msg> random_messages(std::mt19937_64& rng, int n, double p_blind = 0.1) {
    std::uniform_real_distribution<double> mean(-10.0, 10.0);
    std::uniform_real_distribution<double> logvar(-3.0, 3.0);
    std::bernoulli_distribution blind(p_blind);
    std::vector<Msg> out;
    for (int k = 0; k < n; ++k) {
        out.push_back(blind(rng) ? Msg::uninformative() : mv(mean(rng), std::pow(10.0, logvar(rng))));
    }
    return out;
}

bool close_rel(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("variable_to_factor averages equal-precision messages") {
    const std::vector<Msg> in{mv(1, 1), mv(3, 1), mv(100, 0.01)};
    const Msg out = variable_to_factor<double>(in, 2);
    CHECK(out.mean == doctest::Approx(2.0));
    CHECK(out.variance() == doctest::Approx(0.5));
}

TEST_CASE("variable_to_factor passes a single source through") {
    const std::vector<Msg> in{mv(7, 4), mv(-1, 2)};
    const Msg out = variable_to_factor<double>(in, 1);
    CHECK(out.mean == doctest::Approx(7.0));
    CHECK(out.variance() == doctest::Approx(4.0));
}

TEST_CASE("variable_to_factor without information is uninformative") {
    const std::vector<Msg> in{Msg::uninformative(), Msg::uninformative(), mv(5, 1)};
    const Msg out = variable_to_factor<double>(in, 2);
    CHECK_FALSE(out.informative());
    CHECK(out.precision == 0.0);
    CHECK(out.mean == 0.0);
}

TEST_CASE("factor_to_variable substitutes into the linear relation") {
    // z = v1 + v2 + n
    const FactorCoeffs<double> f{{{0, 1.0}, {1, 1.0}}, 5.0, 0.01};
    const std::vector<Msg> in{Msg::uninformative(), mv(2, 0.25)};
    const Msg out = factor_to_variable<double>(f, in, 0);
    CHECK(out.mean == doctest::Approx(3.0));
    CHECK(out.variance() == doctest::Approx(0.26));
}

TEST_CASE("degree-1 prior factor injects the prior") {
    const FactorCoeffs<double> f{{{0, 1.0}}, 0.0, 1e4};
    const std::vector<Msg> in(1);
    const Msg out = factor_to_variable<double>(f, in, 0);
    CHECK(out.mean == 0.0);
    CHECK(out.variance() == doctest::Approx(1e4));
}

TEST_CASE("complex degree-1 factor divides by the coefficient") {
    const FactorCoeffs<Complex> f{{{0, Complex(0, 2)}}, Complex(0, 4), 1.0};
    const std::vector<CMsg> in(1);
    const CMsg out = factor_to_variable<Complex>(f, in, 0);
    CHECK(out.mean.real() == doctest::Approx(2.0));
    CHECK(out.mean.imag() == doctest::Approx(0.0));
    CHECK(out.variance() == doctest::Approx(0.25));
}

TEST_CASE("infinite factor noise yields an uninformative message") {
    const FactorCoeffs<double> f{{{0, 1.0}}, 0.0, std::numeric_limits<double>::infinity()};
    const std::vector<Msg> in(1);
    CHECK_FALSE(factor_to_variable<double>(f, in, 0).informative());
}

TEST_CASE("an uninformative non-target input blocks the message") {
    const FactorCoeffs<double> f{{{0, 1.0}, {1, 2.0}, {2, -1.0}}, 0.0, 1.0};
    const std::vector<Msg> in{mv(1, 1), Msg::uninformative(), mv(2, 1)};
    CHECK_FALSE(factor_to_variable<double>(f, in, 0).informative());
    CHECK(factor_to_variable<double>(f, in, 1).informative());
}

TEST_CASE("marginal examples") {
    const std::vector<Msg> a{mv(1, 1), mv(3, 1)};
    CHECK(marginal<double>(a).mean == doctest::Approx(2.0));
    CHECK(marginal<double>(a).variance() == doctest::Approx(0.5));
    const std::vector<Msg> b{mv(5, 0.1), Msg::uninformative()};
    CHECK(marginal<double>(b).mean == doctest::Approx(5.0));
    CHECK(marginal<double>(b).variance() == doctest::Approx(0.1));
    const std::vector<Msg> c{Msg::uninformative(), Msg::uninformative()};
    CHECK_FALSE(marginal<double>(c).informative());
    CHECK(std::isinf(marginal<double>(c).variance()));
}

TEST_CASE("damping blends means and keeps the computed precision") {
    const Msg out = damp(mv(0, 1), mv(2, 0.5), 0.5);
    CHECK(out.mean == 1.0);
    CHECK(out.precision == 2.0);
    CHECK(damp(mv(0, 1), mv(2, 0.5), 0.0) == mv(2, 0.5));
}

TEST_CASE("property: product is invariant under permutation") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> len(1, 12);
    for (int trial = 0; trial < 10000; ++trial) {
        auto msgs = random_messages(rng, len(rng));
        const Msg ref = marginal<double>(msgs);
        std::shuffle(msgs.begin(), msgs.end(), rng);
        const Msg perm = marginal<double>(msgs);
        REQUIRE(close_rel(perm.precision, ref.precision, 1e-13));
        REQUIRE(close_rel(perm.mean, ref.mean, 1e-12));
    }
}

TEST_CASE("property: the uninformative message is the identity") {
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<int> len(1, 12);
    for (int trial = 0; trial < 10000; ++trial) {
        auto msgs = random_messages(rng, len(rng));
        const Msg ref = marginal<double>(msgs);
        msgs.push_back(Msg::uninformative());
        REQUIRE(marginal<double>(msgs) == ref);
    }
}

TEST_CASE("property: leave-one-out times the left-out message is the marginal") {
    std::mt19937_64 rng(13);
    std::uniform_int_distribution<int> len(2, 12);
    for (int trial = 0; trial < 10000; ++trial) {
        const auto msgs = random_messages(rng, len(rng));
        const Msg full = marginal<double>(msgs);
        for (std::size_t j = 0; j < msgs.size(); ++j) {
            const std::vector<Msg> pair{variable_to_factor<double>(msgs, j), msgs[j]};
            const Msg joined = marginal<double>(pair);
            REQUIRE(close_rel(joined.precision, full.precision, 1e-12));
            REQUIRE(close_rel(joined.mean, full.mean, 1e-12));
        }
    }
}

TEST_CASE("property: batched updates equal one-at-a-time updates") {
    std::mt19937_64 rng(14);
    std::uniform_int_distribution<int> len(1, 8);
    std::uniform_real_distribution<double> coef(0.2, 3.0);
    std::uniform_real_distribution<double> obs(-5.0, 5.0);
    for (int trial = 0; trial < 10000; ++trial) {
        const int n = len(rng);
        const auto msgs = random_messages(rng, n, 0.15);
        std::vector<Msg> batch(static_cast<std::size_t>(n));
        variable_to_factor_all<double>(msgs, batch);
        for (int k = 0; k < n; ++k) {
            const Msg single = variable_to_factor<double>(msgs, static_cast<std::size_t>(k));
            REQUIRE(batch[k].informative() == single.informative());
            REQUIRE(close_rel(batch[k].precision, single.precision, 1e-12));
            REQUIRE(close_rel(batch[k].mean, single.mean, 1e-10));
        }

        FactorCoeffs<double> f;
        for (int k = 0; k < n; ++k) f.coeffs.emplace_back(k, coef(rng));
        f.observation = obs(rng);
        f.noise_var = coef(rng);
        variable_to_factor_all<double>(msgs, batch);
        std::vector<Msg> out(static_cast<std::size_t>(n));
        factor_to_variable_all<double>(f, msgs, out);
        for (int k = 0; k < n; ++k) {
            const Msg single = factor_to_variable<double>(f, msgs, static_cast<std::size_t>(k));
            REQUIRE(out[k].informative() == single.informative());
            REQUIRE(close_rel(out[k].precision, single.precision, 1e-12));
            REQUIRE(close_rel(out[k].mean, single.mean, 1e-10));
        }
    }
}

TEST_CASE("property: damping leaves a fixed point unchanged") {
    std::mt19937_64 rng(15);
    std::uniform_real_distribution<double> d(0.0, 0.999);
    for (int trial = 0; trial < 10000; ++trial) {
        const Msg m = random_messages(rng, 1, 0.0)[0];
        REQUIRE(damp(m, m, d(rng)) == m);
    }
}

TEST_CASE("property: real inputs stay real in complex mode") {
    std::mt19937_64 rng(16);
    std::uniform_int_distribution<int> len(1, 6);
    std::uniform_real_distribution<double> coef(-3.0, 3.0);
    for (int trial = 0; trial < 10000; ++trial) {
        const int n = len(rng);
        const auto real_msgs = random_messages(rng, n, 0.0);
        std::vector<CMsg> msgs;
        FactorCoeffs<Complex> f;
        for (int k = 0; k < n; ++k) {
            msgs.push_back({Complex(real_msgs[k].mean, 0.0), real_msgs[k].precision});
            f.coeffs.emplace_back(k, Complex(coef(rng) + 3.5, 0.0));
        }
        f.observation = Complex(coef(rng), 0.0);
        f.noise_var = 0.5;
        std::vector<CMsg> out(static_cast<std::size_t>(n));
        factor_to_variable_all<Complex>(f, msgs, out);
        for (const auto& m : out) REQUIRE(m.mean.imag() == 0.0);
        variable_to_factor_all<Complex>(msgs, out);
        for (const auto& m : out) REQUIRE(m.mean.imag() == 0.0);
        REQUIRE(marginal<Complex>(msgs).mean.imag() == 0.0);
    }
}

TEST_CASE("property: a degree-2 round trip contracts the variance") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> coef(0.1, 5.0);
    std::uniform_real_distribution<double> var(1e-3, 10.0);
    for (int trial = 0; trial < 10000; ++trial) {
        const FactorCoeffs<double> f{{{0, coef(rng)}, {1, -coef(rng)}}, 0.0, var(rng)};
        const Msg start = mv(1.0, var(rng));
        const std::vector<Msg> to_v2{start, Msg::uninformative()};
        const Msg at_v2 = factor_to_variable<double>(f, to_v2, 1);
        const std::vector<Msg> to_v1{Msg::uninformative(), at_v2};
        const Msg back = factor_to_variable<double>(f, to_v1, 0);
        REQUIRE(back.variance() > start.variance());
    }
}
