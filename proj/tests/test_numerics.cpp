#include <doctest.h>

#include <cmath>

#include "pskd/commands.hpp"
#include "pskd/gradcheck.hpp"
#include "pskd/ops.hpp"
#include "pskd/optimizer.hpp"
#include "pskd/rng.hpp"
#include "pskd/tape.hpp"

using namespace pskd;

TEST_CASE("softmax_temp basics") {
    CHECK(kDefaultTemperature == 4.0);

    const Tensor sym = softmax_temp(Tensor({1, 2}, {0.0, 0.0}), 2.7);
    CHECK(sym.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(sym.at(0, 1) == doctest::Approx(0.5).epsilon(1e-12));

    // softmax([2,0]/4) = softmax([0.5, 0]) = e^0.5/(e^0.5+1)
    const Tensor t = softmax_temp(Tensor({1, 2}, {2.0, 0.0}), 4.0);
    const double expect = std::exp(0.5) / (std::exp(0.5) + 1.0);
    CHECK(t.at(0, 0) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(t.at(0, 0) == doctest::Approx(0.6225).epsilon(1e-3));
    CHECK(t.at(0, 1) == doctest::Approx(0.3775).epsilon(1e-3));

    CHECK_THROWS_AS(softmax_temp(Tensor({1, 2}, {0.0, 0.0}), 0.0), ParamError);
    CHECK_THROWS_AS(softmax_temp(Tensor({1, 2}, {0.0, 0.0}), -1.0), ParamError);
    CHECK_THROWS_AS(softmax_temp(Tensor({1, 2}, {std::nan(""), 0.0}), 1.0), NumericError);
}

TEST_CASE("softmax rows sum to one for arbitrary finite logits") {
    Rng rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        const int cols = 2 + rng.uniform_int(9);
        Tensor logits = Tensor::zeros({4, cols});
        for (Scalar& v : logits.data) v = rng.uniform(-50.0, 50.0);
        const double temp = 0.5 + rng.uniform() * 7.5;
        const Tensor p = softmax_temp(logits, temp);
        for (int i = 0; i < 4; ++i) {
            double sum = 0.0;
            for (int j = 0; j < cols; ++j) {
                CHECK(p.at(i, j) >= 0.0);
                sum += p.at(i, j);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("kl_div closed forms") {
    const Tensor p(std::vector<int>{1, 2}, {0.5, 0.5});
    CHECK(kl_div(p, p) == 0.0);

    CHECK(kl_div(Tensor({1, 2}, {1.0, 0.0}), Tensor({1, 2}, {0.5, 0.5})) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));

    const double expect = 0.7 * std::log(1.4) + 0.3 * std::log(0.6);
    CHECK(kl_div(Tensor({1, 2}, {0.7, 0.3}), Tensor({1, 2}, {0.5, 0.5})) ==
          doctest::Approx(expect).epsilon(1e-12));
    CHECK(expect == doctest::Approx(0.0823).epsilon(1e-3));

    CHECK_THROWS_AS(kl_div(Tensor({1, 2}, {0.5, 0.5}), Tensor({1, 3}, {0.3, 0.3, 0.4})), ParamError);
}

TEST_CASE("kl_div is nonnegative, zero only at equality") {
    Rng rng(7);
    for (int trial = 0; trial < 300; ++trial) {
        const int cols = 2 + rng.uniform_int(6);
        Tensor a = Tensor::zeros({2, cols}), b = Tensor::zeros({2, cols});
        for (Scalar& v : a.data) v = rng.uniform(-3.0, 3.0);
        for (Scalar& v : b.data) v = rng.uniform(-3.0, 3.0);
        const Tensor p = softmax(a), q = softmax(b);
        CHECK(kl_div(p, q) >= 0.0);
        CHECK(kl_div(p, p) == 0.0);
    }
}

TEST_CASE("cross_entropy closed forms") {
    CHECK(cross_entropy(Tensor({1, 2}, {1.0, 0.0}), {0}) == 0.0);

    const Tensor uniform(std::vector<int>{1, 4}, {0.25, 0.25, 0.25, 0.25});
    CHECK(cross_entropy(uniform, {2}) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(std::log(4.0) == doctest::Approx(1.3863).epsilon(1e-3));

    CHECK(cross_entropy(Tensor({1, 2}, {0.25, 0.75}), {1}) ==
          doctest::Approx(-std::log(0.75)).epsilon(1e-12));
    CHECK(-std::log(0.75) == doctest::Approx(0.2877).epsilon(1e-3));

    CHECK_THROWS_AS(cross_entropy(Tensor({1, 2}, {0.5, 0.5}), {2}), ParamError);
    CHECK_THROWS_AS(cross_entropy(Tensor({1, 2}, {0.5, 0.5}), {-1}), ParamError);
}

TEST_CASE("backward of linear and quadratic losses") {
    GradTape tape;
    const Tensor w({4}, {1.0, -2.0, 3.0, 0.25});

    SUBCASE("sum(w) has all-ones gradient") {
        const Value p = tape.param(w);
        const auto grads = tape.backward(tape.sum(p));
        REQUIRE(grads.size() == 1);
        for (Scalar g : grads[0].data) CHECK(g == 1.0);
    }
    SUBCASE("0.5*|w|^2 has gradient w") {
        const Value p = tape.param(w);
        const Value loss = tape.scale(tape.sum(tape.mul(p, p)), 0.5);
        const auto grads = tape.backward(loss);
        REQUIRE(grads.size() == 1);
        for (std::size_t i = 0; i < w.data.size(); ++i) CHECK(grads[0].data[i] == w.data[i]);
    }
    SUBCASE("non-scalar loss is rejected") {
        const Value p = tape.param(w);
        CHECK_THROWS_AS(tape.backward(p), ParamError);
    }
}

TEST_CASE("adam: zero gradient, first step, determinism") {
    std::vector<Tensor> params{Tensor({1}, {1.0})};
    AdamConfig cfg;
    cfg.lr = 0.1;
    AdamState st = make_adam(params, cfg);

    SUBCASE("zero gradient leaves parameters, advances the step counter") {
        adam_step(st, params, {Tensor({1}, {0.0})});
        CHECK(params[0].data[0] == 1.0);
        CHECK(st.step == 1);
    }
    SUBCASE("bias correction makes the first step ~ lr * sign(grad)") {
        adam_step(st, params, {Tensor({1}, {1.0})});
        CHECK(params[0].data[0] == doctest::Approx(0.9).epsilon(1e-6));
    }
    SUBCASE("identical inputs give bit-identical outputs") {
        std::vector<Tensor> p2 = params;
        AdamState st2 = st;
        adam_step(st, params, {Tensor({1}, {0.37})});
        adam_step(st2, p2, {Tensor({1}, {0.37})});
        CHECK(bitwise_equal(params, p2));
        CHECK(bitwise_equal(st.m, st2.m));
        CHECK(bitwise_equal(st.v, st2.v));
    }
    SUBCASE("NaN gradient refuses the step without touching state") {
        CHECK_THROWS_AS(adam_step(st, params, {Tensor({1}, {std::nan("")})}), NumericError);
        CHECK(st.step == 0);
        CHECK(params[0].data[0] == 1.0);
        CHECK(st.m[0].data[0] == 0.0);
    }
}

TEST_CASE("adam f32 mode keeps parameters float-representable") {
    std::vector<Tensor> params{Tensor({2}, {0.3, -1.7})};
    AdamConfig cfg;
    cfg.f32_params = true;
    AdamState st = make_adam(params, cfg);
    Rng rng(5);
    for (int i = 0; i < 10; ++i) {
        adam_step(st, params, {Tensor({2}, {rng.gaussian(), rng.gaussian()})});
        for (Scalar v : params[0].data)
            CHECK(v == static_cast<double>(static_cast<float>(v)));
    }
}

TEST_CASE("finite_diff_check on a quadratic") {
    // f(w) = sum 0.5 * w_i^2, gradient w
    GradProblem problem;
    problem.loss = [](const std::vector<Tensor>& p) {
        double s = 0.0;
        for (Scalar v : p[0].data) s += 0.5 * v * v;
        return s;
    };
    problem.grad = [](const std::vector<Tensor>& p) { return std::vector<Tensor>{p[0]}; };

    const std::vector<Tensor> params{Tensor({3}, {0.5, -1.25, 2.0})};
    for (double h : {1e-6, 1e-5, 1e-4}) {
        const GradCheckReport rep = finite_diff_check(problem, params, h, 1e-6);
        CHECK(rep.pass);
        CHECK(rep.coords == 3);
    }

    GradProblem wrong = problem;
    wrong.grad = [](const std::vector<Tensor>& p) {
        Tensor g = p[0];
        for (Scalar& v : g.data) v *= 1.05;
        return std::vector<Tensor>{g};
    };
    CHECK_FALSE(finite_diff_check(wrong, params, 1e-5, 1e-6).pass);
}

TEST_CASE("every loss gradient matches central differences") {
    const auto cases = run_loss_gradchecks(7, 1e-5, 1e-4, false);
    REQUIRE(cases.size() == 5);
    for (const auto& c : cases) {
        INFO(c.name, " max_rel_error=", c.report.max_rel_error);
        CHECK(c.report.pass);
    }
}

TEST_CASE("unlucky draws stay at the noise floor, not at broken-rule scale") {
    // The difference quotient of an O(1) double-precision loss at
    // h = 1e-5 carries ~1e-12 of cancellation noise, and a coordinate
    // within h of a ReLU kink sees a one-sided slope. Both effects blip
    // specific coordinates of specific draws past tight tolerances; a
    // wrong backward rule would instead miss by orders of magnitude on
    // most coordinates.
    for (std::uint64_t seed : {11ULL, 99ULL, 555ULL}) {
        const auto cases = run_loss_gradchecks(seed, 1e-5, 5e-2, false);
        for (const auto& c : cases) {
            INFO("seed ", seed, " ", c.name, " max_rel_error=", c.report.max_rel_error);
            CHECK(c.report.pass);
        }
    }
}

TEST_CASE("corrupted backward rule is caught (negative control)") {
    const auto cases = run_loss_gradchecks(7, 1e-5, 1e-4, true);
    bool any_failed = false;
    for (const auto& c : cases) any_failed = any_failed || !c.report.pass;
    CHECK(any_failed);
}

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), ParamError);
    CHECK_THROWS_AS(Tensor::zeros({0, 3}), ParamError);
    const Tensor t = Tensor::zeros({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.all_finite());
}
