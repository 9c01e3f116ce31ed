#include <doctest.h>

#include <cmath>
#include <random>

#include "kdiqa/error.hpp"
#include "kdiqa/nets.hpp"
#include "oracles.hpp"

using namespace kdiqa;

namespace {

std::vector<Vec> random_inputs(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
    std::vector<Vec> xs;
    for (std::size_t i = 0; i < n; ++i) xs.push_back(oracle::random_vec(rng, dim));
    return xs;
}

std::vector<Embedding> random_targets(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
    std::vector<Embedding> out;
    for (std::size_t i = 0; i < n; ++i) out.emplace_back(oracle::random_vec(rng, dim));
    return out;
}

}  // namespace

TEST_CASE("init is deterministic, seed sensitive and chains shapes") {
    const std::vector<std::size_t> sizes{4, 8, 3};
    const auto a = init_params(sizes, 1), b = init_params(sizes, 1), c = init_params(sizes, 2);
    CHECK(a == b);
    CHECK_FALSE(a == c);
    REQUIRE(a.layers.size() == 2);
    CHECK(a.layers[0].weight.rows() == 8);
    CHECK(a.layers[0].weight.cols() == 4);
    CHECK(a.layers[1].weight.rows() == 3);
    CHECK(a.layers[1].weight.cols() == 8);
    CHECK(a.parameter_count() == 8 * 4 + 8 + 3 * 8 + 3);
    CHECK(a.layer_sizes() == sizes);
    for (double w : a.layers[0].weight.flat()) CHECK(std::fabs(w) <= 0.5);
    for (double v : a.layers[1].bias) CHECK(v == 0.0);
    CHECK_THROWS_AS(init_params(std::vector<std::size_t>{}, 1), Error);
    CHECK_THROWS_AS(init_params(std::vector<std::size_t>{4}, 1), Error);
    CHECK_THROWS_AS(init_params(std::vector<std::size_t>{4, 0, 3}, 1), Error);
}

TEST_CASE("forward trivial cases") {
    auto p = init_params(std::vector<std::size_t>{3, 5, 2}, 4);
    for (auto& l : p.layers) {
        std::fill(l.weight.flat().begin(), l.weight.flat().end(), 0.0);
        std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
    const auto z = forward(p, Vec{1, 2, 3});
    CHECK(z.values == Vec{0, 0});

    auto id = init_params(std::vector<std::size_t>{3, 3}, 4);
    std::fill(id.layers[0].weight.flat().begin(), id.layers[0].weight.flat().end(), 0.0);
    for (std::size_t i = 0; i < 3; ++i) id.layers[0].weight(i, i) = 1.0;
    CHECK(forward(id, Vec{0.5, -2, 7}).values == Vec{0.5, -2, 7});
    CHECK_THROWS_AS(forward(id, Vec{1, 2}), Error);
}

TEST_CASE("forward matches naive dense oracle") {
    std::mt19937_64 rng(12);
    for (auto act : {Activation::tanh, Activation::relu}) {
        for (int k = 0; k < 20; ++k) {
            auto p = init_params(std::vector<std::size_t>{6, 9, 7, 4}, k, act);
            for (auto& l : p.layers)
                for (auto& b : l.bias) b = 0.1 * (k % 3);
            const auto x = oracle::random_vec(rng, 6);
            const auto y = forward(p, x);
            const auto ref = oracle::dense_forward(p, x);
            for (std::size_t i = 0; i < 4; ++i) CHECK(y.values[i] == doctest::Approx(ref[i]).epsilon(1e-13));
            CHECK(forward(p, x) == y);
        }
    }
}

TEST_CASE("backward trivial cases") {
    auto p = init_params(std::vector<std::size_t>{3, 4, 2}, 7);
    ForwardCache cache;
    forward(p, Vec{1, -1, 2}, cache);
    CHECK(backward(p, cache, Vec{0, 0}).all_zero());

    auto lin = init_params(std::vector<std::size_t>{3, 2}, 7);
    const Vec x{1, -2, 0.5}, g{3, -1};
    ForwardCache lc;
    forward(lin, x, lc);
    const auto gb = backward(lin, lc, g);
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t c = 0; c < 3; ++c) CHECK(gb.layers[0].weight(r, c) == g[r] * x[c]);
        CHECK(gb.layers[0].bias[r] == g[r]);
    }
}

TEST_CASE("backward rejects mismatched caches") {
    auto p = init_params(std::vector<std::size_t>{3, 4, 2}, 7);
    auto q = init_params(std::vector<std::size_t>{3, 4, 2}, 8);
    ForwardCache cache;
    forward(p, Vec{1, -1, 2}, cache);
    try {
        backward(q, cache, Vec{1, 1});
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::usage);
    }
    CHECK_THROWS_AS(backward(p, cache, Vec{1, 1, 1}), Error);
    CHECK_THROWS_AS(backward(p, ForwardCache{}, Vec{1, 1}), Error);
}

TEST_CASE("regression head") {
    RegressionHead zero{Vec(4, 0.0), 0.0};
    CHECK(regression_forward(zero, Vec{1, 2, 3, 4}) == 0.0);
    RegressionHead pick{Vec{0, 0, 1, 0}, 0.0};
    CHECK(regression_forward(pick, Vec{1, 2, 3, 4}) == 3.0);
    std::mt19937_64 rng(2);
    const auto w = oracle::random_vec(rng, 8), e = oracle::random_vec(rng, 8);
    RegressionHead h{w, 0.25};
    long double ref = 0.25;
    for (std::size_t i = 0; i < 8; ++i) ref += (long double)w[i] * e[i];
    CHECK(regression_forward(h, e) == doctest::Approx((double)ref).epsilon(1e-14));
    CHECK_THROWS_AS(regression_forward(h, Vec{1, 2}), Error);
    CHECK(init_head(8, 3).weight.size() == 8);
}

TEST_CASE("finite difference harness passes for every loss chain") {
    std::mt19937_64 rng(40);
    std::uniform_real_distribution<double> mos_d(1.0, 5.0);
    for (int k = 0; k < 6; ++k) {
        const std::size_t in = 5, dim = 6, n = 4;
        const auto p = init_params(std::vector<std::size_t>{in, 7, dim}, 50 + k,
                                   k % 2 ? Activation::relu : Activation::tanh);
        const auto bank = make_synthetic_bank(dim, 0.07, k);
        const auto xs = random_inputs(rng, n, in);
        const auto teacher = random_targets(rng, n, dim);
        Vec mos(n);
        for (auto& m : mos) m = mos_d(rng);

        const BatchLoss hard = [&](std::span<const Embedding> e) { return hard_score_loss(e, mos, bank); };
        const BatchLoss soft = [&](std::span<const Embedding> e) { return soft_cosine_loss(e, teacher); };
        const BatchLoss blend = [&](std::span<const Embedding> e) {
            return blended_loss(soft_cosine_loss(e, teacher), hard_score_loss(e, mos, bank), 0.5);
        };
        for (const auto* fn : {&hard, &soft, &blend}) {
            const auto r = finite_diff_check(p, xs, *fn, 1e-4);
            CHECK(r.parameters_checked == p.parameter_count());
            CHECK(r.passed);
            CHECK(r.max_rel_error < 1e-4);
        }
    }
}

TEST_CASE("finite difference harness detects a wrong gradient") {
    std::mt19937_64 rng(41);
    const auto p = init_params(std::vector<std::size_t>{3, 4, 5}, 1);
    const auto xs = random_inputs(rng, 3, 3);
    const auto teacher = random_targets(rng, 3, 5);
    const BatchLoss wrong = [&](std::span<const Embedding> e) {
        auto l = soft_cosine_loss(e, teacher);
        for (auto& g : l.grad.flat()) g *= 1.01;
        return l;
    };
    const auto r = finite_diff_check(p, xs, wrong, 1e-4);
    CHECK_FALSE(r.passed);
    CHECK(r.max_rel_error > 1e-3);
}

TEST_CASE("grad bundle helpers") {
    const auto p = init_params(std::vector<std::size_t>{3, 4, 2}, 1);
    auto z = GradBundle::zeros_like(p);
    CHECK(z.all_zero());
    ForwardCache c;
    forward(p, Vec{1, 2, 3}, c);
    const auto g = backward(p, c, Vec{1, -1});
    z.add(g);
    z.add(g);
    CHECK(z.layers[1].bias[0] == 2 * g.layers[1].bias[0]);
    CHECK(z.tensors().size() == p.tensors().size());
}
