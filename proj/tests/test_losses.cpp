#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "kdiqa/error.hpp"
#include "kdiqa/losses.hpp"
#include "oracles.hpp"

using namespace kdiqa;

namespace {

std::vector<Embedding> random_batch(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
    std::vector<Embedding> out;
    for (std::size_t i = 0; i < n; ++i) out.emplace_back(oracle::random_vec(rng, dim));
    return out;
}

Vec flatten(std::span<const Embedding> es) {
    Vec v;
    for (const auto& e : es) v.insert(v.end(), e.values.begin(), e.values.end());
    return v;
}

std::vector<Embedding> unflatten(const Vec& v, std::size_t dim) {
    std::vector<Embedding> out;
    for (std::size_t i = 0; i < v.size(); i += dim) out.emplace_back(Vec(v.begin() + i, v.begin() + i + dim));
    return out;
}

}  // namespace

TEST_CASE("mse arithmetic") {
    const Vec a{1, 2}, b{3, 2};
    const auto l = mse_loss(a, b);
    CHECK(l.value == 2.0);
    CHECK(l.grad.rows() == 2);
    CHECK(l.grad(0, 0) == -2.0);
    CHECK(l.grad(1, 0) == 0.0);
    const auto z = mse_loss(a, a);
    CHECK(z.value == 0.0);
    CHECK(z.grad(0, 0) == 0.0);
    CHECK_THROWS_AS(mse_loss(Vec{1, 2}, Vec{1}), Error);
}

TEST_CASE("mse gradient matches central differences and is permutation invariant") {
    std::mt19937_64 rng(3);
    const auto p = oracle::random_vec(rng, 50), t = oracle::random_vec(rng, 50);
    const auto l = mse_loss(p, t);
    const auto num = oracle::numeric_grad([&](const Vec& x) { return mse_loss(x, t).value; }, p);
    CHECK(oracle::max_rel_error(l.grad.flat(), num) < 1e-4);

    std::vector<std::size_t> perm(50);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Vec pp(50), tp(50);
    for (std::size_t i = 0; i < 50; ++i) {
        pp[i] = p[perm[i]];
        tp[i] = t[perm[i]];
    }
    CHECK(mse_loss(pp, tp).value == doctest::Approx(l.value).epsilon(1e-14));
}

TEST_CASE("soft cosine loss alignment cases") {
    std::mt19937_64 rng(4);
    const auto t = random_batch(rng, 6, 5);
    CHECK(soft_cosine_loss(t, t).value == doctest::Approx(0.0).epsilon(1e-15));
    auto scaled = t;
    for (auto& e : scaled)
        for (auto& x : e.values) x *= 3.7;
    CHECK(std::fabs(soft_cosine_loss(scaled, t).value) <= 1e-15);
    auto flipped = t;
    for (auto& e : flipped)
        for (auto& x : e.values) x = -x;
    CHECK(soft_cosine_loss(flipped, t).value == doctest::Approx(2.0));
}

TEST_CASE("soft cosine loss range and errors") {
    std::mt19937_64 rng(8);
    for (int k = 0; k < 50; ++k) {
        const auto s = random_batch(rng, 4, 3), t = random_batch(rng, 4, 3);
        const double v = soft_cosine_loss(s, t).value;
        CHECK(v >= 0.0);
        CHECK(v <= 2.0);
    }
    auto s = random_batch(rng, 3, 3);
    const auto t = random_batch(rng, 3, 3);
    s[1].values.assign(3, 0.0);
    try {
        soft_cosine_loss(s, t);
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::domain);
        CHECK(std::string(e.what()).find("1") != std::string::npos);
    }
}

TEST_CASE("soft cosine gradient matches central differences") {
    std::mt19937_64 rng(21);
    for (int k = 0; k < 100; ++k) {
        const std::size_t n = 1 + k % 7, dim = 3 + k % 5;
        const auto s = random_batch(rng, n, dim), t = random_batch(rng, n, dim);
        const auto l = soft_cosine_loss(s, t);
        const auto num = oracle::numeric_grad(
            [&](const Vec& x) { return soft_cosine_loss(unflatten(x, dim), t).value; }, flatten(s));
        CHECK(oracle::max_rel_error(l.grad.flat(), num) < 1e-4);
    }
}

TEST_CASE("score gradient through the head matches central differences") {
    std::mt19937_64 rng(22);
    for (int k = 0; k < 100; ++k) {
        const std::size_t dim = 4 + k % 6;
        const auto bank = make_synthetic_bank(dim, k % 2 ? 0.07 : 0.5, k);
        const auto x = oracle::random_vec(rng, dim);
        const auto sg = score_with_gradient(x, bank);
        CHECK(sg.score == score(x, bank));
        const auto num = oracle::numeric_grad([&](const Vec& v) { return score(v, bank); }, x);
        CHECK(oracle::max_rel_error(sg.grad, num) < 1e-4);
    }
}

TEST_CASE("hard score loss gradient matches central differences") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> mos_d(1.0, 5.0);
    for (int k = 0; k < 100; ++k) {
        const std::size_t n = 1 + k % 5, dim = 4 + k % 4;
        const auto bank = make_synthetic_bank(dim, 0.07, 100 + k);
        const auto s = random_batch(rng, n, dim);
        Vec mos(n);
        for (auto& m : mos) m = mos_d(rng);
        const auto l = hard_score_loss(s, mos, bank);
        const auto num = oracle::numeric_grad(
            [&](const Vec& x) { return hard_score_loss(unflatten(x, dim), mos, bank).value; }, flatten(s));
        CHECK(oracle::max_rel_error(l.grad.flat(), num) < 1e-4);
    }
}

TEST_CASE("blended loss") {
    LossValue soft{0.4, Matrix(1, 2, 1.0)};
    LossValue hard{0.2, Matrix(1, 2, 3.0)};
    const auto mid = blended_loss(soft, hard, 0.5);
    CHECK(mid.value == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(mid.grad(0, 1) == 2.0);
    const auto s = blended_loss(soft, hard, 1.0);
    CHECK(s.value == soft.value);
    CHECK(s.grad == soft.grad);
    const auto h = blended_loss(soft, hard, 0.0);
    CHECK(h.value == hard.value);
    CHECK(h.grad == hard.grad);
    CHECK_THROWS_AS(blended_loss(soft, hard, 1.5), Error);
    CHECK_THROWS_AS(blended_loss(soft, hard, -0.1), Error);
}

TEST_CASE("cosine blend schedule") {
    const auto c = BlendSchedule::cosine(100);
    CHECK(lambda_at(c, 0) == 1.0);
    CHECK(lambda_at(c, 100) == 0.0);
    CHECK(lambda_at(c, 50) == 0.5);
    for (long t = 1; t <= 100; ++t) CHECK(lambda_at(c, t) <= lambda_at(c, t - 1));
    CHECK_THROWS_AS(lambda_at(c, -1), Error);
    CHECK_THROWS_AS(lambda_at(c, 101), Error);
    for (long T : {1L, 2L, 7L, 99L, 1000L}) {
        const auto s = BlendSchedule::cosine(T);
        CHECK(lambda_at(s, 0) == 1.0);
        CHECK(lambda_at(s, T) == 0.0);
    }
    CHECK_THROWS_AS(BlendSchedule::cosine(0), Error);
}

TEST_CASE("fixed blend schedule") {
    const auto f = BlendSchedule::fixed(0.7);
    for (long t : {0L, 5L, 1000L}) CHECK(lambda_at(f, t) == 0.7);
    CHECK(lambda_at(BlendSchedule::hard_only(), 3) == 0.0);
    CHECK(lambda_at(BlendSchedule::soft_only(), 3) == 1.0);
    CHECK_THROWS_AS(BlendSchedule::fixed(1.2), Error);
}

TEST_CASE("blend at schedule endpoints is bit-exact") {
    std::mt19937_64 rng(30);
    const auto bank = make_synthetic_bank(6, 0.07, 2);
    const auto s = random_batch(rng, 4, 6), t = random_batch(rng, 4, 6);
    const Vec mos{1.5, 2.0, 4.5, 3.3};
    const auto soft = soft_cosine_loss(s, t);
    const auto hard = hard_score_loss(s, mos, bank);
    const auto sched = BlendSchedule::cosine(10);
    const auto first = blended_loss(soft, hard, lambda_at(sched, 0));
    const auto last = blended_loss(soft, hard, lambda_at(sched, 10));
    CHECK(first.value == soft.value);
    CHECK(first.grad == soft.grad);
    CHECK(last.value == hard.value);
    CHECK(last.grad == hard.grad);
}
