#include <doctest.h>

#include <cmath>

#include "maskdepth/rng.hpp"
#include "maskdepth/tensor.hpp"
#include "testutil.hpp"

using namespace maskdepth;
using testutil::check_gradients;
using testutil::random_tensor;

TEST_CASE("elementwise forward basics") {
    Tensor a = Tensor::from_data({2}, {1, 2});
    Tensor b = Tensor::from_data({2}, {3, 4});
    Tensor c = add(a, b);
    CHECK(c.at(0) == 4.0);
    CHECK(c.at(1) == 6.0);

    CHECK(sigmoid(Tensor::scalar(0.0)).value() == doctest::Approx(0.5));

    Tensor x = Tensor::from_data({1}, {3.0}, true);
    Tensor y = mul(x, x);
    y.backward();
    CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("shape mismatch errors name both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 5});
    CHECK_THROWS_WITH_AS(add(a, b), "shapes not broadcastable: [2,3] vs [4,5]",
                         std::invalid_argument);
}

TEST_CASE("log domain error unless clamped") {
    Tensor a = Tensor::from_data({2}, {1.0, -1.0});
    CHECK_THROWS_AS(log(a), std::domain_error);
    CHECK_NOTHROW(log(clamp(a, 1e-8, 1e12)));
}

TEST_CASE("matmul identity and hand arithmetic") {
    Tensor eye = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Rng rng(7);
    Tensor x = random_tensor(rng, {3, 2}, false);
    Tensor y = matmul(eye, x);
    for (int64_t i = 0; i < 6; ++i) CHECK(y.at(i) == doctest::Approx(x.at(i)));

    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from_data({2, 1}, {1, 1});
    Tensor c = matmul(a, b);
    CHECK(c.at(0) == 3.0);
    CHECK(c.at(1) == 7.0);

    Tensor bad = Tensor::zeros({3, 2});
    CHECK_THROWS_AS(matmul(a, bad), std::invalid_argument);
}

TEST_CASE("matmul gradient vs finite differences") {
    Rng rng(11);
    Tensor a = random_tensor(rng, {4, 5});
    Tensor b = random_tensor(rng, {5, 3});
    const double err = check_gradients({a, b}, [&] { return sum(mul(matmul(a, b), matmul(a, b))); });
    CHECK(err < 1e-6);
}

TEST_CASE("batched matmul matches per-slice products") {
    Rng rng(3);
    Tensor a = random_tensor(rng, {2, 3, 4}, false);
    Tensor b = random_tensor(rng, {2, 4, 2}, false);
    Tensor c = matmul(a, b);
    for (int t = 0; t < 2; ++t) {
        Tensor as = slice(a, 0, t, t + 1);
        Tensor bs = slice(b, 0, t, t + 1);
        Tensor cs = matmul(reshape(as, {3, 4}), reshape(bs, {4, 2}));
        for (int64_t i = 0; i < 6; ++i) {
            CHECK(c.at(t * 6 + i) == doctest::Approx(cs.at(i)).epsilon(1e-12));
        }
    }
    // shared rhs across a batched lhs
    Tensor w = random_tensor(rng, {4, 2}, false);
    Tensor cw = matmul(a, w);
    Tensor cw_flat = matmul(reshape(a, {6, 4}), w);
    for (int64_t i = 0; i < cw.numel(); ++i) CHECK(cw.at(i) == cw_flat.at(i));
}

TEST_CASE("reductions") {
    Tensor a = Tensor::from_data({3}, {1, 2, 3});
    CHECK(mean(a).value() == doctest::Approx(2.0));

    Tensor p = Tensor::from_data({2}, {1, 5});
    Tensor q = Tensor::from_data({2}, {3, 2});
    Tensor m = min_pair(p, q);
    CHECK(m.at(0) == 1.0);
    CHECK(m.at(1) == 2.0);

    Tensor x = Tensor::from_data({3, 4}, std::vector<double>(12, 1.0), true);
    mean(x).backward();
    for (int64_t i = 0; i < 12; ++i) CHECK(x.grad()[i] == doctest::Approx(1.0 / 12.0));

    CHECK_THROWS_AS(sum(x, {2}), std::invalid_argument);
}

TEST_CASE("axis reductions match manual sums") {
    Rng rng(5);
    Tensor x = random_tensor(rng, {2, 3, 4}, false);
    Tensor s1 = sum(x, {1});
    CHECK(s1.shape() == Shape{2, 4});
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 4; ++j) {
            double expect = 0;
            for (int k = 0; k < 3; ++k) expect += x.at((i * 3 + k) * 4 + j);
            CHECK(s1.at(i * 4 + j) == doctest::Approx(expect));
        }
    }
    Tensor s2 = mean(x, {0, 2}, true);
    CHECK(s2.shape() == Shape{1, 3, 1});
}

TEST_CASE("reshape round trip and shift of constant image") {
    Tensor a = Tensor::from_data({6}, {0, 1, 2, 3, 4, 5});
    Tensor r = reshape(a, {2, 3});
    Tensor back = reshape(r, {6});
    for (int64_t i = 0; i < 6; ++i) CHECK(back.at(i) == a.at(i));
    CHECK_THROWS_AS(reshape(a, {4}), std::invalid_argument);

    Tensor img = Tensor::full({4, 4}, 0.7);
    Tensor dx = sub(shift(img, 1, 1), img);
    for (int64_t i = 0; i < 16; ++i) CHECK(dx.at(i) == 0.0);
}

TEST_CASE("slice errors and concat gradient routing") {
    Tensor a = Tensor::from_data({4}, {0, 1, 2, 3});
    CHECK_THROWS_AS(slice(a, 0, 2, 7), std::out_of_range);

    Rng rng(23);
    Tensor x = random_tensor(rng, {2, 3});
    Tensor y = random_tensor(rng, {2, 2});
    const double err = check_gradients({x, y}, [&] {
        Tensor c = concat({x, y}, 1);
        return sum(mul(c, c));
    });
    CHECK(err < 1e-6);
}

TEST_CASE("pad and transpose") {
    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor p = pad(a, {{1, 0}, {0, 1}}, -1.0);
    CHECK(p.shape() == Shape{3, 3});
    CHECK(p.at(0) == -1.0);
    CHECK(p.at(3) == 1.0);
    CHECK(p.at(5) == -1.0);

    Tensor t = transpose(a, {1, 0});
    CHECK(t.at(1) == 3.0);
    CHECK(t.at(2) == 2.0);

    Rng rng(9);
    Tensor x = random_tensor(rng, {2, 3, 4});
    const double err = check_gradients({x}, [&] {
        Tensor tr = transpose(x, {2, 0, 1});
        return sum(mul(tr, tr));
    });
    CHECK(err < 1e-6);
}

TEST_CASE("softmax rows and gradient") {
    Tensor z = softmax(Tensor::from_data({3}, {0, 0, 0}), 0);
    for (int64_t i = 0; i < 3; ++i) CHECK(z.at(i) == doctest::Approx(1.0 / 3.0));

    Rng rng(31);
    Tensor x = random_tensor(rng, {3, 5});
    Tensor w = random_tensor(rng, {3, 5}, false);
    const double err = check_gradients({x}, [&] { return sum(mul(softmax(x, 1), w)); });
    CHECK(err < 1e-6);
}

TEST_CASE("layer_norm of constant slice is the bias") {
    Tensor x = Tensor::full({2, 4}, 3.3);
    Tensor gain = Tensor::full({4}, 2.0);
    Tensor bias = Tensor::from_data({4}, {0.1, 0.2, 0.3, 0.4});
    Tensor y = layer_norm(x, 1, gain, bias, 1e-5);
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 4; ++c) {
            CHECK(y.at(r * 4 + c) == doctest::Approx(bias.at(c)));
        }
    }
}

TEST_CASE("layer_norm normalizes before affine") {
    Rng rng(17);
    Tensor x = random_tensor(rng, {4, 8}, false);
    Tensor y = layer_norm(x, 1, Tensor::full({8}, 1.0), Tensor::zeros({8}), 1e-10);
    for (int r = 0; r < 4; ++r) {
        double m = 0, v = 0;
        for (int c = 0; c < 8; ++c) m += y.at(r * 8 + c);
        m /= 8;
        for (int c = 0; c < 8; ++c) v += (y.at(r * 8 + c) - m) * (y.at(r * 8 + c) - m);
        v /= 8;
        CHECK(m == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(v == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("backward populates leaves and rejects reuse") {
    Tensor x = Tensor::from_data({4}, {1, 2, 3, 4}, true);
    Tensor loss = sum(x);
    loss.backward();
    for (int64_t i = 0; i < 4; ++i) CHECK(x.grad()[i] == 1.0);
    CHECK_THROWS_AS(loss.backward(), std::runtime_error);

    Tensor vec = Tensor::zeros({3}, true);
    CHECK_THROWS_AS(vec.backward(), std::invalid_argument);

    // unreachable leaf keeps zero grad
    Tensor other = Tensor::from_data({2}, {5, 6}, true);
    CHECK(other.grad()[0] == 0.0);
    CHECK(other.grad()[1] == 0.0);
}

TEST_CASE("composite gradient through sigmoid matmul") {
    Rng rng(41);
    Tensor w = random_tensor(rng, {3, 4});
    Tensor x = random_tensor(rng, {4, 1});
    const double err = check_gradients({w, x}, [&] { return mean(sigmoid(matmul(w, x))); });
    CHECK(err < 1e-5);
}

TEST_CASE("shared subexpression accumulates path contributions") {
    Rng rng(43);
    Tensor x = random_tensor(rng, {5});
    const double err = check_gradients({x}, [&] {
        Tensor s = sigmoid(x);
        return add(sum(mul(s, s)), sum(mul(s, Tensor::scalar(0.5))));
    });
    CHECK(err < 1e-6);
}

TEST_CASE("broadcast add and mul agree with explicit tile oracle") {
    Rng rng(47);
    // all shape pairs up to rank 4, extents <= 5 would be huge; sample widely
    for (int trial = 0; trial < 200; ++trial) {
        const int rank_a = static_cast<int>(rng.uniform_int(1, 4));
        const int rank_b = static_cast<int>(rng.uniform_int(1, rank_a));
        Shape sa(rank_a), sb(rank_b);
        for (auto& e : sa) e = rng.uniform_int(1, 5);
        // b aligns to the trailing dims of a; each dim is either equal or 1
        for (int i = 0; i < rank_b; ++i) {
            const int64_t ea = sa[rank_a - rank_b + i];
            sb[i] = rng.uniform_int(0, 1) ? ea : 1;
        }
        Tensor a = random_tensor(rng, sa, false);
        Tensor b = random_tensor(rng, sb, false);
        Tensor got = add(a, b);
        REQUIRE(got.shape() == sa);

        // explicit tile oracle
        std::vector<int64_t> bstr = autograd::broadcast_strides(sb, sa);
        std::vector<int64_t> idx(sa.size(), 0);
        int64_t bi = 0;
        for (int64_t i = 0; i < got.numel(); ++i) {
            CHECK(got.at(i) == a.at(i) + b.at(bi));
            for (int64_t d = static_cast<int64_t>(sa.size()) - 1; d >= 0; --d) {
                ++idx[d];
                bi += bstr[d];
                if (idx[d] < sa[d]) break;
                idx[d] = 0;
                bi -= bstr[d] * sa[d];
            }
        }
    }
}

TEST_CASE("broadcast gradient reduces over broadcast axes") {
    Rng rng(53);
    Tensor a = random_tensor(rng, {3, 4});
    Tensor b = random_tensor(rng, {4});
    Tensor r = random_tensor(rng, {3, 1});
    const double err = check_gradients({a, b, r}, [&] {
        Tensor y = mul(add(a, b), r);
        return sum(mul(y, y));
    });
    CHECK(err < 1e-6);
}

TEST_CASE("min max pair gradient ties go to first operand") {
    Tensor a = Tensor::from_data({2}, {1.0, 2.0}, true);
    Tensor b = Tensor::from_data({2}, {1.0, 3.0}, true);
    sum(min_pair(a, b)).backward();
    CHECK(a.grad()[0] == 1.0);  // tie -> a
    CHECK(b.grad()[0] == 0.0);
    CHECK(a.grad()[1] == 1.0);
    CHECK(b.grad()[1] == 0.0);

    Tensor c = Tensor::from_data({2}, {1.0, 2.0}, true);
    Tensor d = Tensor::from_data({2}, {1.0, 3.0}, true);
    sum(max_pair(c, d)).backward();
    CHECK(c.grad()[0] == 1.0);  // tie -> first operand
    CHECK(d.grad()[0] == 0.0);
    CHECK(c.grad()[1] == 0.0);
    CHECK(d.grad()[1] == 1.0);
}

TEST_CASE("primitive gradients on random small tensors") {
    Rng rng(61);
    for (int trial = 0; trial < 100; ++trial) {
        Shape shape{rng.uniform_int(1, 4), rng.uniform_int(1, 4)};
        Tensor x = random_tensor(rng, shape, true, 0.2, 1.5);
        Tensor w = random_tensor(rng, shape, false);
        const int which = trial % 10;
        const double err = check_gradients({x}, [&]() -> Tensor {
            switch (which) {
                case 0: return sum(mul(exp(x), w));
                case 1: return sum(mul(log(x), w));
                case 2: return sum(mul(sigmoid(x), w));
                case 3: return sum(mul(pow(x, 1.7), w));
                case 4: return sum(mul(abs(x), w));
                case 5: return sum(mul(sqrt(x), w));
                case 6: return sum(mul(sin(x), w));
                case 7: return sum(mul(cos(x), w));
                case 8: return sum(mul(div(w, x), w));
                case 9: return sum(mul(clamp(x, 0.3, 1.2), w));
            }
            return sum(x);
        });
        CHECK(err < 1e-5);
    }
}

TEST_CASE("gradient accumulates across backward calls until zeroed") {
    Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
    sum(mul(x, Tensor::scalar(2.0))).backward();
    sum(mul(x, Tensor::scalar(3.0))).backward();
    CHECK(x.grad()[0] == doctest::Approx(5.0));
    Tensor xt(x);
    xt.zero_grad();
    CHECK(x.grad()[0] == 0.0);
}
