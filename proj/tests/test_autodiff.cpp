#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "salt/adam.hpp"
#include "salt/ops.hpp"

using namespace salt;
using salt::test::random_tensor;

TEST_CASE("tensor shape and data invariants") {
    Tensor t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.numel() == 6);
    CHECK(t.rank() == 2);
    CHECK_THROWS_AS(Tensor::from_data({2, 3}, {1, 2, 3}), DimensionError);
    CHECK_THROWS_AS(Tensor::from_data({0, 3}, {}), DimensionError);
    CHECK_THROWS_AS(Tensor::from_data({2, -1}, {1, 2}), DimensionError);
    CHECK(t.all_finite());
    t.data()[0] = std::nanf("");
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("grad buffer matches shape and clears") {
    Tensor t = Tensor::zeros({4, 5});
    CHECK_FALSE(t.has_grad());
    t.ensure_grad();
    CHECK(t.has_grad());
    CHECK(t.grad_vec().size() == 20);
    t.clear_grad();
    CHECK_FALSE(t.has_grad());
}

TEST_CASE("conv2d identity kernel reproduces input") {
    Tensor x = Tensor::from_data({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor w = Tensor::from_data({1, 1, 1, 1}, {1.0f});
    Tensor b = Tensor::zeros({1});
    Tensor y = conv2d(nullptr, x, w, b, 1, 0);
    CHECK(y.shape() == Shape{1, 1, 3, 3});
    for (int64_t i = 0; i < 9; ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("conv2d hand cross-correlation") {
    // [[1,2],[3,4]] (*) [[1,0],[0,1]] = 1*1 + 4*1 = 5
    Tensor x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor w = Tensor::from_data({1, 1, 2, 2}, {1, 0, 0, 1});
    Tensor b = Tensor::zeros({1});
    Tensor y = conv2d(nullptr, x, w, b, 1, 0);
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.item() == doctest::Approx(5.0).epsilon(1e-7));
}

TEST_CASE("conv2d shape arithmetic and errors") {
    Rng rng(1);
    Tensor x = random_tensor({2, 3, 8, 8}, rng);
    Tensor w = random_tensor({5, 3, 3, 3}, rng);
    Tensor b = Tensor::zeros({5});
    CHECK(conv2d(nullptr, x, w, b, 1, 1).shape() == Shape{2, 5, 8, 8});

    Tensor wrong_c = random_tensor({5, 4, 3, 3}, rng);
    CHECK_THROWS_AS(conv2d(nullptr, x, wrong_c, b, 1, 1), DimensionError);
    Tensor huge = random_tensor({5, 3, 11, 11}, rng);
    CHECK_THROWS_AS(conv2d(nullptr, x, huge, b, 1, 0), ConfigurationError);
    CHECK_THROWS_AS(conv2d(nullptr, x, w, b, 0, 1), ConfigurationError);
}

TEST_CASE("batchnorm2d constant input normalizes to beta") {
    Tensor x = Tensor::full({2, 3, 2, 2}, 4.0f);
    Tensor gamma = Tensor::full({3}, 1.0f);
    Tensor beta = Tensor::zeros({3});
    Tensor rm = Tensor::zeros({3});
    Tensor rv = Tensor::full({3}, 1.0f);
    Tensor y = batchnorm2d(nullptr, x, gamma, beta, rm, rv, true);
    for (int64_t i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == doctest::Approx(0.0f).epsilon(1e-5));

    SUBCASE("affine shift moves the channel mean to beta") {
        Rng rng(2);
        Tensor xr = random_tensor({4, 3, 4, 4}, rng);
        Tensor b5 = Tensor::full({3}, 5.0f);
        Tensor y2 = batchnorm2d(nullptr, xr, gamma, b5, rm, rv, true);
        for (int64_t c = 0; c < 3; ++c) {
            double mean = 0.0;
            for (int64_t n = 0; n < 4; ++n) {
                const float* p = y2.data() + (n * 3 + c) * 16;
                for (int64_t q = 0; q < 16; ++q) mean += p[q];
            }
            mean /= 64.0;
            CHECK(mean == doctest::Approx(5.0).epsilon(1e-4));
        }
    }
}

TEST_CASE("batchnorm2d degenerate batch raises") {
    Tensor x = Tensor::full({1, 3, 1, 1}, 2.0f);
    Tensor gamma = Tensor::full({3}, 1.0f);
    Tensor beta = Tensor::zeros({3});
    Tensor rm = Tensor::zeros({3});
    Tensor rv = Tensor::full({3}, 1.0f);
    CHECK_THROWS_AS(batchnorm2d(nullptr, x, gamma, beta, rm, rv, true), DegenerateBatchError);
    // eval mode is fine on a single element
    CHECK_NOTHROW(batchnorm2d(nullptr, x, gamma, beta, rm, rv, false));
}

TEST_CASE("relu clamps negatives") {
    Tensor x = Tensor::from_data({3}, {-1, 0, 2});
    Tensor y = relu(nullptr, x);
    CHECK(y.data()[0] == 0.0f);
    CHECK(y.data()[1] == 0.0f);
    CHECK(y.data()[2] == 2.0f);
}

TEST_CASE("maxpool2d picks window max and routes gradient there") {
    Tensor x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
    x.set_requires_grad(true);
    Tape tape;
    Tensor y = maxpool2d(&tape, x, 2, 2);
    CHECK(y.numel() == 1);
    CHECK(y.item() == 4.0f);
    tape.backward_seeded(y, Tensor::full({1, 1, 1, 1}, 1.0f));
    CHECK(x.grad()[0] == 0.0f);
    CHECK(x.grad()[1] == 0.0f);
    CHECK(x.grad()[2] == 0.0f);
    CHECK(x.grad()[3] == 1.0f);
}

TEST_CASE("cross entropy on uniform logits is ln(K)") {
    Tensor logits = Tensor::zeros({4, 10});
    std::vector<int32_t> labels = {0, 3, 7, 9};
    Tensor loss = softmax_cross_entropy(nullptr, logits, labels);
    CHECK(loss.item() == doctest::Approx(std::log(10.0)).epsilon(1e-6));

    CHECK_THROWS_AS(softmax_cross_entropy(nullptr, logits, {0, 1, 2, 10}), LabelError);
    CHECK_THROWS_AS(softmax_cross_entropy(nullptr, logits, {0, -1, 2, 3}), LabelError);
    CHECK_THROWS_AS(softmax_cross_entropy(nullptr, logits, {0, 1}), DimensionError);
}

TEST_CASE("backward of sum(w*x) gives x") {
    Rng rng(3);
    Tensor x = random_tensor({4, 6}, rng);
    Tensor w = random_tensor({1, 6}, rng);
    w.set_requires_grad(true);
    Tensor b = Tensor::zeros({1});
    Tape tape;
    Tensor y = linear(&tape, x, w, b); // y[n] = w . x[n]
    Tensor seed = Tensor::full({4, 1}, 1.0f);
    tape.backward_seeded(y, seed);
    // d/dw sum_n (w.x_n) = sum_n x_n
    for (int64_t f = 0; f < 6; ++f) {
        double expect = 0.0;
        for (int64_t n = 0; n < 4; ++n) expect += x.data()[n * 6 + f];
        CHECK(w.grad()[f] == doctest::Approx(expect).epsilon(1e-5));
    }
}

TEST_CASE("backward on a spent tape raises") {
    Rng rng(4);
    Tensor x = random_tensor({2, 3}, rng);
    x.set_requires_grad(true);
    Tape tape;
    Tensor w = Tensor::full({1, 3}, 1.0f);
    w.set_requires_grad(true);
    Tensor y = linear(&tape, x, w, Tensor::zeros({1}));
    tape.backward_seeded(y, Tensor::full({2, 1}, 1.0f));
    CHECK_THROWS_AS(tape.backward_seeded(y, Tensor::full({2, 1}, 1.0f)), TapeError);
}

TEST_CASE("frozen parameter stays untouched by backward and step") {
    Rng rng(5);
    Parameter p;
    p.tensor = random_tensor({3, 3}, rng);
    p.name = "w";
    p.set_frozen(true);
    const std::vector<float> before = p.tensor.vec();

    Tensor x = random_tensor({2, 3}, rng);
    Tape tape;
    Tensor y = linear(&tape, x, p.tensor, Tensor::zeros({3}));
    CHECK_FALSE(y.requires_grad()); // nothing trainable on the path
    CHECK(tape.size() == 0);

    AdamOptimizer adam({&p}, 1e-3);
    adam.step(); // frozen params are skipped entirely
    CHECK(p.tensor.vec() == before);
}

TEST_CASE("determinism: same seed, same forward and backward bits") {
    auto run = [] {
        Rng rng(77);
        Tensor x = random_tensor({2, 3, 8, 8}, rng);
        Tensor w = random_tensor({4, 3, 3, 3}, rng);
        Tensor b = random_tensor({4}, rng);
        x.set_requires_grad(true);
        w.set_requires_grad(true);
        b.set_requires_grad(true);
        Tape tape;
        Tensor y = conv2d(&tape, x, w, b, 1, 1);
        Tensor seed = random_tensor(y.shape(), rng);
        tape.backward_seeded(y, seed);
        std::vector<float> out = y.vec();
        out.insert(out.end(), x.grad_vec().begin(), x.grad_vec().end());
        out.insert(out.end(), w.grad_vec().begin(), w.grad_vec().end());
        return out;
    };
    const auto a = run();
    const auto b = run();
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

TEST_CASE("adam first step has the closed form") {
    Parameter p;
    p.tensor = Tensor::zeros({1});
    p.name = "w";
    p.set_frozen(false);
    p.tensor.ensure_grad();
    p.tensor.grad()[0] = 1.0f;
    AdamOptimizer adam({&p}, 1e-3);
    adam.step();
    // mhat = 1, vhat = 1 -> w = -lr / (1 + eps)
    CHECK(p.tensor.data()[0] == doctest::Approx(-1e-3).epsilon(1e-6));
    CHECK_FALSE(p.tensor.has_grad()); // cleared after the step
}

TEST_CASE("adam zero gradient leaves the fresh parameter unchanged") {
    Parameter p;
    p.tensor = Tensor::full({4}, 2.0f);
    p.name = "w";
    p.set_frozen(false);
    p.tensor.ensure_grad();
    AdamOptimizer adam({&p}, 1e-3);
    adam.step();
    for (int64_t i = 0; i < 4; ++i) CHECK(p.tensor.data()[i] == 2.0f);
}

TEST_CASE("adam without gradients is a protocol misuse") {
    Parameter p;
    p.tensor = Tensor::full({2}, 1.0f);
    p.name = "w";
    p.set_frozen(false);
    AdamOptimizer adam({&p}, 1e-3);
    CHECK_THROWS_AS(adam.step(), ProtocolMisuseError);
}

TEST_CASE("adam skips frozen parameter with stale grad") {
    Parameter frozen;
    frozen.tensor = Tensor::full({2}, 3.0f);
    frozen.name = "f";
    frozen.tensor.ensure_grad();
    frozen.tensor.grad()[0] = 9.0f;
    frozen.set_frozen(true); // clears tracking; value must not move

    Parameter live;
    live.tensor = Tensor::zeros({1});
    live.name = "w";
    live.set_frozen(false);
    live.tensor.ensure_grad();
    live.tensor.grad()[0] = 1.0f;

    AdamOptimizer adam({&frozen, &live}, 1e-3);
    adam.step();
    CHECK(frozen.tensor.data()[0] == 3.0f);
    CHECK(frozen.tensor.data()[1] == 3.0f);
    CHECK(live.tensor.data()[0] != 0.0f);
}
