#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>

#include "rmlab/gradcheck.hpp"
#include "rmlab/losses.hpp"
#include "rmlab/mlp.hpp"

using namespace rmlab;

namespace {

// Straight-line re-evaluation of a forward pass, kept independent of the
// production path on purpose.
std::vector<double> naive_forward(const Mlp& net, std::vector<double> x) {
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        const NumArray& w = net.weight(l);
        const NumArray& b = net.bias(l);
        std::vector<double> y(w.shape()[0], 0.0);
        for (std::size_t o = 0; o < y.size(); ++o) {
            y[o] = b[o];
            for (std::size_t i = 0; i < x.size(); ++i) y[o] += w.at(o, i) * x[i];
        }
        if (l + 1 < net.layer_count())
            for (double& v : y) v = activation_apply(net.activation(), v);
        x = std::move(y);
    }
    return x;
}

}  // namespace

TEST_CASE("mlp forward: identity net maps input to itself") {
    Mlp net({2, 2}, Activation::identity);
    net.weight(0).at(0, 0) = 1.0;
    net.weight(0).at(1, 1) = 1.0;
    const NumArray out = net.forward(NumArray::vec({1.0, 2.0}));
    CHECK(out[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(out[1] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("mlp forward: zero input and zero biases stay zero under relu") {
    Mlp net = Mlp::init({3, 8, 4, 2}, Activation::relu, 99u);
    for (std::size_t l = 0; l < net.layer_count(); ++l) net.bias(l).fill(0.0);
    const NumArray out = net.forward(NumArray::vec({0.0, 0.0, 0.0}));
    for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("mlp forward: matches an independent re-evaluation") {
    const Mlp net = Mlp::init({2, 4, 1}, Activation::relu, 1234u);
    const std::vector<double> expect = naive_forward(net, {0.5, -0.5});
    const NumArray out = net.forward(NumArray::vec({0.5, -0.5}));
    REQUIRE(out.size() == 1);
    CHECK(out[0] == doctest::Approx(expect[0]).epsilon(1e-14));
}

TEST_CASE("mlp forward: shape mismatch raises a dimension error") {
    const Mlp net = Mlp::init({3, 2}, Activation::relu, 5u);
    CHECK_THROWS_AS(net.forward(NumArray::vec({1.0, 2.0})), ShapeError);
}

TEST_CASE("loss_bt: tie scores cost ln 2") {
    CHECK(loss_bt(1.3, 1.3) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("loss_bt: saturated preference vanishes") {
    CHECK(loss_bt(50.0, 0.0) < 1e-20);
    CHECK(loss_bt(50.0, 0.0) > 0.0);  // strictly positive everywhere
}

TEST_CASE("loss_bt: delta = -2 equals log(1 + e^2)") {
    const double expect = std::log1p(std::exp(2.0));  // scalar oracle
    CHECK(loss_bt(0.0, 2.0) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(expect == doctest::Approx(2.1269280).epsilon(1e-7));
}

TEST_CASE("loss_bt: strictly decreasing in the margin") {
    double prev = loss_bt(-3.0, 0.0);
    for (double d = -2.5; d <= 3.0; d += 0.5) {
        const double cur = loss_bt(d, 0.0);
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("loss_bt: symmetric sum is minimized at equality") {
    RngStream rng(7);
    for (int i = 0; i < 200; ++i) {
        const double a = rng.uniform(-5.0, 5.0);
        const double b = rng.uniform(-5.0, 5.0);
        const double sum = loss_bt(a, b) + loss_bt(b, a);
        CHECK(sum >= 2.0 * std::log(2.0) - 1e-12);
        if (a != b) CHECK(sum > 2.0 * std::log(2.0));
    }
    CHECK(loss_bt(1.0, 1.0) + loss_bt(1.0, 1.0) ==
          doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("loss_mse_vec: elementwise oracle values") {
    const std::vector<double> a{1.0, 0.0, 0.5};
    CHECK(loss_mse_vec(a, a) == 0.0);
    CHECK(loss_mse_vec(std::vector<double>{1.0, 0.0, 0.5},
                       std::vector<double>{0.0, 0.0, 0.5}) == doctest::Approx(1.0));
    // (2--2)^2 + (-2-2)^2 + (1--1)^2 = 16 + 16 + 4
    CHECK(loss_mse_vec(std::vector<double>{2.0, -2.0, 1.0},
                       std::vector<double>{-2.0, 2.0, -1.0}) == doctest::Approx(36.0));
    CHECK_THROWS_AS(loss_mse_vec(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}),
                    ShapeError);
}

TEST_CASE("loss_supcon: identical positives cost nothing") {
    NumArray z({2, 3});
    z.at(0, 0) = 1.0;
    z.at(1, 0) = 1.0;
    const std::vector<int> labels{4, 4};
    CHECK(loss_supcon(z, labels, 0.5) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("loss_supcon: all-distinct labels skip every anchor") {
    NumArray z({2, 3});
    z.at(0, 0) = 1.0;
    z.at(1, 1) = 1.0;
    const std::vector<int> labels{0, 1};
    CHECK(loss_supcon(z, labels, 1.0) == 0.0);
}

TEST_CASE("loss_supcon: closed-form three-point value") {
    // z1 = z2 = e1 with label A, z3 = e2 with label B, tau = 1:
    // each A anchor pays log(1 + e^-1), anchor 3 is skipped.
    NumArray z({3, 3});
    z.at(0, 0) = 1.0;
    z.at(1, 0) = 1.0;
    z.at(2, 1) = 1.0;
    const std::vector<int> labels{0, 0, 1};
    const double expect = 2.0 * std::log1p(std::exp(-1.0));
    CHECK(expect == doctest::Approx(0.6265).epsilon(1e-4));
    CHECK(loss_supcon(z, labels, 1.0) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("loss_supcon: batch below two is degenerate") {
    NumArray z({1, 3});
    z.at(0, 0) = 1.0;
    CHECK_THROWS_AS(loss_supcon(z, std::vector<int>{0}, 1.0), DegenerateBatchError);
}

TEST_CASE("loss_supcon: invariant to batch permutation within 1e-9") {
    RngStream rng(21);
    NumArray z({6, 4});
    for (double& v : z.values()) v = rng.gaussian();
    std::vector<int> labels{0, 1, 0, 2, 1, 0};
    const double base = loss_supcon(z, labels, 0.2);

    std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
    NumArray zp({6, 4});
    std::vector<int> lp(6);
    for (std::size_t i = 0; i < 6; ++i) {
        lp[i] = labels[perm[i]];
        for (std::size_t j = 0; j < 4; ++j) zp.at(i, j) = z.at(perm[i], j);
    }
    CHECK(loss_supcon(zp, lp, 0.2) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("loss_supcon: invariant to a global positive rescaling") {
    RngStream rng(22);
    NumArray z({5, 3});
    for (double& v : z.values()) v = rng.gaussian();
    const std::vector<int> labels{0, 0, 1, 1, 1};
    const double base = loss_supcon(z, labels, 0.7);
    NumArray scaled = z;
    for (double& v : scaled.values()) v *= 37.5;
    CHECK(loss_supcon(scaled, labels, 0.7) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("loss_joint: degenerate lambdas and the composition oracle") {
    const std::vector<ScorePair> bt{{0.5, 0.5}};  // delta 0 -> ln 2
    std::vector<VecTargetSample> mse(1);
    mse[0].pred = {1.0};
    mse[0].target = {0.0};  // squared error 1

    CHECK(loss_joint(bt, mse, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(loss_joint(bt, mse, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    const double expect = 0.5 * std::log(2.0) + 0.5 * 1.0;
    CHECK(expect == doctest::Approx(0.8466).epsilon(1e-4));
    CHECK(loss_joint(bt, mse, 0.5) == doctest::Approx(expect).epsilon(1e-12));

    // empty batches contribute zero
    CHECK(loss_joint({}, mse, 0.0) == 0.0);
    CHECK(loss_joint(bt, {}, 1.0) == 0.0);
}

TEST_CASE("loss_joint: affine in lambda") {
    RngStream rng(30);
    std::vector<ScorePair> bt(4);
    for (auto& p : bt) {
        p.chosen = rng.gaussian();
        p.rejected = rng.gaussian();
    }
    std::vector<VecTargetSample> mse(3);
    for (auto& s : mse) {
        s.pred = {rng.gaussian(), rng.gaussian()};
        s.target = {rng.gaussian(), rng.gaussian()};
    }
    const double l0 = loss_joint(bt, mse, 0.0);
    const double l1 = loss_joint(bt, mse, 1.0);
    for (double lambda : {0.1, 0.25, 0.5, 0.9}) {
        const double expect = (1.0 - lambda) * l0 + lambda * l1;
        CHECK(std::fabs(loss_joint(bt, mse, lambda) - expect) <= 1e-12);
    }
}

TEST_CASE("grad_check: quadratic loss is exact to roundoff") {
    const LossWithGrad quad = [](std::span<const double> p, std::span<double> g) {
        double s = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            s += p[i] * p[i];
            if (!g.empty()) g[i] = 2.0 * p[i];
        }
        return s;
    };
    const std::vector<double> params{1.0, -1.0};
    const GradReport report = grad_check(quad, params, 1e-5);
    CHECK(report.analytic[0] == doctest::Approx(2.0));
    CHECK(report.analytic[1] == doctest::Approx(-2.0));
    CHECK(report.max_rel_error < 1e-9);
}

TEST_CASE("grad_check: probe failure names the offending index") {
    const LossWithGrad bad = [](std::span<const double> p, std::span<double> g) {
        if (!g.empty()) g[0] = 1.0;
        return p[0] > 1.0 ? std::numeric_limits<double>::quiet_NaN() : p[0];
    };
    const std::vector<double> params{1.0};  // +step probe goes non-finite
    try {
        grad_check(bad, params, 1e-2);
        FAIL("expected ProbeError");
    } catch (const ProbeError& e) {
        CHECK(e.index == 0);
    }
}

namespace {

// loss_bt of a net score against a fixed rejected score. (Ranking two
// outputs of one shared net leaves the output bias with an exactly-zero
// gradient, where a relative check only measures roundoff noise.)
GradReport check_bt_through_net(std::uint64_t seed) {
    Mlp net = Mlp::init({3, 5, 1}, Activation::tanh, seed);
    RngStream rng(seed ^ 0xabcdULL);
    NumArray x({3});
    for (double& v : x.values()) v = rng.gaussian();
    const double rejected = rng.gaussian();

    const LossWithGrad closure = [&](std::span<const double> p, std::span<double> g) {
        Mlp local = net;
        local.set_flat_params(p);
        MlpTape tape;
        const double r = mlp_forward_tape(local, x, tape)[0];
        if (!g.empty()) {
            MlpGrads grads(local);
            mlp_backward(local, tape, NumArray::vec({loss_bt_ddelta(r - rejected)}), grads);
            std::fill(g.begin(), g.end(), 0.0);
            grads.add_flat_into(g);
        }
        return loss_bt(r, rejected);
    };
    return grad_check(closure, net.flat_params(), 1e-5);
}

GradReport check_mse_through_net(std::uint64_t seed) {
    Mlp net = Mlp::init({4, 6, 2}, Activation::relu, seed);
    RngStream rng(seed ^ 0x1111ULL);
    NumArray x({4});
    for (double& v : x.values()) v = rng.gaussian();
    const std::vector<double> target{rng.gaussian(), rng.gaussian()};

    const LossWithGrad closure = [&](std::span<const double> p, std::span<double> g) {
        Mlp local = net;
        local.set_flat_params(p);
        MlpTape tape;
        const NumArray out = mlp_forward_tape(local, x, tape);
        if (!g.empty()) {
            MlpGrads grads(local);
            NumArray dout({2});
            for (std::size_t i = 0; i < 2; ++i) dout[i] = 2.0 * (out[i] - target[i]);
            mlp_backward(local, tape, dout, grads);
            std::fill(g.begin(), g.end(), 0.0);
            grads.add_flat_into(g);
        }
        return loss_mse_vec(out.values(), target);
    };
    return grad_check(closure, net.flat_params(), 1e-5);
}

GradReport check_supcon_embeddings(std::uint64_t seed, std::size_t batch, std::size_t dim) {
    RngStream rng(seed);
    NumArray z({batch, dim});
    for (double& v : z.values()) v = rng.gaussian();
    std::vector<int> labels(batch);
    for (std::size_t i = 0; i < batch; ++i) labels[i] = static_cast<int>(i % 2);

    const LossWithGrad closure = [&](std::span<const double> p, std::span<double> g) {
        NumArray emb({batch, dim}, std::vector<double>(p.begin(), p.end()));
        if (g.empty()) return loss_supcon(emb, labels, 0.5);
        NumArray grad;
        const double value = loss_supcon_grad(emb, labels, 0.5, grad);
        std::copy(grad.values().begin(), grad.values().end(), g.begin());
        return value;
    };
    return grad_check(closure, z.values(), 1e-5);
}

GradReport check_supcon_through_net(std::uint64_t seed) {
    Mlp head = Mlp::init({3, 6, 4}, Activation::tanh, seed);
    RngStream rng(seed ^ 0x7777ULL);
    NumArray x({5, 3});
    for (double& v : x.values()) v = rng.gaussian();
    const std::vector<int> labels{0, 1, 0, 1, 0};

    const LossWithGrad closure = [&](std::span<const double> p, std::span<double> g) {
        Mlp local = head;
        local.set_flat_params(p);
        MlpTape tape;
        const NumArray z = mlp_forward_tape(local, x, tape);
        if (g.empty()) return loss_supcon(z, labels, 0.3);
        NumArray dz;
        const double value = loss_supcon_grad(z, labels, 0.3, dz);
        MlpGrads grads(local);
        mlp_backward(local, tape, dz, grads);
        std::fill(g.begin(), g.end(), 0.0);
        grads.add_flat_into(g);
        return value;
    };
    return grad_check(closure, head.flat_params(), 1e-5);
}

}  // namespace

TEST_CASE("gradients: bt through a one-hidden-layer net") {
    CHECK(check_bt_through_net(404u).max_rel_error < 1e-5);
}

TEST_CASE("gradients: supcon on a 4x3 batch of embeddings") {
    CHECK(check_supcon_embeddings(505u, 4, 3).max_rel_error < 1e-5);
}

TEST_CASE("gradients: every loss composed with an mlp, 20+ seeds") {
    for (std::uint64_t seed = 1; seed <= 21; ++seed) {
        CAPTURE(seed);
        CHECK(check_bt_through_net(seed).max_rel_error < 1e-5);
        CHECK(check_mse_through_net(seed).max_rel_error < 1e-5);
        CHECK(check_supcon_through_net(seed).max_rel_error < 1e-5);
    }
}

TEST_CASE("serialization: hex-float round trip is bit exact") {
    const Mlp net = Mlp::init({3, 7, 2}, Activation::tanh, 31337u);
    std::stringstream ss;
    save_mlp(ss, net);
    const Mlp back = load_mlp(ss);
    CHECK(back.widths() == net.widths());
    CHECK(back.activation() == net.activation());
    const std::vector<double> a = net.flat_params();
    const std::vector<double> b = back.flat_params();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CAPTURE(i);
        CHECK(std::memcmp(&a[i], &b[i], sizeof(double)) == 0);
    }
}

TEST_CASE("optimizer: masked coordinates never move") {
    std::vector<double> params{1.0, 2.0, 3.0};
    const std::vector<double> grads{1.0, 1.0, 1.0};
    const std::vector<std::uint8_t> frozen{0, 1, 0};
    SgdMomentum opt(3, 0.1, 0.9);
    opt.step_masked(params, grads, frozen);
    CHECK(params[0] == doctest::Approx(0.9));
    CHECK(params[1] == 2.0);
    CHECK(params[2] == doctest::Approx(2.9));
}
