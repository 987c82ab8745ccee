#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "fdc/autograd.hpp"

using namespace fdc;

namespace {

TensorD randn(Shape shape, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    TensorD t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        const double u1 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
        const double u2 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
        t[i] = scale * std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }
    return t;
}

// Central finite differences against the analytic gradient, elementwise.
void check_grad(const std::function<VarD(const std::vector<VarD>&)>& f, std::vector<TensorD> inputs,
                double h = 1e-6, double tol = 1e-7) {
    std::vector<VarD> vars;
    for (auto& t : inputs) vars.push_back(VarD::leaf(t, true));
    VarD out = f(vars);
    backward(out);
    for (size_t vi = 0; vi < vars.size(); ++vi) {
        REQUIRE(vars[vi].grad().numel() == vars[vi].value().numel());
        for (std::int64_t j = 0; j < vars[vi].value().numel(); ++j) {
            auto eval = [&](double delta) {
                std::vector<VarD> probe;
                for (size_t k = 0; k < inputs.size(); ++k) probe.push_back(VarD::leaf(inputs[k], false));
                probe[vi].value()[j] += delta;
                NoGradGuard ng;
                return f(probe).value()[0];
            };
            const double fd = (eval(h) - eval(-h)) / (2 * h);
            const double an = vars[vi].grad()[j];
            const double err = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
            INFO("input ", vi, " element ", j, " fd=", fd, " analytic=", an);
            CHECK(err < tol);
        }
    }
}

// Scalar-producing wrapper: squared sum through mse_mean against zeros gives
// d/dx = 2x/numel, a perfectly usable reduction for gradient checking.
VarD reduce(const VarD& x) { return mse_mean(x, TensorD(x.value().shape())); }

}  // namespace

TEST_CASE("conv2d matches finite differences") {
    const Shape xs{2, 3, 6, 5};
    const Shape ws{4, 3, 3, 3};
    check_grad(
        [](const std::vector<VarD>& v) { return reduce(conv2d(v[0], v[1], v[2])); },
        {randn(xs, 1), randn(ws, 2, 0.5), randn({4}, 3, 0.2)});
}

namespace {

// Naive reference convolution (stride 1, zero pad k/2).
TensorD conv_reference(const TensorD& x, const TensorD& w, const TensorD& b) {
    const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    TensorD y({n, cout, h, wd});
    for (int i = 0; i < n; ++i)
        for (int co = 0; co < cout; ++co)
            for (int yy = 0; yy < h; ++yy)
                for (int xx = 0; xx < wd; ++xx) {
                    double acc = b[co];
                    for (int ci = 0; ci < cin; ++ci)
                        for (int ky = 0; ky < kh; ++ky)
                            for (int kx = 0; kx < kw; ++kx) {
                                const int sy = yy + ky - kh / 2, sx = xx + kx - kw / 2;
                                if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
                                acc += w[((static_cast<std::int64_t>(co) * cin + ci) * kh + ky) * kw + kx] *
                                       x[((static_cast<std::int64_t>(i) * cin + ci) * h + sy) * wd + sx];
                            }
                    y[((static_cast<std::int64_t>(i) * cout + co) * h + yy) * wd + xx] = acc;
                }
    return y;
}

}  // namespace

TEST_CASE("conv2d matches the naive reference on both dispatch paths") {
    // Small plane goes through im2col+GEMM, large plane through the direct taps.
    for (const Shape xs : {Shape{2, 3, 6, 5}, Shape{1, 4, 32, 64}}) {
        const TensorD x = randn(xs, 100 + xs[3]);
        const TensorD w = randn({5, xs[1], 3, 3}, 200 + xs[3], 0.3);
        const TensorD b = randn({5}, 300 + xs[3], 0.1);
        NoGradGuard ng;
        const TensorD got = conv2d(VarD::constant(x), VarD::constant(w), VarD::constant(b)).value();
        const TensorD want = conv_reference(x, w, b);
        REQUIRE(got.shape() == want.shape());
        for (std::int64_t i = 0; i < got.numel(); ++i)
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv2d direct path matches finite differences") {
    // 32x64 = 2048 pixels, the direct-conv dispatch. Probe weights and bias
    // everywhere but only a slice of the input for time.
    const TensorD x = randn({1, 2, 32, 64}, 400);
    const TensorD w0 = randn({2, 2, 3, 3}, 401, 0.4);
    const TensorD b0 = randn({2}, 402, 0.1);
    check_grad(
        [&](const std::vector<VarD>& v) {
            return reduce(conv2d(VarD::constant(x), v[0], v[1]));
        },
        {w0, b0});
    // And input gradients, so dX exercises the direct path too.
    check_grad(
        [&](const std::vector<VarD>& v) {
            return reduce(conv2d(v[0], VarD::constant(w0), VarD::constant(b0)));
        },
        {randn({1, 2, 32, 64}, 403)});
}

TEST_CASE("conv2d 1x1-like small kernel and rectangular input") {
    check_grad(
        [](const std::vector<VarD>& v) { return reduce(conv2d(v[0], v[1], v[2])); },
        {randn({1, 2, 4, 8}, 10), randn({3, 2, 3, 3}, 11, 0.4), randn({3}, 12, 0.1)});
}

TEST_CASE("activations match finite differences") {
    check_grad([](const std::vector<VarD>& v) { return reduce(sigmoid(v[0])); }, {randn({2, 2, 3, 3}, 20)});
    check_grad([](const std::vector<VarD>& v) { return reduce(tanh_act(v[0])); }, {randn({2, 2, 3, 3}, 21)});
    // ReLU is non-smooth at 0; keep inputs away from the kink.
    TensorD x = randn({2, 2, 4, 4}, 22);
    for (std::int64_t i = 0; i < x.numel(); ++i)
        if (std::abs(x[i]) < 1e-3) x[i] = 0.5;
    check_grad([](const std::vector<VarD>& v) { return reduce(relu(v[0])); }, {x});
}

TEST_CASE("pooling and upsampling match finite differences") {
    // Maxpool argmax must not flip under the probe step: use well-separated values.
    TensorD x({1, 2, 4, 4});
    std::mt19937_64 rng(33);
    for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<double>(rng() % 1000) / 10.0;
    check_grad([](const std::vector<VarD>& v) { return reduce(maxpool2(v[0])); }, {x});
    check_grad([](const std::vector<VarD>& v) { return reduce(upsample_nearest2(v[0])); },
               {randn({2, 3, 3, 4}, 34)});
}

TEST_CASE("concat, slice and elementwise ops match finite differences") {
    check_grad([](const std::vector<VarD>& v) { return reduce(concat_ch(v[0], v[1])); },
               {randn({2, 2, 3, 3}, 40), randn({2, 3, 3, 3}, 41)});
    check_grad([](const std::vector<VarD>& v) { return reduce(slice_ch(v[0], 1, 2)); },
               {randn({2, 4, 3, 3}, 42)});
    check_grad([](const std::vector<VarD>& v) { return reduce(mul(v[0], v[1])); },
               {randn({2, 2, 2, 2}, 43), randn({2, 2, 2, 2}, 44)});
    check_grad([](const std::vector<VarD>& v) { return reduce(add(scale(v[0], 2.5), v[1])); },
               {randn({2, 2, 2, 2}, 45), randn({2, 2, 2, 2}, 46)});
}

TEST_CASE("berhu_mean gradient matches finite differences away from the branch point") {
    TensorD target({2, 3, 4, 4});
    TensorD pred = randn(target.shape(), 50);
    // The backward pass differentiates the frozen-c function (c is a constant
    // by design), so the FD probe must hold c at its unperturbed value.
    double maxabs = 0;
    for (std::int64_t i = 0; i < pred.numel(); ++i) maxabs = std::max(maxabs, std::abs(pred[i]));
    const double c = 0.2 * maxabs;
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        if (std::abs(std::abs(pred[i]) - c) < 1e-3) pred[i] += 1e-2;
        if (std::abs(pred[i]) < 1e-3) pred[i] = 0.1;
    }
    check_grad([&](const std::vector<VarD>& v) { return berhu_mean(v[0], target, c); }, {pred});
}

TEST_CASE("mse_mean gradient matches finite differences") {
    TensorD target = randn({3, 2, 2, 2}, 60);
    check_grad([&](const std::vector<VarD>& v) { return mse_mean(v[0], target); }, {randn(target.shape(), 61)});
}

TEST_CASE("composite network gradient (conv-pool-upsample-concat-lstm-style gates)") {
    const TensorD x = randn({1, 2, 4, 4}, 70);
    const TensorD target({1, 2, 4, 4}, 0.3);
    const std::vector<TensorD> params{randn({3, 2, 3, 3}, 71, 0.5), randn({3}, 72, 0.1),
                                      randn({4, 6, 3, 3}, 73, 0.4), randn({4}, 74, 0.1)};
    auto net = [&](const std::vector<VarD>& v) {
        VarD a = relu(conv2d(VarD::constant(x), v[0], v[1]));
        VarD p = maxpool2(a);
        VarD u = upsample_nearest2(p);
        VarD cat = concat_ch(u, a);
        VarD g = conv2d(cat, v[2], v[3]);
        VarD i = sigmoid(slice_ch(g, 0, 2));
        VarD gg = tanh_act(slice_ch(g, 2, 2));
        return mul(i, gg);
    };
    // Freeze the BerHu threshold at its unperturbed value; the backward pass
    // differentiates the frozen-c function.
    double c;
    {
        NoGradGuard ng;
        std::vector<VarD> v;
        for (const auto& t : params) v.push_back(VarD::leaf(t, false));
        const TensorD out = net(v).value();
        double maxabs = 0;
        for (std::int64_t i = 0; i < out.numel(); ++i) maxabs = std::max(maxabs, std::abs(out[i] - target[i]));
        c = 0.2 * maxabs;
    }
    check_grad([&](const std::vector<VarD>& v) { return berhu_mean(net(v), target, c); }, params, 1e-6, 1e-6);
}

TEST_CASE("shared weights accumulate gradients from both uses") {
    const TensorD x = randn({1, 2, 4, 4}, 80);
    check_grad(
        [&](const std::vector<VarD>& v) {
            VarD once = relu(conv2d(VarD::constant(x), v[0], v[1]));
            VarD twice = conv2d(once, v[0], v[1]);  // same parameters reused
            return reduce(twice);
        },
        {randn({2, 2, 3, 3}, 81, 0.5), randn({2}, 82, 0.1)});
}

TEST_CASE("no-grad mode records no tape") {
    NoGradGuard ng;
    VarD w = VarD::leaf(randn({2, 2, 3, 3}, 90), true);
    VarD b = VarD::leaf(TensorD({2}), true);
    VarD y = conv2d(VarD::constant(randn({1, 2, 4, 4}, 91)), w, b);
    CHECK_FALSE(y.requires_grad());
    CHECK(y.node()->parents.empty());
}

TEST_CASE("backward through diamond graphs visits each node once") {
    TensorD xv = randn({1, 1, 2, 2}, 95);
    VarD x = VarD::leaf(xv, true);
    VarD a = scale(x, 2.0);
    VarD y = add(a, a);  // two consumers of one node
    VarD loss = mse_mean(y, TensorD({1, 1, 2, 2}));
    backward(loss);
    // d/dx mean((4x)^2) = 32x/numel
    for (std::int64_t i = 0; i < xv.numel(); ++i)
        CHECK(x.grad()[i] == doctest::Approx(32.0 * xv[i] / 4.0).epsilon(1e-12));
}
