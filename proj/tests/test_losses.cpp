#include <doctest.h>

#include <random>
#include <vector>

#include "fdc/autograd.hpp"
#include "fdc/losses.hpp"

using namespace fdc;

TEST_CASE("berhu hand values") {
    CHECK(berhu<double>(std::vector<double>{0, 0, 0}) == 0.0);

    // single residual 1: c = 0.2, value (1 + 0.04)/0.4 = 2.6
    CHECK(berhu<double>(std::vector<double>{1.0}) == doctest::Approx(2.6).epsilon(1e-12));

    // residuals {0.1, 0.5}: c = 0.1 -> values {0.1, (0.25+0.01)/0.2 = 1.3}, mean 0.7
    CHECK(berhu<double>(std::vector<double>{0.1, 0.5}) == doctest::Approx(0.7).epsilon(1e-12));

    CHECK_THROWS_AS(berhu<double>(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("berhu branch continuity and one-sided slopes at |x| = c") {
    // Batch fixing c: max residual 1 -> c = 0.2. Probe elements near c.
    auto loss_at = [](double probe) {
        return berhu<double>(std::vector<double>{1.0, probe});
    };
    const double c = 0.2;
    const double eps = 1e-6;
    CHECK(std::abs(loss_at(c - eps) - loss_at(c + eps)) < 1e-5);
    // Both one-sided derivatives equal sign(x) = 1 at the joint.
    const double left = (loss_at(c) - loss_at(c - eps)) / eps;
    const double right = (loss_at(c + eps) - loss_at(c)) / eps;
    CHECK(left == doctest::Approx(0.5).epsilon(1e-4));   // d mean/dx = 1/2 per element
    CHECK(right == doctest::Approx(0.5).epsilon(1e-4));
}

TEST_CASE("berhu >= L1 pointwise with equality iff |x| <= c") {
    std::mt19937_64 rng(3);
    std::vector<double> r(64);
    for (auto& v : r) v = (static_cast<double>(rng() % 2000) - 1000.0) / 250.0;
    double maxabs = 0;
    for (double v : r) maxabs = std::max(maxabs, std::abs(v));
    const double c = 0.2 * maxabs;
    for (double v : r) {
        const double single = std::abs(v) <= c ? std::abs(v) : (v * v + c * c) / (2 * c);
        CHECK(single >= std::abs(v) - 1e-15);
        if (std::abs(v) <= c) CHECK(single == doctest::Approx(std::abs(v)));
        if (std::abs(v) > c + 1e-12) CHECK(single > std::abs(v));
    }
}

TEST_CASE("flow_loss hand values and permutation invariance") {
    Tensor pred({1, 2, 2, 2});
    Tensor gt({1, 2, 2, 2});
    CHECK(flow_loss(pred, gt) == 0.0);

    for (std::int64_t i = 0; i < pred.numel(); ++i) pred[i] = 0.5f;
    // constant residual 0.5: c = 0.1, each value (0.25+0.01)/0.2 = 1.3
    CHECK(flow_loss(pred, gt) == doctest::Approx(1.3).epsilon(1e-6));

    std::mt19937_64 rng(5);
    Tensor a({1, 1, 4, 4});
    for (std::int64_t i = 0; i < a.numel(); ++i) a[i] = static_cast<float>(rng() % 100) / 25.f;
    Tensor shuffled = a;
    std::vector<int> perm{5, 3, 11, 0, 1, 15, 7, 2, 9, 14, 4, 13, 6, 8, 10, 12};
    for (int i = 0; i < 16; ++i) shuffled[i] = a[perm[static_cast<size_t>(i)]];
    CHECK(flow_loss(a, Tensor({1, 1, 4, 4})) ==
          doctest::Approx(flow_loss(shuffled, Tensor({1, 1, 4, 4}))).epsilon(1e-12));
}

TEST_CASE("depth_loss hand value: one of four pixels off by 1") {
    Tensor pred({1, 1, 2, 2});
    Tensor gt({1, 1, 2, 2});
    pred[0] = 1.f;
    // c = 0.2, faulty pixel costs 2.6, mean over 4 = 0.65
    CHECK(depth_loss(pred, gt) == doctest::Approx(0.65).epsilon(1e-7));

    // doubling residuals strictly increases the loss
    Tensor pred2 = pred;
    pred2[0] = 2.f;
    CHECK(depth_loss(pred2, gt) > depth_loss(pred, gt));
}

TEST_CASE("total_loss linear combination") {
    LossWeights w;  // alpha 10, beta 1
    Tensor zf({1, 2, 2, 2}), zd({1, 1, 2, 2});
    CHECK(total_loss(zf, zf, zd, zd, w) == 0.0);

    // flow_loss = 1, depth_loss = 2 -> 10*1 + 1*2 = 12 (scaled residual construction)
    // constant residual r gives loss (r^2 + (0.2r)^2) / (0.4r) = 2.6r
    Tensor f({1, 2, 2, 2});
    Tensor d({1, 1, 2, 2});
    for (std::int64_t i = 0; i < f.numel(); ++i) f[i] = static_cast<float>(1.0 / 2.6);
    for (std::int64_t i = 0; i < d.numel(); ++i) d[i] = static_cast<float>(2.0 / 2.6);
    CHECK(total_loss(f, zf, d, zd, w) == doctest::Approx(12.0).epsilon(1e-6));

    CHECK(total_loss(f, zf, d, zd, LossWeights{0, 1}) == doctest::Approx(2.0).epsilon(1e-6));
    CHECK_THROWS_AS(total_loss(f, zf, d, zd, LossWeights{0, 0}), std::invalid_argument);
}

TEST_CASE("zero iff exact for positive weights") {
    std::mt19937_64 rng(9);
    Tensor pred({1, 2, 3, 3}), gt({1, 2, 3, 3});
    for (std::int64_t i = 0; i < pred.numel(); ++i) pred[i] = gt[i] = static_cast<float>(rng() % 50) / 10.f;
    Tensor dp({1, 1, 3, 3}), dg({1, 1, 3, 3});
    CHECK(total_loss(pred, gt, dp, dg, LossWeights{}) == 0.0);
    pred[4] += 0.25f;
    CHECK(total_loss(pred, gt, dp, dg, LossWeights{}) > 0.0);
}

TEST_CASE("autograd berhu_mean agrees with the scalar reference") {
    std::mt19937_64 rng(17);
    TensorD pred({2, 3, 4, 4}), gt({2, 3, 4, 4});
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        pred[i] = (static_cast<double>(rng() % 1000) - 500) / 300.0;
        gt[i] = (static_cast<double>(rng() % 1000) - 500) / 300.0;
    }
    std::vector<double> residuals(static_cast<size_t>(pred.numel()));
    for (std::int64_t i = 0; i < pred.numel(); ++i) residuals[static_cast<size_t>(i)] = pred[i] - gt[i];
    const VarD v = berhu_mean(VarD::constant(pred), gt);
    CHECK(v.value()[0] == doctest::Approx(berhu<double>(residuals)).epsilon(1e-12));
}
