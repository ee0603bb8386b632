#include "catch2/catch_amalgamated.hpp"

#include <cmath>

#include "stembuck/losses.hpp"
#include "stembuck/rng.hpp"
#include "stembuck/train.hpp"

using namespace stembuck;

TEST_CASE("gaussian lambda loss, scalar cases") {
    // mu == x and sigma2 == 1: both terms vanish
    CHECK(gaussian_lambda_loss({{5.0, 1.0}}, {5.0}, LossConfig{0.3}) == 0.0);

    // error term zero, lambda * ln(e) = lambda
    CHECK_THAT(gaussian_lambda_loss({{2.0, std::exp(1.0)}}, {2.0}, LossConfig{0.999}),
               Catch::Matchers::WithinAbs(0.999, 1e-12));

    // lambda=0.5, mu-x=2, sigma2=2: 0.5*ln2 + 0.5*(4/2)
    CHECK_THAT(gaussian_lambda_loss({{3.0, 2.0}}, {1.0}, LossConfig{0.5}),
               Catch::Matchers::WithinAbs(1.3465735902799727, 1e-15));
}

TEST_CASE("gaussian lambda loss, error paths") {
    CHECK_THROWS_AS(gaussian_lambda_loss({{1.0, 1.0}}, {1.0, 2.0}, LossConfig{0.5}), invalid_input);
    CHECK_THROWS_AS(gaussian_lambda_loss({}, {}, LossConfig{0.5}), invalid_input);
    CHECK_THROWS_AS(gaussian_lambda_loss({{1.0, 0.0}}, {1.0}, LossConfig{0.5}), invalid_input);
    CHECK_THROWS_AS(gaussian_lambda_loss({{1.0, -2.0}}, {1.0}, LossConfig{0.5}), invalid_input);
    CHECK_THROWS_AS(gaussian_lambda_loss({{1.0, 1.0}}, {1.0}, LossConfig{0.0}), invalid_input);
    CHECK_THROWS_AS(gaussian_lambda_loss({{1.0, 1.0}}, {1.0}, LossConfig{1.0}), invalid_input);
}

TEST_CASE("exact gaussian nll, scalar cases") {
    // density at the mean of a standard normal
    CHECK_THAT(exact_gaussian_nll({{0.0, 1.0}}, {0.0}),
               Catch::Matchers::WithinAbs(0.9189385332046727, 1e-15));
    // one unit of error adds one half
    CHECK_THAT(exact_gaussian_nll({{1.0, 1.0}}, {0.0}),
               Catch::Matchers::WithinAbs(1.4189385332046727, 1e-15));
}

TEST_CASE("loss identity against the exact likelihood") {
    // The half-weighted loss differs from the exact NLL only by the constant;
    // equivalently the unweighted form equals 2*NLL - ln(2*pi).
    Rng rng(20240811);
    for (int k = 0; k < 1000; ++k) {
        std::vector<GaussianParams> preds;
        std::vector<double> targets;
        const int n = 1 + rng.uniform_int(5);
        for (int i = 0; i < n; ++i) {
            preds.push_back({rng.uniform(-10.0, 10.0), std::exp(rng.uniform(-4.0, 4.0))});
            targets.push_back(rng.uniform(-10.0, 10.0));
        }
        const double half = gaussian_lambda_loss(preds, targets, LossConfig{0.5});
        const double nll = exact_gaussian_nll(preds, targets);
        CHECK_THAT(half - (nll - kHalfLog2Pi), Catch::Matchers::WithinAbs(0.0, 1e-9));
        CHECK_THAT(2.0 * half - (2.0 * nll - 2.0 * kHalfLog2Pi),
                   Catch::Matchers::WithinAbs(0.0, 1e-9));
    }
}

TEST_CASE("argmin preservation over a dense grid") {
    // The simplified loss and the exact NLL must pick the same grid cell.
    const std::vector<double> data = {1.2, 0.7, 1.9, 1.4, 0.4};
    double best_simplified = 1e300, best_nll = 1e300;
    int arg_simplified = -1, arg_nll = -1;
    int cell = 0;
    for (double mu = -1.0; mu <= 3.0; mu += 0.05) {
        for (double s2 = 0.05; s2 <= 4.0; s2 += 0.05) {
            std::vector<GaussianParams> preds(data.size(), GaussianParams{mu, s2});
            const double simplified = 2.0 * gaussian_lambda_loss(preds, data, LossConfig{0.5});
            const double nll = exact_gaussian_nll(preds, data);
            if (simplified < best_simplified) {
                best_simplified = simplified;
                arg_simplified = cell;
            }
            if (nll < best_nll) {
                best_nll = nll;
                arg_nll = cell;
            }
            ++cell;
        }
    }
    CHECK(arg_simplified == arg_nll);
}

TEST_CASE("squared loss") {
    CHECK(squared_loss({1.0, 2.0}, {1.0, 2.0}) == 0.0);
    CHECK(squared_loss({1.0, -1.0}, {0.0, 0.0}) == 1.0);
    CHECK(squared_loss({3.0}, {0.0}) == 9.0);
    CHECK_THROWS_AS(squared_loss({1.0}, {1.0, 2.0}), invalid_input);
}

TEST_CASE("loss gradients match finite differences") {
    Rng rng(7);
    const LossConfig cfg{0.35};
    std::vector<GaussianParams> preds;
    std::vector<double> targets;
    for (int i = 0; i < 4; ++i) {
        preds.push_back({rng.uniform(-2.0, 2.0), std::exp(rng.uniform(-1.0, 1.0))});
        targets.push_back(rng.uniform(-2.0, 2.0));
    }
    const auto grads = gaussian_lambda_loss_grad(preds, targets, cfg);
    const double eps = 1e-6;
    for (size_t k = 0; k < preds.size(); ++k) {
        auto bump = preds;
        bump[k].mu += eps;
        double up = gaussian_lambda_loss(bump, targets, cfg);
        bump[k].mu -= 2 * eps;
        double down = gaussian_lambda_loss(bump, targets, cfg);
        CHECK_THAT(grads[k].d_mu, Catch::Matchers::WithinAbs((up - down) / (2 * eps), 1e-6));

        bump = preds;
        bump[k].sigma2 += eps;
        up = gaussian_lambda_loss(bump, targets, cfg);
        bump[k].sigma2 -= 2 * eps;
        down = gaussian_lambda_loss(bump, targets, cfg);
        CHECK_THAT(grads[k].d_sigma2, Catch::Matchers::WithinAbs((up - down) / (2 * eps), 1e-6));
    }
}

TEST_CASE("sigma2 stays positive for any finite pre-activation") {
    Rng rng(99);
    for (int i = 0; i < 1000; ++i) {
        const double raw = rng.uniform(-700.0, 700.0);
        CHECK(sigma2_from_raw(raw) > 0.0);
    }
    CHECK(sigma2_from_raw(-1e308) > 0.0);
}
