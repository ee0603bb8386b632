#pragma once

#include <cmath>
#include <vector>

#include "stembuck/common.hpp"

namespace stembuck {

// Parameters of one predicted normal distribution.
struct GaussianParams {
    double mu = 0.0;
    double sigma2 = 1.0;
};

struct LossConfig {
    double lambda = 0.3;  // in (0, 1); weights log-variance vs squared error

    void validate() const {
        if (!(lambda > 0.0 && lambda < 1.0)) {
            throw invalid_input(detail::strfmt("lambda must be in (0,1), got %.6g", lambda));
        }
    }
};

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2*pi)

namespace detail {

inline void check_loss_inputs(size_t n_preds, size_t n_targets) {
    if (n_preds != n_targets) {
        throw invalid_input(strfmt("loss: %zu predictions vs %zu targets", n_preds, n_targets));
    }
    if (n_preds == 0) throw invalid_input("loss: empty input");
}

inline void check_sigma2(double sigma2) {
    if (!(sigma2 > 0.0)) throw invalid_input(strfmt("loss: nonpositive sigma2 %.6g", sigma2));
}

}  // namespace detail

// (1/n) sum_k [ lambda*ln(sigma2_k) + (1-lambda)*(mu_k - x_k)^2 / sigma2_k ]
inline double gaussian_lambda_loss(const std::vector<GaussianParams>& preds,
                                   const std::vector<double>& targets, const LossConfig& config) {
    detail::check_loss_inputs(preds.size(), targets.size());
    config.validate();
    const double lambda = config.lambda;
    double sum = 0.0;
    for (size_t k = 0; k < preds.size(); ++k) {
        detail::check_sigma2(preds[k].sigma2);
        const double err = preds[k].mu - targets[k];
        sum += lambda * std::log(preds[k].sigma2) + (1.0 - lambda) * err * err / preds[k].sigma2;
    }
    return sum / static_cast<double>(preds.size());
}

// Mean per-observation exact negative log-likelihood, constant included.
inline double exact_gaussian_nll(const std::vector<GaussianParams>& preds,
                                 const std::vector<double>& targets) {
    detail::check_loss_inputs(preds.size(), targets.size());
    double sum = 0.0;
    for (size_t k = 0; k < preds.size(); ++k) {
        detail::check_sigma2(preds[k].sigma2);
        const double err = preds[k].mu - targets[k];
        sum += kHalfLog2Pi + 0.5 * std::log(preds[k].sigma2) + 0.5 * err * err / preds[k].sigma2;
    }
    return sum / static_cast<double>(preds.size());
}

// (1/n) sum_k (mu_k - x_k)^2
inline double squared_loss(const std::vector<double>& preds, const std::vector<double>& targets) {
    detail::check_loss_inputs(preds.size(), targets.size());
    double sum = 0.0;
    for (size_t k = 0; k < preds.size(); ++k) {
        const double err = preds[k] - targets[k];
        sum += err * err;
    }
    return sum / static_cast<double>(preds.size());
}

// Gradients of the mean losses with respect to (mu_k, sigma2_k). Feeds the
// network backward pass during training.
struct GaussianLossGrad {
    double d_mu = 0.0;
    double d_sigma2 = 0.0;
};

inline std::vector<GaussianLossGrad> gaussian_lambda_loss_grad(
    const std::vector<GaussianParams>& preds, const std::vector<double>& targets,
    const LossConfig& config) {
    detail::check_loss_inputs(preds.size(), targets.size());
    config.validate();
    const double lambda = config.lambda;
    const double inv_n = 1.0 / static_cast<double>(preds.size());
    std::vector<GaussianLossGrad> grads(preds.size());
    for (size_t k = 0; k < preds.size(); ++k) {
        detail::check_sigma2(preds[k].sigma2);
        const double err = preds[k].mu - targets[k];
        const double s2 = preds[k].sigma2;
        grads[k].d_mu = inv_n * 2.0 * (1.0 - lambda) * err / s2;
        grads[k].d_sigma2 = inv_n * (lambda / s2 - (1.0 - lambda) * err * err / (s2 * s2));
    }
    return grads;
}

inline std::vector<double> squared_loss_grad(const std::vector<double>& preds,
                                             const std::vector<double>& targets) {
    detail::check_loss_inputs(preds.size(), targets.size());
    const double inv_n = 1.0 / static_cast<double>(preds.size());
    std::vector<double> grads(preds.size());
    for (size_t k = 0; k < preds.size(); ++k) {
        grads[k] = inv_n * 2.0 * (preds[k] - targets[k]);
    }
    return grads;
}

}  // namespace stembuck
