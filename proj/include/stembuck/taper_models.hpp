#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "stembuck/common.hpp"
#include "stembuck/lstm.hpp"
#include "stembuck/rng.hpp"
#include "stembuck/stem_data.hpp"
#include "stembuck/train.hpp"

namespace stembuck {

// Bivariate polynomial in (height, first known diameter): all monomials
// h^a * d0^b with a + b <= max_order, both variables rescaled before
// evaluation to keep the design matrix well conditioned.
struct PolynomialCoeffs {
    int max_order = 1;
    std::vector<double> coefficients;  // ordered by (a, b), see monomial_loop

    static size_t coefficient_count(int max_order) {
        return static_cast<size_t>((max_order + 1) * (max_order + 2) / 2);
    }
};

inline constexpr double kPolyHeightScaleCm = 1000.0;
inline constexpr double kPolyD0ScaleCm = 100.0;

namespace detail {

// Visits monomial exponent pairs in the canonical coefficient order.
template <typename F>
inline void monomial_loop(int max_order, F&& f) {
    for (int a = 0; a <= max_order; ++a) {
        for (int b = 0; b <= max_order - a; ++b) f(a, b);
    }
}

inline void polynomial_features(int max_order, double height_cm, double d0_cm,
                                std::vector<double>& out) {
    out.clear();
    const double h = height_cm / kPolyHeightScaleCm;
    const double d0 = d0_cm / kPolyD0ScaleCm;
    monomial_loop(max_order, [&](int a, int b) {
        out.push_back(std::pow(h, a) * std::pow(d0, b));
    });
}

// Householder QR least squares for tall systems; reports rank deficiency.
inline std::vector<double> solve_least_squares(std::vector<double> a, std::vector<double> b,
                                               size_t rows, size_t cols) {
    if (rows < cols) throw invalid_input("least squares: fewer rows than unknowns");
    for (size_t k = 0; k < cols; ++k) {
        double norm = 0.0;
        for (size_t i = k; i < rows; ++i) norm += a[i * cols + k] * a[i * cols + k];
        norm = std::sqrt(norm);
        if (norm < 1e-12) {
            throw computation_error(strfmt("least squares: rank-deficient design matrix (column %zu)", k));
        }
        const double alpha = a[k * cols + k] >= 0.0 ? -norm : norm;
        // Householder vector v, stored in place of column k below the diagonal
        const double vk = a[k * cols + k] - alpha;
        a[k * cols + k] = vk;
        double vnorm2 = 0.0;
        for (size_t i = k; i < rows; ++i) vnorm2 += a[i * cols + k] * a[i * cols + k];
        if (vnorm2 > 0.0) {
            for (size_t j = k + 1; j < cols; ++j) {
                double dot = 0.0;
                for (size_t i = k; i < rows; ++i) dot += a[i * cols + k] * a[i * cols + j];
                const double scale = 2.0 * dot / vnorm2;
                for (size_t i = k; i < rows; ++i) a[i * cols + j] -= scale * a[i * cols + k];
            }
            double dot = 0.0;
            for (size_t i = k; i < rows; ++i) dot += a[i * cols + k] * b[i];
            const double scale = 2.0 * dot / vnorm2;
            for (size_t i = k; i < rows; ++i) b[i] -= scale * a[i * cols + k];
        }
        a[k * cols + k] = alpha;  // diagonal of R
        for (size_t i = k + 1; i < rows; ++i) a[i * cols + k] = 0.0;
    }
    // back substitution on R x = Q^T b
    std::vector<double> x(cols, 0.0);
    for (size_t k = cols; k-- > 0;) {
        double acc = b[k];
        for (size_t j = k + 1; j < cols; ++j) acc -= a[k * cols + j] * x[j];
        if (std::abs(a[k * cols + k]) < 1e-12) {
            throw computation_error("least squares: rank-deficient design matrix");
        }
        x[k] = acc / a[k * cols + k];
    }
    return x;
}

}  // namespace detail

// Ordinary least squares of diameter on the monomial basis, pooled over all
// (height, diameter) pairs of all training stems.
inline PolynomialCoeffs fit_polynomial(const std::vector<StemProfile>& training_stems,
                                       int max_order) {
    if (max_order < 0) throw invalid_input("fit_polynomial: negative max order");
    const size_t n_coeffs = PolynomialCoeffs::coefficient_count(max_order);
    size_t rows = 0;
    for (const auto& s : training_stems) rows += s.measurements.size();
    if (rows < n_coeffs) {
        throw invalid_input(detail::strfmt("fit_polynomial: %zu points for %zu coefficients",
                                           rows, n_coeffs));
    }

    std::vector<double> a;
    a.reserve(rows * n_coeffs);
    std::vector<double> b;
    b.reserve(rows);
    std::vector<double> features;
    for (const auto& s : training_stems) {
        const double d0 = s.measurements.front().diameter_cm;
        for (const auto& m : s.measurements) {
            detail::polynomial_features(max_order, m.height_cm, d0, features);
            a.insert(a.end(), features.begin(), features.end());
            b.push_back(m.diameter_cm);
        }
    }

    PolynomialCoeffs coeffs;
    coeffs.max_order = max_order;
    coeffs.coefficients = detail::solve_least_squares(std::move(a), std::move(b), rows, n_coeffs);
    return coeffs;
}

// Polynomial evaluation, clamped to nonnegative diameters. The 4 cm / 40 m
// stop rule is applied where rollouts are assembled, not here.
inline std::vector<double> predict_polynomial(const PolynomialCoeffs& coeffs, double d0_cm,
                                              const std::vector<double>& heights_cm) {
    std::vector<double> out;
    out.reserve(heights_cm.size());
    std::vector<double> features;
    for (const double h : heights_cm) {
        detail::polynomial_features(coeffs.max_order, h, d0_cm, features);
        double v = 0.0;
        for (size_t i = 0; i < features.size(); ++i) v += coeffs.coefficients[i] * features[i];
        out.push_back(std::max(v, 0.0));
    }
    return out;
}

// ---------------------------------------------------------------------------

// One trained taper model of any family behind a single prediction surface.
struct TaperModel {
    ModelKind kind = ModelKind::Deterministic;
    Species species = Species::PiceaMariana;
    LstmParams lstm;         // Stochastic / Deterministic
    PolynomialCoeffs poly;   // Polynomial
    LossConfig loss{0.3};    // stochastic only

    static TaperModel stochastic(Species sp, LstmParams params, LossConfig loss) {
        TaperModel m;
        m.kind = ModelKind::Stochastic;
        m.species = sp;
        m.lstm = std::move(params);
        m.loss = loss;
        return m;
    }
    static TaperModel deterministic(Species sp, LstmParams params) {
        TaperModel m;
        m.kind = ModelKind::Deterministic;
        m.species = sp;
        m.lstm = std::move(params);
        return m;
    }
    static TaperModel polynomial(Species sp, PolynomialCoeffs coeffs) {
        TaperModel m;
        m.kind = ModelKind::Polynomial;
        m.species = sp;
        m.poly = std::move(coeffs);
        return m;
    }
};

// Known grid measurements of an instance (heights <= known_prefix_end).
inline std::vector<StemMeasurement> known_prefix(const StemProfile& grid_profile) {
    std::vector<StemMeasurement> prefix;
    for (const auto& m : grid_profile.measurements) {
        if (m.height_cm <= grid_profile.known_prefix_end_cm) prefix.push_back(m);
    }
    return prefix;
}

namespace detail {

// Primes an LSTM stepper with the scaled prefix diameters; returns the head
// outputs of the last prefix step (which parameterize the first prediction).
inline std::vector<double> prime_with_prefix(LstmStepper& stepper,
                                             const std::vector<StemMeasurement>& prefix) {
    std::vector<double> y;
    for (const auto& m : prefix) y = stepper.step(m.diameter_cm / kDiameterScaleCm);
    return y;
}

}  // namespace detail

// Point rollout: feeds the known prefix, then autoregressively feeds each
// predicted mean back in. Stops below 4 cm or above 40 m; predictions are
// clamped to >= 0. Works for both LSTM families (the stochastic model's mean
// output is used).
inline std::vector<StemMeasurement> rollout_deterministic(
    const TaperModel& model, const std::vector<StemMeasurement>& prefix) {
    if (prefix.empty()) throw invalid_input("rollout_deterministic: empty prefix");
    if (model.kind == ModelKind::Polynomial) {
        throw invalid_input("rollout_deterministic: polynomial models use predict_polynomial");
    }

    std::vector<StemMeasurement> continuation;
    if (prefix.back().diameter_cm < kStopDiameterCm) return continuation;

    LstmStepper stepper(model.lstm);
    std::vector<double> y = detail::prime_with_prefix(stepper, prefix);
    double height = prefix.back().height_cm;
    while (true) {
        const double next_height = height + kGridStepCm;
        if (next_height > kMaxHeightCm) break;
        const double d = std::max(y[0] * kDiameterScaleCm, 0.0);
        if (d <= 0.0) break;
        continuation.push_back({next_height, d});
        if (d < kStopDiameterCm) break;
        height = next_height;
        y = stepper.step(d / kDiameterScaleCm);
    }
    return continuation;
}

// Truncated-at-zero Gaussian draw: resample until nonnegative, give up after
// 100 tries and clamp.
inline double sample_truncated_normal(Rng& rng, double mu, double sd) {
    for (int attempt = 0; attempt < 100; ++attempt) {
        const double v = rng.normal(mu, sd);
        if (v >= 0.0) return v;
    }
    return 0.0;
}

// Distributional rollout: n independent sample paths, each feeding its own
// draws back as inputs. Every returned profile is known prefix ++ sampled
// continuation, so a sample can go straight into the bucking optimizer.
inline std::vector<StemProfile> rollout_stochastic_sample(const TaperModel& model,
                                                          const StemProfile& grid_instance,
                                                          int n, uint64_t seed) {
    if (model.kind != ModelKind::Stochastic) {
        throw invalid_input("rollout_stochastic_sample: model is not stochastic");
    }
    if (n < 1) throw invalid_input("rollout_stochastic_sample: sample size must be >= 1");

    const auto prefix = known_prefix(grid_instance);
    if (prefix.empty()) throw invalid_input("rollout_stochastic_sample: empty prefix");

    std::vector<StemProfile> samples;
    samples.reserve(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) {
        Rng rng(substream_seed(seed, "path", static_cast<uint64_t>(j)));
        StemProfile path;
        path.species = grid_instance.species;
        path.id = grid_instance.id + detail::strfmt("#s%d", j);
        path.known_prefix_end_cm = grid_instance.known_prefix_end_cm;
        path.measurements = prefix;

        if (prefix.back().diameter_cm >= kStopDiameterCm) {
            LstmStepper stepper(model.lstm);
            std::vector<double> y = detail::prime_with_prefix(stepper, prefix);
            double height = prefix.back().height_cm;
            while (true) {
                const double next_height = height + kGridStepCm;
                if (next_height > kMaxHeightCm) break;
                const double mu = y[0];
                const double sd = std::sqrt(sigma2_from_raw(y[1]));
                const double draw = sample_truncated_normal(rng, mu, sd);
                const double d = draw * kDiameterScaleCm;
                if (d <= 0.0) break;
                path.measurements.push_back({next_height, d});
                if (d < kStopDiameterCm) break;
                height = next_height;
                y = stepper.step(draw);
            }
        }
        samples.push_back(std::move(path));
    }
    return samples;
}

// Full predicted profile (known prefix ++ continuation) for any model kind;
// this is the single surface the bucking pipeline consumes.
inline StemProfile predict_profile(const TaperModel& model, const StemProfile& grid_instance) {
    const auto prefix = known_prefix(grid_instance);
    if (prefix.empty()) throw invalid_input("predict_profile: empty prefix");

    StemProfile out;
    out.species = grid_instance.species;
    out.id = grid_instance.id;
    out.known_prefix_end_cm = grid_instance.known_prefix_end_cm;
    out.measurements = prefix;

    if (model.kind == ModelKind::Polynomial) {
        if (prefix.back().diameter_cm < kStopDiameterCm) return out;
        const double d0 = prefix.front().diameter_cm;
        std::vector<double> heights;
        for (double h = prefix.back().height_cm + kGridStepCm; h <= kMaxHeightCm; h += kGridStepCm) {
            heights.push_back(h);
        }
        const auto preds = predict_polynomial(model.poly, d0, heights);
        for (size_t i = 0; i < preds.size(); ++i) {
            if (preds[i] <= 0.0) break;
            out.measurements.push_back({heights[i], preds[i]});
            if (preds[i] < kStopDiameterCm) break;
        }
        return out;
    }

    const auto continuation = rollout_deterministic(model, prefix);
    out.measurements.insert(out.measurements.end(), continuation.begin(), continuation.end());
    return out;
}

}  // namespace stembuck
