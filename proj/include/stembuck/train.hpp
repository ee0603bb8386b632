#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "stembuck/adam.hpp"
#include "stembuck/common.hpp"
#include "stembuck/losses.hpp"
#include "stembuck/lstm.hpp"
#include "stembuck/rng.hpp"
#include "stembuck/stem_data.hpp"

namespace stembuck {

enum class ModelKind { Stochastic, Deterministic, Polynomial };

inline const char* model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::Stochastic: return "stochastic";
        case ModelKind::Deterministic: return "deterministic";
        case ModelKind::Polynomial: return "polynomial";
    }
    return "?";
}

inline ModelKind model_kind_from_name(const std::string& s) {
    if (s == "stochastic") return ModelKind::Stochastic;
    if (s == "deterministic") return ModelKind::Deterministic;
    if (s == "polynomial") return ModelKind::Polynomial;
    throw invalid_input("unknown model kind '" + s + "'");
}

// Diameters are fed to the network divided by this factor; losses are
// computed in scaled space and predictions rescaled on output.
inline constexpr double kDiameterScaleCm = 100.0;

// Floor added to exp(raw) so the predicted variance stays positive for any
// finite pre-activation (scaled units).
inline constexpr double kSigma2Floor = 1e-6;

inline double sigma2_from_raw(double raw) { return std::exp(raw) + kSigma2Floor; }

// One training sequence: the scaled diameter at grid step t is the input and
// the scaled diameter at grid step t+1 is the target (full teacher forcing).
struct TrainingSequence {
    std::vector<double> inputs;
    std::vector<double> targets;
};

inline TrainingSequence sequence_from_profile(const StemProfile& grid_profile) {
    const auto& ms = grid_profile.measurements;
    TrainingSequence seq;
    seq.inputs.reserve(ms.size() - 1);
    seq.targets.reserve(ms.size() - 1);
    for (size_t i = 0; i + 1 < ms.size(); ++i) {
        seq.inputs.push_back(ms[i].diameter_cm / kDiameterScaleCm);
        seq.targets.push_back(ms[i + 1].diameter_cm / kDiameterScaleCm);
    }
    return seq;
}

inline std::vector<TrainingSequence> build_sequences(const std::vector<StemProfile>& profiles) {
    std::vector<TrainingSequence> seqs;
    seqs.reserve(profiles.size());
    for (const auto& p : profiles) seqs.push_back(sequence_from_profile(resample_to_grid(p)));
    return seqs;
}

struct TrainConfig {
    LossConfig loss{0.3};        // stochastic loss only
    int epochs = 200;
    int batch_size = 64;
    double learning_rate = 1e-3;
    double clip_norm = 5.0;      // global-norm gradient clipping
    uint64_t seed = 0;
    int hidden_size = 10;
};

struct TrainResult {
    LstmParams params;
    std::vector<double> epoch_loss;  // mean training loss per epoch
};

namespace detail {

// Per-sequence loss and dLoss/dy for the cached forward pass. Stochastic
// models read (mu, raw) from the two head outputs with sigma2 = exp(raw) +
// floor; deterministic models read mu only.
inline double sequence_loss_and_grad(ModelKind kind, const LossConfig& loss_cfg,
                                     const LstmCache& cache, const std::vector<double>& targets,
                                     std::vector<double>& d_outputs) {
    const int T = cache.steps;
    if (kind == ModelKind::Stochastic) {
        d_outputs.assign(static_cast<size_t>(T) * 2, 0.0);
        double sum = 0.0;
        const double lambda = loss_cfg.lambda;
        const double inv_n = 1.0 / static_cast<double>(T);
        for (int t = 0; t < T; ++t) {
            const double mu = cache.output(t, 0, 2);
            const double raw = cache.output(t, 1, 2);
            const double s2 = sigma2_from_raw(raw);
            const double err = mu - targets[static_cast<size_t>(t)];
            sum += lambda * std::log(s2) + (1.0 - lambda) * err * err / s2;
            const double d_mu = inv_n * 2.0 * (1.0 - lambda) * err / s2;
            const double d_s2 = inv_n * (lambda / s2 - (1.0 - lambda) * err * err / (s2 * s2));
            d_outputs[static_cast<size_t>(t) * 2] = d_mu;
            d_outputs[static_cast<size_t>(t) * 2 + 1] = d_s2 * std::exp(raw);
        }
        return sum * inv_n;
    }
    d_outputs.assign(static_cast<size_t>(T), 0.0);
    double sum = 0.0;
    const double inv_n = 1.0 / static_cast<double>(T);
    for (int t = 0; t < T; ++t) {
        const double err = cache.output(t, 0, 1) - targets[static_cast<size_t>(t)];
        sum += err * err;
        d_outputs[static_cast<size_t>(t)] = inv_n * 2.0 * err;
    }
    return sum * inv_n;
}

inline void clip_global_norm(std::vector<double>& grad, double max_norm) {
    double sq = 0.0;
    for (const double g : grad) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (double& g : grad) g *= scale;
    }
}

}  // namespace detail

// 200 epochs of shuffled mini-batches, Adam, loss per the model kind.
// Deterministic given the seed.
inline TrainResult train_lstm(ModelKind kind, const std::vector<StemProfile>& training_stems,
                              const TrainConfig& config) {
    if (kind == ModelKind::Polynomial) {
        throw invalid_input("train_lstm: polynomial models are fitted, not trained");
    }
    if (training_stems.empty()) throw invalid_input("train_lstm: empty training set");
    if (kind == ModelKind::Stochastic) config.loss.validate();

    const auto sequences = build_sequences(training_stems);
    const int K = kind == ModelKind::Stochastic ? 2 : 1;

    TrainResult result;
    result.params = LstmParams::create(1, config.hidden_size, K);
    result.params.init_uniform(substream_seed(config.seed, "init"));

    AdamState adam = AdamState::create(result.params.param_count(), config.learning_rate);

    std::vector<size_t> order(sequences.size());
    std::iota(order.begin(), order.end(), size_t{0});

    LstmCache cache;
    std::vector<double> d_outputs;
    std::vector<double> grad(result.params.param_count(), 0.0);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Rng shuffle_rng(substream_seed(config.seed, "shuffle", static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double epoch_loss_sum = 0.0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
            std::fill(grad.begin(), grad.end(), 0.0);
            for (size_t b = start; b < end; ++b) {
                const TrainingSequence& seq = sequences[order[b]];
                lstm_forward(result.params, seq.inputs, cache);
                const double loss =
                    detail::sequence_loss_and_grad(kind, config.loss, cache, seq.targets, d_outputs);
                if (!std::isfinite(loss)) {
                    throw computation_error(detail::strfmt(
                        "training diverged: non-finite loss at epoch %d (sequence %zu)", epoch,
                        order[b]));
                }
                epoch_loss_sum += loss;
                lstm_backward_accumulate(result.params, cache, d_outputs, grad);
            }
            const double inv_batch = 1.0 / static_cast<double>(end - start);
            for (double& g : grad) g *= inv_batch;
            detail::clip_global_norm(grad, config.clip_norm);
            adam_step(adam, result.params.flat, grad);
        }
        if (!result.params.all_finite()) {
            throw computation_error(detail::strfmt(
                "training diverged: non-finite parameters after epoch %d", epoch));
        }
        result.epoch_loss.push_back(epoch_loss_sum / static_cast<double>(sequences.size()));
    }
    return result;
}

}  // namespace stembuck
