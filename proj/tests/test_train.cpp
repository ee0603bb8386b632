#include "catch2/catch_amalgamated.hpp"

#include <cmath>

#include "stembuck/stem_data.hpp"
#include "stembuck/train.hpp"

using namespace stembuck;

namespace {

std::vector<StemProfile> constant_stems(int n, double diameter) {
    std::vector<StemProfile> stems;
    for (int i = 0; i < n; ++i) {
        StemProfile p;
        p.species = Species::AbiesBalsamea;
        p.id = "c" + std::to_string(i);
        for (double h = 0.0; h <= 1800.0; h += 200.0) p.measurements.push_back({h, diameter});
        p.known_prefix_end_cm = 0.0;
        stems.push_back(std::move(p));
    }
    return stems;
}

double mean_sigma2(const LstmParams& params, const std::vector<StemProfile>& stems) {
    double sum = 0.0;
    size_t count = 0;
    for (const auto& seq : build_sequences(stems)) {
        const auto cache = lstm_forward(params, seq.inputs);
        for (int t = 0; t < cache.steps; ++t) {
            sum += sigma2_from_raw(cache.output(t, 1, 2));
            ++count;
        }
    }
    return sum / static_cast<double>(count);
}

}  // namespace

TEST_CASE("deterministic model learns a constant map") {
    const auto stems = constant_stems(30, 20.0);
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.seed = 7;
    const auto result = train_lstm(ModelKind::Deterministic, stems, cfg);
    REQUIRE(result.epoch_loss.size() == 200);
    CHECK(result.epoch_loss.back() < result.epoch_loss.front());
    CHECK(result.epoch_loss.back() < result.epoch_loss.front() / 10.0);
}

TEST_CASE("training is bitwise deterministic in the seed") {
    const auto stems = constant_stems(12, 18.0);
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.seed = 99;
    const auto a = train_lstm(ModelKind::Stochastic, stems, cfg);
    const auto b = train_lstm(ModelKind::Stochastic, stems, cfg);
    REQUIRE(a.params.flat.size() == b.params.flat.size());
    for (size_t i = 0; i < a.params.flat.size(); ++i) {
        CHECK(a.params.flat[i] == b.params.flat[i]);
    }
    CHECK(a.epoch_loss == b.epoch_loss);
}

TEST_CASE("predicted variance shrinks over training on noiseless stems") {
    auto params = species_defaults(Species::PiceaMariana);
    params.taper_noise_sd_cm = 0.0;
    const auto stems = generate_synthetic_stems(Species::PiceaMariana, params, 20, 11);

    TrainConfig cfg;
    cfg.seed = 5;
    cfg.epochs = 1;
    const auto after_one = train_lstm(ModelKind::Stochastic, stems, cfg);
    cfg.epochs = 200;
    const auto after_full = train_lstm(ModelKind::Stochastic, stems, cfg);

    CHECK(mean_sigma2(after_full.params, stems) < mean_sigma2(after_one.params, stems));
}

TEST_CASE("training rejects bad input and aborts on divergence") {
    CHECK_THROWS_AS(train_lstm(ModelKind::Deterministic, {}, TrainConfig{}), invalid_input);
    CHECK_THROWS_AS(train_lstm(ModelKind::Polynomial, constant_stems(3, 20.0), TrainConfig{}),
                    invalid_input);

    TrainConfig wild;
    wild.epochs = 5;
    wild.seed = 3;
    wild.learning_rate = 1e80;  // one step overflows the head outputs
    CHECK_THROWS_AS(train_lstm(ModelKind::Stochastic, constant_stems(8, 20.0), wild),
                    computation_error);
}
