#include "catch2/catch_amalgamated.hpp"

#include <cmath>
#include <sstream>

#include "stembuck/experiments.hpp"
#include "stembuck/rng.hpp"

using namespace stembuck;

TEST_CASE("ci95") {
    const auto [m0, h0] = ci95({2.5, 2.5, 2.5});
    CHECK(m0 == 2.5);
    CHECK(h0 == 0.0);

    const auto [m1, h1] = ci95({1.0, 2.0, 3.0});
    CHECK_THAT(m1, Catch::Matchers::WithinAbs(2.0, 1e-15));
    CHECK_THAT(h1, Catch::Matchers::WithinAbs(1.96 / std::sqrt(3.0), 1e-12));

    // scaling all values by c scales the mean and halfwidth by |c|
    const auto [m2, h2] = ci95({-3.0, -6.0, -9.0});
    CHECK_THAT(m2, Catch::Matchers::WithinAbs(-3.0 * m1, 1e-12));
    CHECK_THAT(h2, Catch::Matchers::WithinAbs(3.0 * h1, 1e-12));

    CHECK_THROWS_AS(ci95({1.0}), invalid_input);
}

TEST_CASE("ci95 halfwidth shrinks like one over sqrt n") {
    Rng rng(55);
    std::vector<double> values;
    for (int i = 0; i < 2000; ++i) values.push_back(rng.normal(10.0, 2.0));
    const auto [m1, h1] = ci95({values.begin(), values.begin() + 1000});
    const auto [m2, h2] = ci95(values);
    (void)m1;
    (void)m2;
    const double ratio = h1 / h2;
    CHECK(ratio > std::sqrt(2.0) * 0.9);
    CHECK(ratio < std::sqrt(2.0) * 1.1);
}

TEST_CASE("scenario matrices pin the expected schedules") {
    // scenario 1 equals the tuning matrix
    const auto base = standard_price_matrix();
    const auto diam1 = min_diameter_scenario_matrix(1);
    REQUIRE(diam1.products.size() == base.products.size());
    for (size_t i = 0; i < base.products.size(); ++i) {
        CHECK(diam1.products[i].length_cm == base.products[i].length_cm);
        CHECK(diam1.products[i].min_diameter_cm == base.products[i].min_diameter_cm);
        CHECK(diam1.products[i].price == base.products[i].price);
    }

    const auto diam3 = min_diameter_scenario_matrix(3);
    CHECK(diam3.products[4].length_cm == 495);
    CHECK(diam3.products[4].min_diameter_cm == 18.76);
    CHECK(diam3.products[1].min_diameter_cm == 11.44);
    const auto diam5 = min_diameter_scenario_matrix(5);
    CHECK(diam5.products[4].min_diameter_cm == 28.52);
    CHECK(diam5.products[0].min_diameter_cm == 9.00);

    const auto price1 = price_scenario_matrix(1);
    CHECK(price1.products[0].price == 580.76);
    CHECK(price1.products[4].price == 27.49);
    const auto price5 = price_scenario_matrix(5);
    for (int i = 0; i < 5; ++i) {
        CHECK(price5.products[static_cast<size_t>(i)].price ==
              static_cast<double>(price5.products[static_cast<size_t>(i)].length_cm));
    }
    const auto price9 = price_scenario_matrix(9);
    CHECK(price9.products[4].price == 623.88);
    CHECK(price9.products[0].price == 160.10);
    // the discard product is untouched in every scenario
    for (int s = 1; s <= 9; ++s) {
        CHECK(price_scenario_matrix(s).products[5].price == 0.0);
        CHECK(price_scenario_matrix(s).products[5].length_cm == 30);
    }

    CHECK_THROWS_AS(min_diameter_scenario_matrix(0), invalid_input);
    CHECK_THROWS_AS(min_diameter_scenario_matrix(6), invalid_input);
    CHECK_THROWS_AS(price_scenario_matrix(10), invalid_input);
}

TEST_CASE("value deviation") {
    const auto pm = standard_price_matrix();
    const auto stems = generate_synthetic_stems(Species::PiceaMariana,
                                                species_defaults(Species::PiceaMariana), 5, 77);
    for (const auto& stem : stems) {
        const auto grid = resample_to_grid(stem);
        const auto optimal = buck_deterministic(grid, pm);
        CHECK(value_deviation(grid, optimal, pm) == 0.0);
        CHECK(value_deviation(grid, CutPlan{}, pm) == optimal.total_planned_value);
    }
}

namespace {

StemProfile toy_instance(double prefix_end) {
    StemProfile p;
    p.species = Species::PiceaMariana;
    p.id = "toy";
    for (double h = 0.0; h <= 1600.0; h += 200.0) p.measurements.push_back({h, 24.0 - h / 100.0});
    p.known_prefix_end_cm = prefix_end;
    return p;
}

}  // namespace

TEST_CASE("bias variance table with reference predictors") {
    std::vector<StemProfile> instances(10, toy_instance(500.0));

    const auto perfect = [](const StemProfile& inst) { return inst; };
    for (const auto& cell : bias_variance_table(perfect, instances)) {
        CHECK(cell.bias == 0.0);
        CHECK(cell.variance == 0.0);
        CHECK(cell.known_height_cm == 400);
        CHECK(cell.prediction_height_cm > cell.known_height_cm);
        CHECK(cell.n == 10);
    }

    const auto high = [](const StemProfile& inst) {
        StemProfile out = inst;
        for (auto& m : out.measurements) m.diameter_cm += 1.0;
        return out;
    };
    for (const auto& cell : bias_variance_table(high, instances)) {
        CHECK_THAT(cell.bias, Catch::Matchers::WithinAbs(1.0, 1e-12));
        CHECK_THAT(cell.variance, Catch::Matchers::WithinAbs(0.0, 1e-12));
    }

    int call = 0;
    const auto alternating = [&call](const StemProfile& inst) mutable {
        StemProfile out = inst;
        const double sign = (call++ % 2 == 0) ? 1.0 : -1.0;
        for (auto& m : out.measurements) m.diameter_cm += sign;
        return out;
    };
    for (const auto& cell : bias_variance_table(alternating, instances)) {
        CHECK_THAT(cell.bias, Catch::Matchers::WithinAbs(0.0, 1e-12));
        CHECK_THAT(cell.variance, Catch::Matchers::WithinAbs(10.0 / 9.0, 1e-12));
    }

    // single-instance cells are omitted
    const std::vector<StemProfile> one(1, toy_instance(500.0));
    CHECK(bias_variance_table(perfect, one).empty());
}

TEST_CASE("hyper-parameter grid: cardinality, determinism, parallel equivalence") {
    std::vector<SpeciesData> data;
    for (const Species sp : {Species::PiceaMariana, Species::PiceaGlauca}) {
        SpeciesData sd;
        sd.species = sp;
        auto stems = generate_synthetic_stems(sp, species_defaults(sp), 14, 5);
        for (auto& s : stems) sd.train_stems.push_back(resample_to_grid(s));
        sd.train_instances = make_instances(sd.train_stems);
        auto val = generate_synthetic_stems(sp, species_defaults(sp), 4, 6);
        std::vector<StemProfile> val_grid;
        for (auto& s : val) val_grid.push_back(resample_to_grid(s));
        sd.val_instances = make_instances(val_grid);
        data.push_back(std::move(sd));
    }

    StudyProtocol protocol;
    protocol.train.epochs = 2;
    protocol.workers = 1;

    const auto single = run_hyperparameter_grid(data, {0.3}, {2}, protocol, 11);
    CHECK(single.failures.empty());
    CHECK(single.reports.size() == 2);  // one per species
    CHECK(single.reports[0].scenario == "grid-l0.3-s2");
    CHECK(single.reports[0].n >= 2);

    const auto lambdas = std::vector<double>{0.2, 0.5};
    const auto sizes = std::vector<int>{1, 3};
    const auto serial = run_hyperparameter_grid(data, lambdas, sizes, protocol, 11);
    CHECK(serial.reports.size() == 2 * 2 * 2);

    StudyProtocol parallel = protocol;
    parallel.workers = 4;
    const auto threaded = run_hyperparameter_grid(data, lambdas, sizes, parallel, 11);
    REQUIRE(threaded.reports.size() == serial.reports.size());
    for (size_t i = 0; i < serial.reports.size(); ++i) {
        CHECK(threaded.reports[i].scenario == serial.reports[i].scenario);
        CHECK(threaded.reports[i].mean_deviation == serial.reports[i].mean_deviation);
        CHECK(threaded.reports[i].ci95_halfwidth == serial.reports[i].ci95_halfwidth);
    }

    CHECK_THROWS_AS(run_hyperparameter_grid(data, {}, {1}, protocol, 1), invalid_input);
}

TEST_CASE("same predictions under the scenario-1 matrix match the tuning matrix") {
    SpeciesData sd;
    sd.species = Species::AbiesBalsamea;
    auto stems = generate_synthetic_stems(Species::AbiesBalsamea,
                                          species_defaults(Species::AbiesBalsamea), 6, 9);
    std::vector<StemProfile> grid;
    for (auto& s : stems) grid.push_back(resample_to_grid(s));
    const auto instances = make_instances(grid);

    auto lstm = LstmParams::create(1, 10, 2);
    lstm.init_uniform(3);
    const auto model = TaperModel::stochastic(Species::AbiesBalsamea, lstm, LossConfig{0.3});
    const auto preds = make_predictions(model, instances, 3, 42);

    const auto dev_base = deviations_under_matrix(preds, instances, standard_price_matrix());
    const auto dev_s1 = deviations_under_matrix(preds, instances, min_diameter_scenario_matrix(1));
    CHECK(dev_base == dev_s1);
}

TEST_CASE("deterministic lstm bias shrinks with longer known prefixes") {
    // directional check: at a fixed prediction height, knowing more of the
    // stem must not increase |bias| in at least 70% of comparable cell pairs
    const Species sp = Species::PiceaMariana;
    auto stems = generate_synthetic_stems(sp, species_defaults(sp), 800, 31);
    std::vector<StemProfile> train_grid, test_grid;
    for (size_t i = 0; i < stems.size(); ++i) {
        (i < 600 ? train_grid : test_grid).push_back(resample_to_grid(stems[i]));
    }

    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.seed = 17;
    const auto trained = train_lstm(ModelKind::Deterministic, make_instances(train_grid), cfg);
    const auto model = TaperModel::deterministic(sp, trained.params);
    const auto cells = bias_variance_table(model, make_instances(test_grid));
    REQUIRE(!cells.empty());

    std::map<std::pair<int, int>, double> bias;  // (known, prediction) -> bias
    for (const auto& c : cells) bias[{c.known_height_cm, c.prediction_height_cm}] = c.bias;
    int comparable = 0, non_increasing = 0;
    for (const auto& [key, b] : bias) {
        for (int wider_known = key.first + 200; wider_known <= 3200; wider_known += 200) {
            const auto wider = bias.find({wider_known, key.second});
            if (wider == bias.end()) continue;
            ++comparable;
            if (std::abs(wider->second) <= std::abs(b)) ++non_increasing;
        }
    }
    REQUIRE(comparable >= 10);
    CHECK(static_cast<double>(non_increasing) >= 0.7 * static_cast<double>(comparable));
}

TEST_CASE("report csv format") {
    std::vector<ScenarioReport> reports = {
        {"diam-1", ModelKind::Stochastic, Species::PiceaGlauca, 42, 120.8125, 0.113}};
    std::ostringstream out;
    write_reports_csv(out, reports);
    CHECK(out.str() ==
          "scenario,model,species,n,mean_deviation,ci95\n"
          "diam-1,stochastic,PIG,42,120.8125,0.113\n");
}
