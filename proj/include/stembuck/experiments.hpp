#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "stembuck/bucking.hpp"
#include "stembuck/common.hpp"
#include "stembuck/stem_data.hpp"
#include "stembuck/taper_models.hpp"
#include "stembuck/train.hpp"

namespace stembuck {

// ---------------------------------------------------------------------------
// Statistics.

// Normal-approximation 95% confidence interval over the mean.
inline std::pair<double, double> ci95(const std::vector<double>& values) {
    if (values.size() < 2) throw invalid_input("ci95: need at least 2 values");
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (const double v : values) mean += v;
    mean /= n;
    double ss = 0.0;
    for (const double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    return {mean, 1.96 * sd / std::sqrt(n)};
}

// ---------------------------------------------------------------------------
// Scenario definitions.

struct Scenario {
    std::string name;
    PriceMatrix price_matrix;
    ModelKind model = ModelKind::Stochastic;
    Species species = Species::PiceaMariana;
    double lambda = 0.3;  // stochastic only
    int sample_size = 10;  // stochastic only
};

struct ScenarioReport {
    std::string scenario;
    ModelKind model = ModelKind::Stochastic;
    Species species = Species::PiceaMariana;
    size_t n = 0;
    double mean_deviation = 0.0;
    double ci95_halfwidth = 0.0;
};

// Minimum-diameter scenarios 1..5: the gap between the minimum diameter of
// short and long logs widens progressively. Lengths and prices stay at the
// tuning matrix values.
inline PriceMatrix min_diameter_scenario_matrix(int scenario) {
    if (scenario < 1 || scenario > 5) throw invalid_input("min diameter scenario must be in 1..5");
    static const double table[5][5] = {
        {9.00, 9.00, 9.00, 9.00, 9.00},       // 251
        {9.00, 10.22, 11.44, 12.66, 13.88},   // 312
        {9.00, 11.44, 13.88, 16.32, 18.76},   // 373
        {9.00, 12.66, 16.32, 19.98, 23.64},   // 434
        {9.00, 13.88, 18.76, 23.64, 28.52},   // 495
    };
    PriceMatrix pm = standard_price_matrix();
    for (int i = 0; i < 5; ++i) pm.products[static_cast<size_t>(i)].min_diameter_cm = table[i][scenario - 1];
    return pm;
}

// Price scenarios 1..9: scenario 5 prices logs at their length, lower
// scenarios favour short logs, higher scenarios favour long logs.
inline PriceMatrix price_scenario_matrix(int scenario) {
    if (scenario < 1 || scenario > 9) throw invalid_input("price scenario must be in 1..9");
    static const double table[5][9] = {
        {580.76, 437.17, 350.51, 292.52, 251.00, 219.80, 195.50, 176.03, 160.10},  // 251
        {545.76, 443.97, 382.54, 341.44, 312.00, 289.88, 272.66, 258.86, 247.56},  // 312
        {441.88, 411.89, 393.78, 381.67, 373.00, 366.48, 361.41, 357.34, 354.01},  // 373
        {269.12, 340.91, 384.24, 413.24, 434.00, 449.60, 461.75, 471.48, 479.45},  // 434
        {27.49, 231.06, 353.92, 436.13, 495.00, 539.23, 573.69, 601.28, 623.88},   // 495
    };
    PriceMatrix pm = standard_price_matrix();
    for (int i = 0; i < 5; ++i) pm.products[static_cast<size_t>(i)].price = table[i][scenario - 1];
    return pm;
}

// ---------------------------------------------------------------------------
// Dataset preparation.

// Per-species working set: unique grid stems for fitting, plus prefix-copy
// instances per split (every instance keeps the full measurement list; only
// the known-prefix marker varies).
struct SpeciesData {
    Species species = Species::PiceaMariana;
    std::vector<StemProfile> train_stems;       // grid stems, no copies
    std::vector<StemProfile> train_instances;   // prefix copies, training protocol
    std::vector<StemProfile> val_instances;
    std::vector<StemProfile> test_instances;
};

inline std::vector<StemProfile> make_instances(const std::vector<StemProfile>& grid_stems) {
    std::vector<StemProfile> instances;
    for (const auto& stem : grid_stems) {
        const auto heights = default_prefix_heights(stem);
        if (heights.empty()) continue;
        auto copies = augment_prefixes(stem, heights);
        instances.insert(instances.end(), copies.begin(), copies.end());
    }
    return instances;
}

inline SpeciesData prepare_species_data(const std::vector<StemProfile>& profiles,
                                        const DataSplit& split, Species species) {
    SpeciesData data;
    data.species = species;

    std::map<std::string, int> membership;  // 0 train, 1 val, 2 test
    for (const auto& id : split.train) membership[id] = 0;
    for (const auto& id : split.validation) membership[id] = 1;
    for (const auto& id : split.test) membership[id] = 2;

    std::vector<StemProfile> val_stems, test_stems;
    for (const auto& p : profiles) {
        if (p.species != species) continue;
        const auto it = membership.find(p.id);
        if (it == membership.end()) continue;
        StemProfile grid = resample_to_grid(p);
        switch (it->second) {
            case 0: data.train_stems.push_back(std::move(grid)); break;
            case 1: val_stems.push_back(std::move(grid)); break;
            default: test_stems.push_back(std::move(grid)); break;
        }
    }
    data.train_instances = make_instances(data.train_stems);
    data.val_instances = make_instances(val_stems);
    data.test_instances = make_instances(test_stems);
    return data;
}

// ---------------------------------------------------------------------------
// Evaluation.

// Difference between the best possible value (bucking the true profile) and
// what the plan actually realizes on the true profile. Both sides use the
// grouped per-product totals, so it is exactly zero for a plan that realizes
// the optimal log multiset and never negative otherwise.
inline double value_deviation(const StemProfile& true_profile, const CutPlan& plan,
                              const PriceMatrix& pm) {
    return optimal_value_on_true(true_profile, pm) - evaluate_plan_on_true(true_profile, plan, pm);
}

// Predictions for a list of instances, computed once and reused across every
// price-matrix scenario. Stochastic entries hold the whole sample; the other
// kinds hold a single predicted profile.
struct ModelPredictions {
    ModelKind kind = ModelKind::Deterministic;
    std::vector<std::vector<StemProfile>> per_instance;
};

inline uint64_t instance_sample_seed(uint64_t seed, const StemProfile& instance) {
    return substream_seed(seed, "sample", detail::fnv1a(instance.id),
                          static_cast<uint64_t>(instance.known_prefix_end_cm));
}

inline ModelPredictions make_predictions(const TaperModel& model,
                                         const std::vector<StemProfile>& instances,
                                         int sample_size, uint64_t seed) {
    ModelPredictions preds;
    preds.kind = model.kind;
    preds.per_instance.reserve(instances.size());
    for (const auto& inst : instances) {
        if (model.kind == ModelKind::Stochastic) {
            preds.per_instance.push_back(
                rollout_stochastic_sample(model, inst, sample_size, instance_sample_seed(seed, inst)));
        } else {
            preds.per_instance.push_back({predict_profile(model, inst)});
        }
    }
    return preds;
}

// Optimal bucking values of the true stems, shared by all prefix copies of a
// stem under one price matrix.
class OptimalValueCache {
public:
    double get(const StemProfile& true_profile, const PriceMatrix& pm) {
        const auto it = values_.find(true_profile.id);
        if (it != values_.end()) return it->second;
        const double v = optimal_value_on_true(true_profile, pm);
        values_.emplace(true_profile.id, v);
        return v;
    }

private:
    std::map<std::string, double> values_;
};

// Per-instance value deviations of precomputed predictions under one matrix.
inline std::vector<double> deviations_under_matrix(const ModelPredictions& preds,
                                                   const std::vector<StemProfile>& instances,
                                                   const PriceMatrix& pm) {
    if (preds.per_instance.size() != instances.size()) {
        throw invalid_input("deviations_under_matrix: predictions do not match instances");
    }
    OptimalValueCache optimal;
    std::vector<double> deviations;
    deviations.reserve(instances.size());
    for (size_t i = 0; i < instances.size(); ++i) {
        CutPlan plan;
        if (preds.kind == ModelKind::Stochastic) {
            plan = buck_stochastic(preds.per_instance[i], pm);
        } else {
            plan = buck_deterministic(preds.per_instance[i][0], pm);
        }
        const double realized = evaluate_plan_on_true(instances[i], plan, pm);
        deviations.push_back(optimal.get(instances[i], pm) - realized);
    }
    return deviations;
}

inline ScenarioReport make_report(const std::string& name, ModelKind kind, Species species,
                                  const std::vector<double>& deviations) {
    const auto [mean, hw] = ci95(deviations);
    return {name, kind, species, deviations.size(), mean, hw};
}

// ---------------------------------------------------------------------------
// Parallel job runner. Each job writes only its own slot, so scheduling
// cannot change the results.

inline void run_parallel(size_t n_jobs, int workers, const std::function<void(size_t)>& fn) {
    if (workers <= 1 || n_jobs <= 1) {
        for (size_t i = 0; i < n_jobs; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    const size_t n_threads = std::min(static_cast<size_t>(workers), n_jobs);
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (size_t w = 0; w < n_threads; ++w) {
        pool.emplace_back([&] {
            while (true) {
                const size_t i = next.fetch_add(1);
                if (i >= n_jobs) break;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Studies.

struct StudyProtocol {
    TrainConfig train;          // epochs/batch/lr; seed is overridden per study
    int sample_size = 10;       // stochastic bucking sample size
    double lambda = 0.3;        // stochastic loss weight
    int poly_max_order = 1;
    int workers = 1;
};

struct GridResult {
    std::vector<ScenarioReport> reports;
    std::vector<std::string> failures;  // failed cells, described
};

// Hyper-parameter study: one stochastic model per (species, lambda), each
// evaluated on the validation instances at every sample size under the
// tuning price matrix.
inline GridResult run_hyperparameter_grid(const std::vector<SpeciesData>& data,
                                          const std::vector<double>& lambdas,
                                          const std::vector<int>& sample_sizes,
                                          const StudyProtocol& protocol, uint64_t seed) {
    if (lambdas.empty() || sample_sizes.empty() || data.empty()) {
        throw invalid_input("run_hyperparameter_grid: empty grid");
    }
    const PriceMatrix pm = standard_price_matrix();

    struct Cell {
        std::vector<ScenarioReport> reports;
        std::string failure;
    };
    const size_t n_cells = data.size() * lambdas.size();
    std::vector<Cell> cells(n_cells);

    run_parallel(n_cells, protocol.workers, [&](size_t ci) {
        const SpeciesData& sd = data[ci / lambdas.size()];
        const double lambda = lambdas[ci % lambdas.size()];
        Cell& cell = cells[ci];
        try {
            TrainConfig cfg = protocol.train;
            cfg.loss.lambda = lambda;
            cfg.seed = substream_seed(seed, "grid-train", static_cast<uint64_t>(sd.species),
                                      detail::fnv1a(detail::strfmt("%.6g", lambda)));
            const TrainResult trained = train_lstm(ModelKind::Stochastic, sd.train_instances, cfg);
            const TaperModel model =
                TaperModel::stochastic(sd.species, trained.params, LossConfig{lambda});
            for (const int size : sample_sizes) {
                const auto preds = make_predictions(
                    model, sd.val_instances, size,
                    substream_seed(seed, "grid-eval", static_cast<uint64_t>(sd.species),
                                   static_cast<uint64_t>(size)));
                const auto deviations = deviations_under_matrix(preds, sd.val_instances, pm);
                cell.reports.push_back(make_report(detail::strfmt("grid-l%.1f-s%d", lambda, size),
                                                   ModelKind::Stochastic, sd.species, deviations));
            }
        } catch (const std::exception& e) {
            cell.failure = detail::strfmt("species %s lambda %.2f: %s", species_code(sd.species),
                                          lambda, e.what());
        }
    });

    GridResult result;
    for (const auto& cell : cells) {
        if (!cell.failure.empty()) result.failures.push_back(cell.failure);
        result.reports.insert(result.reports.end(), cell.reports.begin(), cell.reports.end());
    }
    return result;
}

// Models trained once per species with the selected hyper-parameters; the
// scenario studies evaluate these under varying price matrices.
struct SpeciesModels {
    Species species = Species::PiceaMariana;
    TaperModel stochastic, deterministic, polynomial;
};

inline std::vector<SpeciesModels> train_study_models(const std::vector<SpeciesData>& data,
                                                     const StudyProtocol& protocol, uint64_t seed) {
    std::vector<SpeciesModels> models(data.size());
    // two LSTM trainings per species; the polynomial fit is cheap
    run_parallel(data.size() * 2, protocol.workers, [&](size_t job) {
        const SpeciesData& sd = data[job / 2];
        SpeciesModels& out = models[job / 2];
        out.species = sd.species;
        TrainConfig cfg = protocol.train;
        if (job % 2 == 0) {
            cfg.loss.lambda = protocol.lambda;
            cfg.seed = substream_seed(seed, "train-stochastic", static_cast<uint64_t>(sd.species));
            const TrainResult trained = train_lstm(ModelKind::Stochastic, sd.train_instances, cfg);
            out.stochastic =
                TaperModel::stochastic(sd.species, trained.params, LossConfig{protocol.lambda});
        } else {
            cfg.seed = substream_seed(seed, "train-deterministic", static_cast<uint64_t>(sd.species));
            const TrainResult trained = train_lstm(ModelKind::Deterministic, sd.train_instances, cfg);
            out.deterministic = TaperModel::deterministic(sd.species, trained.params);
        }
    });
    for (size_t i = 0; i < data.size(); ++i) {
        models[i].polynomial = TaperModel::polynomial(
            data[i].species, fit_polynomial(data[i].train_stems, protocol.poly_max_order));
    }
    return models;
}

namespace detail {

// Shared driver for the scenario studies: predictions are made once per
// (species, model kind) and re-bucked under each scenario matrix.
inline std::vector<ScenarioReport> run_scenario_study(
    const std::vector<SpeciesModels>& models, const std::vector<SpeciesData>& data,
    const std::vector<std::pair<std::string, PriceMatrix>>& scenarios,
    const StudyProtocol& protocol, uint64_t seed) {
    if (models.size() != data.size()) throw invalid_input("scenario study: models/data mismatch");

    struct Job {
        size_t species_index;
        ModelKind kind;
    };
    std::vector<Job> jobs;
    for (size_t si = 0; si < models.size(); ++si) {
        for (const ModelKind kind :
             {ModelKind::Stochastic, ModelKind::Deterministic, ModelKind::Polynomial}) {
            jobs.push_back({si, kind});
        }
    }
    std::vector<std::vector<ScenarioReport>> per_job(jobs.size());

    run_parallel(jobs.size(), protocol.workers, [&](size_t ji) {
        const Job& job = jobs[ji];
        const SpeciesData& sd = data[job.species_index];
        const SpeciesModels& sm = models[job.species_index];
        const TaperModel& model = job.kind == ModelKind::Stochastic ? sm.stochastic
                                  : job.kind == ModelKind::Deterministic ? sm.deterministic
                                                                         : sm.polynomial;
        const auto preds = make_predictions(
            model, sd.test_instances, protocol.sample_size,
            substream_seed(seed, "study-eval", static_cast<uint64_t>(sd.species),
                           static_cast<uint64_t>(job.kind)));
        for (const auto& [name, pm] : scenarios) {
            const auto deviations = deviations_under_matrix(preds, sd.test_instances, pm);
            per_job[ji].push_back(make_report(name, job.kind, sd.species, deviations));
        }
    });

    std::vector<ScenarioReport> reports;
    for (const auto& r : per_job) reports.insert(reports.end(), r.begin(), r.end());
    return reports;
}

}  // namespace detail

inline std::vector<ScenarioReport> run_min_diameter_study(const std::vector<SpeciesModels>& models,
                                                          const std::vector<SpeciesData>& data,
                                                          const StudyProtocol& protocol,
                                                          uint64_t seed) {
    std::vector<std::pair<std::string, PriceMatrix>> scenarios;
    for (int s = 1; s <= 5; ++s) {
        scenarios.emplace_back(detail::strfmt("diam-%d", s), min_diameter_scenario_matrix(s));
    }
    return detail::run_scenario_study(models, data, scenarios, protocol, seed);
}

inline std::vector<ScenarioReport> run_price_study(const std::vector<SpeciesModels>& models,
                                                   const std::vector<SpeciesData>& data,
                                                   const StudyProtocol& protocol, uint64_t seed) {
    std::vector<std::pair<std::string, PriceMatrix>> scenarios;
    for (int s = 1; s <= 9; ++s) {
        scenarios.emplace_back(detail::strfmt("price-%d", s), price_scenario_matrix(s));
    }
    return detail::run_scenario_study(models, data, scenarios, protocol, seed);
}

// ---------------------------------------------------------------------------
// Bias / variance of the predictions.

struct BiasVarianceCell {
    int known_height_cm = 0;       // prefix end, floored to the grid
    int prediction_height_cm = 0;  // grid height of the prediction
    size_t n = 0;
    double bias = 0.0;
    double bias_ci95 = 0.0;
    double variance = 0.0;
    double variance_ci95 = 0.0;
};

// Prediction errors bucketed by (known height, prediction height) on the
// 2-m grid. Cells with fewer than two observations are omitted. The
// predictor maps an instance to a full predicted profile.
inline std::vector<BiasVarianceCell> bias_variance_table(
    const std::function<StemProfile(const StemProfile&)>& predictor,
    const std::vector<StemProfile>& instances) {
    std::map<std::pair<int, int>, std::vector<double>> errors;
    for (const auto& inst : instances) {
        const StemProfile pred = predictor(inst);
        const int known_bucket =
            static_cast<int>(inst.known_prefix_end_cm / kGridStepCm) * kGridStepCm;
        // true measurements indexed by grid height
        std::map<int, double> true_d;
        for (const auto& m : inst.measurements) {
            true_d[static_cast<int>(m.height_cm)] = m.diameter_cm;
        }
        for (const auto& m : pred.measurements) {
            if (m.height_cm <= inst.known_prefix_end_cm) continue;
            const auto it = true_d.find(static_cast<int>(m.height_cm));
            if (it == true_d.end()) continue;
            errors[{known_bucket, static_cast<int>(m.height_cm)}].push_back(m.diameter_cm -
                                                                            it->second);
        }
    }

    std::vector<BiasVarianceCell> cells;
    for (const auto& [key, errs] : errors) {
        if (errs.size() < 2) continue;
        BiasVarianceCell cell;
        cell.known_height_cm = key.first;
        cell.prediction_height_cm = key.second;
        cell.n = errs.size();
        const auto [mean, hw] = ci95(errs);
        cell.bias = mean;
        cell.bias_ci95 = hw;
        double ss = 0.0;
        for (const double e : errs) ss += (e - mean) * (e - mean);
        const double n = static_cast<double>(errs.size());
        cell.variance = ss / (n - 1.0);
        // normal-theory standard error of a sample variance
        cell.variance_ci95 = 1.96 * cell.variance * std::sqrt(2.0 / (n - 1.0));
        cells.push_back(cell);
    }
    return cells;
}

// Stochastic models contribute their mean rollout here, not sampled paths.
inline std::vector<BiasVarianceCell> bias_variance_table(const TaperModel& model,
                                                         const std::vector<StemProfile>& instances) {
    return bias_variance_table(
        [&model](const StemProfile& inst) { return predict_profile(model, inst); }, instances);
}

// ---------------------------------------------------------------------------
// Report output.

inline const char* kReportCsvHeader = "scenario,model,species,n,mean_deviation,ci95";
inline const char* kBiasVarianceCsvHeader =
    "model,species,known_height_cm,prediction_height_cm,n,bias,bias_ci95,variance,variance_ci95";

inline void write_reports_csv(std::ostream& out, const std::vector<ScenarioReport>& reports) {
    out << kReportCsvHeader << "\n";
    for (const auto& r : reports) {
        out << r.scenario << ',' << model_kind_name(r.model) << ',' << species_code(r.species)
            << ',' << r.n << ',' << detail::strfmt("%.10g,%.10g", r.mean_deviation, r.ci95_halfwidth)
            << "\n";
    }
}

inline void print_report_table(std::ostream& out, const std::vector<ScenarioReport>& reports) {
    out << detail::strfmt("%-14s %-14s %-8s %8s %16s\n", "scenario", "model", "species", "n",
                          "mean deviation");
    for (const auto& r : reports) {
        out << detail::strfmt("%-14s %-14s %-8s %8zu %10.2f \xc2\xb1 %.2f\n", r.scenario.c_str(),
                              model_kind_name(r.model), species_code(r.species), r.n,
                              r.mean_deviation, r.ci95_halfwidth);
    }
}

inline void write_bias_variance_csv(std::ostream& out, ModelKind kind, Species species,
                                    const std::vector<BiasVarianceCell>& cells) {
    for (const auto& c : cells) {
        out << model_kind_name(kind) << ',' << species_code(species) << ','
            << detail::strfmt("%d,%d,%zu,%.10g,%.10g,%.10g,%.10g", c.known_height_cm,
                              c.prediction_height_cm, c.n, c.bias, c.bias_ci95, c.variance,
                              c.variance_ci95)
            << "\n";
    }
}

}  // namespace stembuck
