// Command-line front end: synthetic data, model training, bucking and the
// scenario studies, all reproducible from a root seed.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "stembuck/bucking.hpp"
#include "stembuck/checkpoint.hpp"
#include "stembuck/experiments.hpp"
#include "stembuck/stem_data.hpp"
#include "stembuck/taper_models.hpp"
#include "stembuck/train.hpp"

namespace fs = std::filesystem;
using namespace stembuck;

namespace {

std::vector<Species> parse_species_list(const std::vector<std::string>& codes) {
    if (codes.empty()) return {kAllSpecies.begin(), kAllSpecies.end()};
    std::vector<Species> out;
    for (const auto& c : codes) out.push_back(species_from_code(c));
    return out;
}

void echo_artifact(const std::string& path) { std::cout << "wrote " << path << "\n"; }

std::ofstream open_output(const std::string& path) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path);
    if (!out) throw computation_error("cannot write '" + path + "'");
    return out;
}

// Shared data options for the study commands: either an existing stem CSV or
// on-the-fly synthetic stems.
struct DataOptions {
    std::string stems_path;
    int synth_n = 2000;
    std::vector<std::string> species_codes;

    void attach(CLI::App* cmd) {
        cmd->add_option("--stems", stems_path, "stem CSV (default: generate synthetic stems)");
        cmd->add_option("--synth-n", synth_n, "synthetic stems per species when --stems is absent")
            ->capture_default_str();
        cmd->add_option("--species", species_codes, "species codes to include (default: all)")
            ->delimiter(',');
    }

    std::vector<StemProfile> load(uint64_t seed) const {
        const auto species = parse_species_list(species_codes);
        if (!stems_path.empty()) {
            auto profiles = parse_stem_csv(stems_path);
            std::vector<StemProfile> filtered;
            for (auto& p : profiles) {
                if (std::find(species.begin(), species.end(), p.species) != species.end()) {
                    filtered.push_back(std::move(p));
                }
            }
            return filtered;
        }
        std::vector<StemProfile> profiles;
        for (const Species sp : species) {
            auto stems = generate_synthetic_stems(sp, species_defaults(sp), synth_n, seed);
            profiles.insert(profiles.end(), stems.begin(), stems.end());
        }
        return profiles;
    }

    std::vector<SpeciesData> prepare(uint64_t seed) const {
        const auto profiles = load(seed);
        const auto split = split_dataset(profiles, seed);
        std::vector<SpeciesData> data;
        for (const Species sp : parse_species_list(species_codes)) {
            data.push_back(prepare_species_data(profiles, split, sp));
        }
        return data;
    }
};

struct ProtocolOptions {
    double lambda = 0.3;
    int sample_size = 10;
    int poly_max_order = 1;
    int epochs = 200;
    int batch_size = 64;
    double learning_rate = 1e-3;
    int workers = static_cast<int>(std::thread::hardware_concurrency());

    void attach(CLI::App* cmd, bool with_hyper = true) {
        if (with_hyper) {
            cmd->add_option("--lambda", lambda, "loss weight for the stochastic model")
                ->capture_default_str();
            cmd->add_option("--sample-size", sample_size, "stochastic bucking sample size")
                ->capture_default_str();
            cmd->add_option("--poly-order", poly_max_order, "polynomial maximum order")
                ->capture_default_str();
        }
        cmd->add_option("--epochs", epochs, "training epochs")->capture_default_str();
        cmd->add_option("--batch-size", batch_size, "mini-batch size")->capture_default_str();
        cmd->add_option("--lr", learning_rate, "Adam learning rate")->capture_default_str();
        cmd->add_option("--workers", workers, "parallel worker count")->capture_default_str();
    }

    StudyProtocol protocol() const {
        StudyProtocol p;
        p.train.epochs = epochs;
        p.train.batch_size = batch_size;
        p.train.learning_rate = learning_rate;
        p.lambda = lambda;
        p.sample_size = sample_size;
        p.poly_max_order = poly_max_order;
        p.workers = std::max(workers, 1);
        return p;
    }
};

void write_report_outputs(const std::string& out_dir, const std::string& filename,
                          const std::vector<ScenarioReport>& reports) {
    const std::string path = (fs::path(out_dir) / filename).string();
    auto out = open_output(path);
    write_reports_csv(out, reports);
    out.close();
    print_report_table(std::cout, reports);
    echo_artifact(path);
}

// --- subcommand bodies ------------------------------------------------------

int cmd_synth(const std::vector<std::string>& species_codes, int n, uint64_t seed,
              const std::string& out_path) {
    std::vector<StemProfile> profiles;
    for (const Species sp : parse_species_list(species_codes)) {
        auto stems = generate_synthetic_stems(sp, species_defaults(sp), n, seed);
        profiles.insert(profiles.end(), stems.begin(), stems.end());
    }
    const fs::path p(out_path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    write_stem_csv(out_path, profiles);
    echo_artifact(out_path);
    return 0;
}

int cmd_train(const std::string& stems_path, const std::string& species_code,
              const std::string& model_name, const ProtocolOptions& proto, bool no_augment,
              uint64_t seed, const std::string& out_path, const std::string& loss_csv) {
    const Species species = species_from_code(species_code);
    const ModelKind kind = model_kind_from_name(model_name);

    std::vector<StemProfile> stems;
    for (auto& p : parse_stem_csv(stems_path)) {
        if (p.species == species) stems.push_back(resample_to_grid(p));
    }
    if (stems.empty()) {
        throw invalid_input("no stems of species " + species_code + " in " + stems_path);
    }

    TaperModel model;
    std::vector<double> loss_history;
    if (kind == ModelKind::Polynomial) {
        model = TaperModel::polynomial(species, fit_polynomial(stems, proto.poly_max_order));
    } else {
        std::vector<StemProfile> training = no_augment ? stems : make_instances(stems);
        if (training.empty()) training = stems;
        TrainConfig cfg;
        cfg.loss.lambda = proto.lambda;
        cfg.epochs = proto.epochs;
        cfg.batch_size = proto.batch_size;
        cfg.learning_rate = proto.learning_rate;
        cfg.seed = substream_seed(seed, "train", static_cast<uint64_t>(species));
        const TrainResult result = train_lstm(kind, training, cfg);
        loss_history = result.epoch_loss;
        model = kind == ModelKind::Stochastic
                    ? TaperModel::stochastic(species, result.params, LossConfig{proto.lambda})
                    : TaperModel::deterministic(species, result.params);
    }

    const fs::path p(out_path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    save_checkpoint(out_path, model);
    echo_artifact(out_path);

    if (!loss_csv.empty() && !loss_history.empty()) {
        auto out = open_output(loss_csv);
        out << "epoch,loss\n";
        for (size_t e = 0; e < loss_history.size(); ++e) {
            out << (e + 1) << ',' << detail::strfmt("%.10g", loss_history[e]) << "\n";
        }
        echo_artifact(loss_csv);
    }
    return 0;
}

int cmd_buck(const std::string& stems_path, const std::string& prices_path,
             const std::string& model_path, double prefix_height, int sample_size, uint64_t seed,
             const std::string& out_path) {
    const PriceMatrix pm =
        prices_path.empty() ? standard_price_matrix() : load_price_matrix_csv(prices_path);

    const auto profiles = parse_stem_csv(stems_path);
    if (profiles.empty()) throw invalid_input("no stems in " + stems_path);

    TaperModel model;
    bool have_model = false;
    if (!model_path.empty()) {
        model = load_checkpoint(model_path);
        have_model = true;
    }

    auto out = open_output(out_path);
    out << kPlanCsvHeader << "\n";
    for (const auto& raw : profiles) {
        const StemProfile grid = resample_to_grid(raw);
        CutPlan plan;
        if (!have_model) {
            plan = buck_deterministic(grid, pm);
        } else {
            if (raw.species != model.species) {
                std::cerr << "skipping stem '" << raw.id << "': checkpoint is for species "
                          << species_code(model.species) << "\n";
                continue;
            }
            auto instances = augment_prefixes(grid, {prefix_height});
            if (instances.empty()) {
                throw invalid_input(detail::strfmt(
                    "stem '%s': prefix height %.6g leaves no known or no unknown part",
                    raw.id.c_str(), prefix_height));
            }
            const StemProfile& inst = instances.front();
            if (model.kind == ModelKind::Stochastic) {
                const auto samples = rollout_stochastic_sample(
                    model, inst, sample_size, instance_sample_seed(seed, inst));
                plan = buck_stochastic(samples, pm);
            } else {
                plan = buck_deterministic(predict_profile(model, inst), pm);
            }
        }
        append_plan_csv(out, raw.id, plan, pm, realized_cut_values(grid, plan, pm));
    }
    out.close();
    echo_artifact(out_path);
    return 0;
}

int cmd_grid(const DataOptions& data_opts, const ProtocolOptions& proto,
             std::vector<double> lambdas, std::vector<int> sizes, uint64_t seed,
             const std::string& out_dir) {
    if (lambdas.empty()) lambdas = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    if (sizes.empty()) sizes = {1, 2, 5, 10, 20};

    const auto data = data_opts.prepare(seed);
    const GridResult result =
        run_hyperparameter_grid(data, lambdas, sizes, proto.protocol(), seed);
    for (const auto& failure : result.failures) {
        std::cerr << "cell failed: " << failure << "\n";
    }
    if (result.reports.empty()) throw computation_error("every grid cell failed");
    write_report_outputs(out_dir, "grid_reports.csv", result.reports);
    return 0;
}

int cmd_study(const std::string& which, const DataOptions& data_opts, const ProtocolOptions& proto,
              uint64_t seed, const std::string& out_dir) {
    const auto data = data_opts.prepare(seed);
    const auto models = train_study_models(data, proto.protocol(), seed);
    const auto reports = which == "diameter"
                             ? run_min_diameter_study(models, data, proto.protocol(), seed)
                             : run_price_study(models, data, proto.protocol(), seed);
    write_report_outputs(out_dir, which + "_reports.csv", reports);
    return 0;
}

int cmd_bias_variance(const DataOptions& data_opts, const ProtocolOptions& proto, uint64_t seed,
                      const std::string& out_dir) {
    const auto data = data_opts.prepare(seed);
    const auto models = train_study_models(data, proto.protocol(), seed);

    const std::string path = (fs::path(out_dir) / "bias_variance.csv").string();
    auto out = open_output(path);
    out << kBiasVarianceCsvHeader << "\n";
    for (size_t i = 0; i < data.size(); ++i) {
        for (const ModelKind kind :
             {ModelKind::Stochastic, ModelKind::Deterministic, ModelKind::Polynomial}) {
            const TaperModel& model = kind == ModelKind::Stochastic ? models[i].stochastic
                                      : kind == ModelKind::Deterministic
                                          ? models[i].deterministic
                                          : models[i].polynomial;
            const auto cells = bias_variance_table(model, data[i].test_instances);
            write_bias_variance_csv(out, kind, data[i].species, cells);
        }
    }
    out.close();
    echo_artifact(path);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stembuck: stochastic stem bucking with recurrent taper models"};
    app.set_config("--config", "", "read options from an INI file (flags win)");
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate synthetic stems");
    std::vector<std::string> synth_species;
    int synth_n = 500;
    uint64_t synth_seed = 0;
    std::string synth_out = "stems.csv";
    synth->add_option("--species", synth_species, "species codes (default: all)")->delimiter(',');
    synth->add_option("--n", synth_n, "stems per species")->capture_default_str();
    synth->add_option("--seed", synth_seed, "root seed")->required();
    synth->add_option("--out", synth_out, "output CSV")->capture_default_str();

    // train
    auto* train = app.add_subcommand("train", "fit one model and write a checkpoint");
    std::string train_stems, train_species, train_model = "stochastic";
    std::string train_out = "model.ckpt", train_loss_csv;
    bool train_no_augment = false;
    uint64_t train_seed = 0;
    ProtocolOptions train_proto;
    train->add_option("--stems", train_stems, "training stem CSV")->required();
    train->add_option("--species", train_species, "species code")->required();
    train->add_option("--model", train_model, "stochastic | deterministic | polynomial")
        ->capture_default_str();
    train_proto.attach(train);
    train->add_flag("--no-augment", train_no_augment, "train on raw stems without prefix copies");
    train->add_option("--seed", train_seed, "root seed")->required();
    train->add_option("--out", train_out, "checkpoint path")->capture_default_str();
    train->add_option("--loss-csv", train_loss_csv, "per-epoch training loss CSV");

    // buck
    auto* buck = app.add_subcommand("buck", "plan cuts for a file of stems");
    std::string buck_stems, buck_prices, buck_model, buck_out = "plans.csv";
    double buck_prefix = 500.0;
    int buck_sample_size = 10;
    uint64_t buck_seed = 0;
    buck->add_option("--stems", buck_stems, "stem CSV")->required();
    buck->add_option("--prices", buck_prices, "price matrix CSV (default: built-in tuning matrix)");
    buck->add_option("--model", buck_model,
                     "checkpoint; when absent, stems are bucked with their true profile");
    buck->add_option("--prefix-height", buck_prefix, "known prefix end in cm (with --model)")
        ->capture_default_str();
    buck->add_option("--sample-size", buck_sample_size, "stochastic sample size")
        ->capture_default_str();
    buck->add_option("--seed", buck_seed, "root seed")->required();
    buck->add_option("--out", buck_out, "plan CSV")->capture_default_str();

    // grid
    auto* grid = app.add_subcommand("grid", "lambda x sample-size hyper-parameter study");
    DataOptions grid_data;
    ProtocolOptions grid_proto;
    std::vector<double> grid_lambdas;
    std::vector<int> grid_sizes;
    uint64_t grid_seed = 0;
    std::string grid_out_dir = "out";
    grid_data.attach(grid);
    grid_proto.attach(grid, /*with_hyper=*/false);
    grid->add_option("--lambdas", grid_lambdas, "lambda grid (default 0.1..0.9)")->delimiter(',');
    grid->add_option("--sizes", grid_sizes, "sample-size grid (default 1,2,5,10,20)")
        ->delimiter(',');
    grid->add_option("--seed", grid_seed, "root seed")->required();
    grid->add_option("--out-dir", grid_out_dir, "report directory")->capture_default_str();

    // scenario studies
    auto* sdiam = app.add_subcommand("study-diameter", "minimum-diameter scenario study");
    auto* sprice = app.add_subcommand("study-price", "price scenario study");
    DataOptions sdiam_data, sprice_data;
    ProtocolOptions sdiam_proto, sprice_proto;
    uint64_t sdiam_seed = 0, sprice_seed = 0;
    std::string sdiam_out = "out", sprice_out = "out";
    sdiam_data.attach(sdiam);
    sdiam_proto.attach(sdiam);
    sdiam->add_option("--seed", sdiam_seed, "root seed")->required();
    sdiam->add_option("--out-dir", sdiam_out, "report directory")->capture_default_str();
    sprice_data.attach(sprice);
    sprice_proto.attach(sprice);
    sprice->add_option("--seed", sprice_seed, "root seed")->required();
    sprice->add_option("--out-dir", sprice_out, "report directory")->capture_default_str();

    // bias-variance
    auto* bv = app.add_subcommand("bias-variance", "prediction bias/variance tables");
    DataOptions bv_data;
    ProtocolOptions bv_proto;
    uint64_t bv_seed = 0;
    std::string bv_out = "out";
    bv_data.attach(bv);
    bv_proto.attach(bv);
    bv->add_option("--seed", bv_seed, "root seed")->required();
    bv->add_option("--out-dir", bv_out, "report directory")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(synth_species, synth_n, synth_seed, synth_out);
        if (train->parsed()) {
            return cmd_train(train_stems, train_species, train_model, train_proto,
                             train_no_augment, train_seed, train_out, train_loss_csv);
        }
        if (buck->parsed()) {
            return cmd_buck(buck_stems, buck_prices, buck_model, buck_prefix, buck_sample_size,
                            buck_seed, buck_out);
        }
        if (grid->parsed()) {
            return cmd_grid(grid_data, grid_proto, grid_lambdas, grid_sizes, grid_seed,
                            grid_out_dir);
        }
        if (sdiam->parsed()) return cmd_study("diameter", sdiam_data, sdiam_proto, sdiam_seed, sdiam_out);
        if (sprice->parsed()) return cmd_study("price", sprice_data, sprice_proto, sprice_seed, sprice_out);
        if (bv->parsed()) return cmd_bias_variance(bv_data, bv_proto, bv_seed, bv_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
