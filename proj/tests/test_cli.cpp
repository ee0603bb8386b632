#include "catch2/catch_amalgamated.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stembuck/bucking.hpp"
#include "stembuck/checkpoint.hpp"
#include "stembuck/experiments.hpp"
#include "stembuck/stem_data.hpp"
#include "stembuck/taper_models.hpp"

using namespace stembuck;
namespace fs = std::filesystem;

namespace {

const std::string kCli = STEMBUCK_CLI_PATH;

int run(const std::string& args) {
    const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
    return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / "stembuck_cli_test") {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("cli: synth honours the count contract and is reproducible") {
    TempDir dir;
    const auto out = dir.file("stems.csv");
    REQUIRE(run("synth --species PIG --n 10 --seed 7 --out " + out) == 0);
    const auto stems = parse_stem_csv(out);
    CHECK(stems.size() == 10);
    for (const auto& s : stems) CHECK(s.species == Species::PiceaGlauca);

    const auto out2 = dir.file("stems2.csv");
    REQUIRE(run("synth --species PIG --n 10 --seed 7 --out " + out2) == 0);
    CHECK(slurp(out) == slurp(out2));

    const auto out3 = dir.file("stems3.csv");
    REQUIRE(run("synth --species PIG --n 10 --seed 8 --out " + out3) == 0);
    CHECK(slurp(out) != slurp(out3));
}

TEST_CASE("cli: rejects unknown subcommands and bad input") {
    CHECK(run("frobnicate") != 0);
    CHECK(run("synth --species NOPE --n 3 --seed 1 --out /tmp/x.csv") != 0);
    CHECK(run("synth --n 3 --out /tmp/x.csv") != 0);  // seed is mandatory
    CHECK(run("buck --stems /nonexistent.csv --seed 1 --out /tmp/y.csv") != 0);
}

TEST_CASE("cli: train writes a checkpoint and a loss history") {
    TempDir dir;
    const auto stems = dir.file("stems.csv");
    REQUIRE(run("synth --species ABB --n 12 --seed 3 --out " + stems) == 0);

    const auto poly = dir.file("poly.ckpt");
    REQUIRE(run("train --stems " + stems + " --species ABB --model polynomial --seed 5 --out " +
                poly) == 0);
    CHECK(load_checkpoint(poly).kind == ModelKind::Polynomial);

    const auto det = dir.file("det.ckpt");
    const auto losses = dir.file("loss.csv");
    REQUIRE(run("train --stems " + stems + " --species ABB --model deterministic --epochs 3 "
                "--seed 5 --out " + det + " --loss-csv " + losses) == 0);
    const auto model = load_checkpoint(det);
    CHECK(model.kind == ModelKind::Deterministic);
    std::ifstream in(losses);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 4);  // header + 3 epochs
}

TEST_CASE("cli: bucking plans match the library path end to end") {
    TempDir dir;
    const auto stems_path = dir.file("stems.csv");
    REQUIRE(run("synth --species PIM --n 4 --seed 11 --out " + stems_path) == 0);

    // no model: optimal plans, realized == planned on every row; inputs are
    // never mutated
    const std::string input_before = slurp(stems_path);
    const auto plans = dir.file("plans.csv");
    REQUIRE(run("buck --stems " + stems_path + " --seed 2 --out " + plans) == 0);
    CHECK(slurp(stems_path) == input_before);
    std::ifstream in(plans);
    std::string line;
    std::getline(in, line);
    CHECK(line == kPlanCsvHeader);
    int rows = 0;
    while (std::getline(in, line)) {
        const auto fields = stembuck::detail::split(line, ',');
        REQUIRE(fields.size() == 5);
        CHECK(fields[3] == fields[4]);
        ++rows;
    }
    CHECK(rows > 0);

    // stochastic model with sample size 1: the CLI plan equals bucking the
    // one sampled profile deterministically (surface of the n=1 invariant)
    const auto ckpt = dir.file("stoch.ckpt");
    REQUIRE(run("train --stems " + stems_path + " --species PIM --model stochastic --epochs 2 "
                "--seed 4 --out " + ckpt) == 0);
    const auto plan1 = dir.file("plan_n1.csv");
    REQUIRE(run("buck --stems " + stems_path + " --model " + ckpt +
                " --prefix-height 500 --sample-size 1 --seed 9 --out " + plan1) == 0);

    const auto model = load_checkpoint(ckpt);
    const auto profiles = parse_stem_csv(stems_path);
    std::ostringstream expected;
    expected << kPlanCsvHeader << "\n";
    const auto pm = standard_price_matrix();
    for (const auto& raw : profiles) {
        const auto grid = resample_to_grid(raw);
        const auto inst = augment_prefixes(grid, {500.0}).front();
        const auto samples = rollout_stochastic_sample(model, inst, 1, instance_sample_seed(9, inst));
        const auto plan = buck_deterministic(samples[0], pm);
        append_plan_csv(expected, raw.id, plan, pm, realized_cut_values(grid, plan, pm));
    }
    CHECK(slurp(plan1) == expected.str());
}

TEST_CASE("cli: a 1x1 grid produces a single-row report csv") {
    TempDir dir;
    REQUIRE(run("grid --synth-n 14 --species PIG --lambdas 0.3 --sizes 2 --epochs 1 "
                "--workers 1 --seed 6 --out-dir " + dir.file("out")) == 0);
    std::ifstream in(dir.file("out") + "/grid_reports.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == kReportCsvHeader);
    int rows = 0;
    while (std::getline(in, line)) rows += line.empty() ? 0 : 1;
    CHECK(rows == 1);
}

TEST_CASE("cli: studies are byte-identical across reruns") {
    TempDir dir;
    const std::string args = "study-diameter --synth-n 14 --species PIM --epochs 2 --workers 2 "
                             "--sample-size 2 --seed 12 --out-dir ";
    REQUIRE(run(args + dir.file("a")) == 0);
    REQUIRE(run(args + dir.file("b")) == 0);
    const auto a = slurp(dir.file("a") + "/diameter_reports.csv");
    CHECK(!a.empty());
    CHECK(a == slurp(dir.file("b") + "/diameter_reports.csv"));
}

TEST_CASE("cli: bias-variance writes the keyed csv") {
    TempDir dir;
    REQUIRE(run("bias-variance --synth-n 14 --species PIB --epochs 1 --workers 2 --seed 13 "
                "--out-dir " + dir.file("bv")) == 0);
    std::ifstream in(dir.file("bv") + "/bias_variance.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == kBiasVarianceCsvHeader);
    int rows = 0;
    while (std::getline(in, line)) rows += line.empty() ? 0 : 1;
    CHECK(rows > 0);
}
