#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "stembuck/common.hpp"
#include "stembuck/rng.hpp"

namespace stembuck {

// Model input grid: one diameter every 2 m starting at the stump.
inline constexpr int kGridStepCm = 200;
inline constexpr double kBreastHeightCm = 130.0;
// Stem predictions stop below this diameter or above this height.
inline constexpr double kStopDiameterCm = 4.0;
inline constexpr double kMaxHeightCm = 4000.0;

enum class Species { PiceaMariana, PiceaGlauca, AbiesBalsamea, PinusBanksiana };

inline constexpr std::array<Species, 4> kAllSpecies = {
    Species::PiceaMariana, Species::PiceaGlauca, Species::AbiesBalsamea, Species::PinusBanksiana};

inline const char* species_code(Species s) {
    switch (s) {
        case Species::PiceaMariana: return "PIM";
        case Species::PiceaGlauca: return "PIG";
        case Species::AbiesBalsamea: return "ABB";
        case Species::PinusBanksiana: return "PIB";
    }
    return "?";
}

inline Species species_from_code(const std::string& code) {
    if (code == "PIM") return Species::PiceaMariana;
    if (code == "PIG") return Species::PiceaGlauca;
    if (code == "ABB") return Species::AbiesBalsamea;
    if (code == "PIB") return Species::PinusBanksiana;
    throw invalid_input("unknown species code '" + code + "'");
}

struct StemMeasurement {
    double height_cm = 0.0;    // from the stump
    double diameter_cm = 0.0;  // over bark
};

// One stem profile. `known_prefix_end_cm` separates the part of the stem that
// has already been measured from the part a model must predict.
struct StemProfile {
    Species species = Species::PiceaMariana;
    std::string id;
    std::vector<StemMeasurement> measurements;  // heights strictly increasing
    double known_prefix_end_cm = 0.0;

    double top_height_cm() const { return measurements.back().height_cm; }
    double first_height_cm() const { return measurements.front().height_cm; }

    void validate() const {
        if (measurements.size() < 2) {
            throw invalid_input("stem '" + id + "': needs at least 2 measurements");
        }
        for (size_t i = 0; i < measurements.size(); ++i) {
            if (!(measurements[i].diameter_cm > 0.0)) {
                throw invalid_input(detail::strfmt(
                    "stem '%s': nonpositive diameter %.6g at height %.6g", id.c_str(),
                    measurements[i].diameter_cm, measurements[i].height_cm));
            }
            if (i > 0 && !(measurements[i].height_cm > measurements[i - 1].height_cm)) {
                throw invalid_input("stem '" + id + "': non-increasing heights");
            }
        }
        if (known_prefix_end_cm < first_height_cm() || known_prefix_end_cm > top_height_cm()) {
            throw invalid_input("stem '" + id + "': known_prefix_end outside measured range");
        }
    }
};

struct DataSplit {
    std::vector<std::string> train, validation, test;
};

// Parameters of the synthetic stem generator, one set per species. DBH
// bounds come from the inventory summary the generator imitates; the height
// rule and taper shape are fitted by eye to produce plausible boreal conifers.
struct SyntheticSpeciesParams {
    double dbh_min_cm = 0.0;
    double dbh_mean_cm = 0.0;
    double dbh_max_cm = 0.0;
    // total height (cm) = c0 + c1 * dbh^c2, deterministic in DBH
    std::array<double, 3> height_coefficients{};
    double taper_noise_sd_cm = 0.0;
    // taper shape: quadratic-in-relative-height cone plus butt swell
    double taper_quadratic = 0.6;
    // relative per-stem spread of the quadratic term; individual stems taper
    // differently, which is what a prefix-conditioned model can pick up
    double taper_shape_jitter = 0.35;
    double butt_swell = 0.12;
    double butt_swell_decay_cm = 60.0;
    // lag-1 correlation of the grid noise; consecutive diameters along a stem
    // are correlated, which is what makes conditioning on the prefix pay off
    double noise_correlation = 0.7;

    void validate() const {
        if (!(dbh_min_cm < dbh_mean_cm && dbh_mean_cm < dbh_max_cm)) {
            throw invalid_input("synthetic params: need dbh_min < dbh_mean < dbh_max");
        }
        if (taper_noise_sd_cm < 0.0) throw invalid_input("synthetic params: taper_noise_sd < 0");
        if (noise_correlation < 0.0 || noise_correlation >= 1.0) {
            throw invalid_input("synthetic params: noise_correlation outside [0,1)");
        }
    }
};

inline SyntheticSpeciesParams species_defaults(Species s) {
    SyntheticSpeciesParams p;
    switch (s) {
        case Species::AbiesBalsamea:
            p.dbh_min_cm = 10.8; p.dbh_mean_cm = 22.2; p.dbh_max_cm = 40.0;
            p.height_coefficients = {420.0, 62.0, 0.84};
            p.taper_noise_sd_cm = 0.5;
            break;
        case Species::PiceaMariana:
            p.dbh_min_cm = 9.3; p.dbh_mean_cm = 19.3; p.dbh_max_cm = 42.3;
            p.height_coefficients = {400.0, 60.0, 0.85};
            p.taper_noise_sd_cm = 0.45;
            break;
        case Species::PiceaGlauca:
            p.dbh_min_cm = 11.4; p.dbh_mean_cm = 28.9; p.dbh_max_cm = 56.8;
            p.height_coefficients = {450.0, 65.0, 0.85};
            p.taper_noise_sd_cm = 0.8;  // widest stems, largest shape variation
            p.taper_quadratic = 0.7;
            break;
        case Species::PinusBanksiana:
            p.dbh_min_cm = 9.0; p.dbh_mean_cm = 21.0; p.dbh_max_cm = 47.4;
            p.height_coefficients = {430.0, 58.0, 0.86};
            p.taper_noise_sd_cm = 0.65;
            p.taper_quadratic = 0.5;
            break;
    }
    return p;
}

// ---------------------------------------------------------------------------
// CSV ingestion. Format: header `species,stem_id,height_cm,diameter_cm`,
// species codes PIM/PIG/ABB/PIB, one measurement per row, '.' decimal point.

inline const char* kStemCsvHeader = "species,stem_id,height_cm,diameter_cm";

inline std::vector<StemProfile> parse_stem_csv_stream(std::istream& in, const std::string& origin) {
    std::string line;
    if (!std::getline(in, line)) return {};  // empty file -> empty list
    if (detail::trim(line) != kStemCsvHeader) {
        throw invalid_input(origin + ":1: expected header '" + std::string(kStemCsvHeader) + "'");
    }

    // keyed by (species, id), insertion order preserved for output
    std::vector<StemProfile> profiles;
    std::map<std::pair<int, std::string>, size_t> index;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string trimmed = detail::trim(line);
        if (trimmed.empty()) continue;
        const auto fields = detail::split(trimmed, ',');
        if (fields.size() != 4) {
            throw invalid_input(detail::strfmt("%s:%ld: expected 4 fields, got %zu", origin.c_str(),
                                               line_no, fields.size()));
        }
        Species sp;
        try {
            sp = species_from_code(detail::trim(fields[0]));
        } catch (const invalid_input& e) {
            throw invalid_input(detail::strfmt("%s:%ld: %s", origin.c_str(), line_no, e.what()));
        }
        const std::string id = detail::trim(fields[1]);
        double h, d;
        try {
            h = detail::parse_double(detail::trim(fields[2]), "height_cm");
            d = detail::parse_double(detail::trim(fields[3]), "diameter_cm");
        } catch (const invalid_input& e) {
            throw invalid_input(detail::strfmt("%s:%ld: %s", origin.c_str(), line_no, e.what()));
        }
        if (h < 0.0) {
            throw invalid_input(detail::strfmt("%s:%ld: negative height", origin.c_str(), line_no));
        }
        if (!(d > 0.0)) {
            throw invalid_input(detail::strfmt("%s:%ld: nonpositive diameter", origin.c_str(), line_no));
        }
        const auto key = std::make_pair(static_cast<int>(sp), id);
        auto it = index.find(key);
        if (it == index.end()) {
            it = index.emplace(key, profiles.size()).first;
            profiles.push_back(StemProfile{sp, id, {}, 0.0});
        }
        profiles[it->second].measurements.push_back({h, d});
    }

    for (auto& p : profiles) {
        std::stable_sort(p.measurements.begin(), p.measurements.end(),
                         [](const StemMeasurement& a, const StemMeasurement& b) {
                             return a.height_cm < b.height_cm;
                         });
        p.known_prefix_end_cm = p.measurements.front().height_cm;
        p.validate();
    }
    return profiles;
}

inline std::vector<StemProfile> parse_stem_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw invalid_input("cannot open stem file '" + path + "'");
    return parse_stem_csv_stream(in, path);
}

inline void write_stem_csv(const std::string& path, const std::vector<StemProfile>& profiles) {
    std::ofstream out(path);
    if (!out) throw computation_error("cannot write stem file '" + path + "'");
    out << kStemCsvHeader << "\n";
    for (const auto& p : profiles) {
        for (const auto& m : p.measurements) {
            out << species_code(p.species) << ',' << p.id << ','
                << detail::strfmt("%.10g,%.10g", m.height_cm, m.diameter_cm) << "\n";
        }
    }
    if (!out) throw computation_error("error while writing '" + path + "'");
}

// ---------------------------------------------------------------------------

// Linear interpolation between the two bracketing measurements; exact at the
// measurement heights themselves.
inline double interpolate_diameter(const StemProfile& profile, double height_cm) {
    const auto& ms = profile.measurements;
    if (height_cm < ms.front().height_cm || height_cm > ms.back().height_cm) {
        throw invalid_input(detail::strfmt(
            "height %.6g outside measured range [%.6g, %.6g] of stem '%s'", height_cm,
            ms.front().height_cm, ms.back().height_cm, profile.id.c_str()));
    }
    const auto it = std::lower_bound(
        ms.begin(), ms.end(), height_cm,
        [](const StemMeasurement& m, double h) { return m.height_cm < h; });
    if (it->height_cm == height_cm) return it->diameter_cm;
    const auto hi = it;
    const auto lo = it - 1;
    const double t = (height_cm - lo->height_cm) / (hi->height_cm - lo->height_cm);
    return lo->diameter_cm + t * (hi->diameter_cm - lo->diameter_cm);
}

// Resample a profile onto the uniform grid {0, 200, 400, ...} by linear
// interpolation. Profiles that do not start at the stump keep their first
// grid point at the first multiple of the grid step inside the range.
inline StemProfile resample_to_grid(const StemProfile& profile) {
    StemProfile out;
    out.species = profile.species;
    out.id = profile.id;
    out.known_prefix_end_cm = profile.known_prefix_end_cm;
    const double first = profile.first_height_cm();
    const double last = profile.top_height_cm();
    long h = static_cast<long>(std::ceil(first / kGridStepCm)) * kGridStepCm;
    for (; static_cast<double>(h) <= last; h += kGridStepCm) {
        out.measurements.push_back(
            {static_cast<double>(h), interpolate_diameter(profile, static_cast<double>(h))});
    }
    if (out.measurements.size() < 2) {
        throw invalid_input("stem '" + profile.id + "': too short for the 2-m grid");
    }
    out.known_prefix_end_cm =
        std::clamp(out.known_prefix_end_cm, out.first_height_cm(), out.top_height_cm());
    return out;
}

// ---------------------------------------------------------------------------

// 60/20/20 split, performed independently per species, deterministic in seed.
inline DataSplit split_dataset(const std::vector<StemProfile>& profiles, uint64_t seed) {
    std::map<int, std::vector<std::string>> by_species;
    for (const auto& p : profiles) by_species[static_cast<int>(p.species)].push_back(p.id);

    DataSplit split;
    for (auto& [sp, ids] : by_species) {
        if (ids.size() < 5) {
            throw invalid_input(detail::strfmt("species %s: need at least 5 stems, got %zu",
                                               species_code(static_cast<Species>(sp)), ids.size()));
        }
        Rng rng(substream_seed(seed, "split", static_cast<uint64_t>(sp)));
        rng.shuffle(ids);
        const size_t n = ids.size();
        const size_t n_train = static_cast<size_t>(std::llround(0.6 * static_cast<double>(n)));
        const size_t n_val = static_cast<size_t>(std::llround(0.2 * static_cast<double>(n)));
        for (size_t i = 0; i < n; ++i) {
            if (i < n_train) split.train.push_back(ids[i]);
            else if (i < n_train + n_val) split.validation.push_back(ids[i]);
            else split.test.push_back(ids[i]);
        }
    }
    return split;
}

// One copy per feasible prefix height. A height is feasible when it leaves at
// least one measurement on each side. Measurement values are never touched.
inline std::vector<StemProfile> augment_prefixes(const StemProfile& profile,
                                                 const std::vector<double>& prefix_heights_cm) {
    if (prefix_heights_cm.empty()) throw invalid_input("augment_prefixes: empty prefix height list");
    std::vector<StemProfile> out;
    for (const double h : prefix_heights_cm) {
        const bool has_known = profile.measurements.front().height_cm <= h;
        const bool has_unknown = profile.measurements.back().height_cm > h;
        if (!has_known || !has_unknown) continue;  // infeasible heights silently dropped
        StemProfile copy = profile;
        copy.known_prefix_end_cm = h;
        out.push_back(std::move(copy));
    }
    return out;
}

// The default prefix ladder: {300, 500, 700, ...} cm, stopping 200 cm below
// the tree top.
inline std::vector<double> default_prefix_heights(const StemProfile& profile) {
    std::vector<double> heights;
    for (double h = 300.0; h <= profile.top_height_cm() - 200.0; h += 200.0) heights.push_back(h);
    return heights;
}

// ---------------------------------------------------------------------------
// Synthetic stem generator.

namespace detail {

// Noiseless taper: quadratic-in-relative-height cone, normalized so the curve
// passes through the DBH at breast height, times a butt-swell factor that
// decays within the first meter or two.
inline double synthetic_base_diameter(const SyntheticSpeciesParams& p, double dbh_cm,
                                      double quadratic, double total_height_cm, double h_cm) {
    const auto cone = [&](double z) {
        const double u = 1.0 - z;
        return u * (1.0 + quadratic * u);
    };
    const double z = h_cm / total_height_cm;
    const double z_bh = kBreastHeightCm / total_height_cm;
    const double main = dbh_cm * cone(z) / cone(z_bh);
    const double swell = 1.0 + p.butt_swell * std::exp(-h_cm / p.butt_swell_decay_cm);
    return main * swell;
}

inline double synthetic_total_height(const SyntheticSpeciesParams& p, double dbh_cm) {
    const auto& c = p.height_coefficients;
    return c[0] + c[1] * std::pow(dbh_cm, c[2]);
}

}  // namespace detail

// Draws DBH uniformly in [dbh_min, dbh_max], derives the total height from
// the deterministic height rule, evaluates the taper curve on the 2-m grid
// and adds zero-mean Gaussian noise of marginal sd `taper_noise_sd_cm` with
// lag-1 correlation `noise_correlation` along the stem. Noise is truncated so
// diameters stay positive and non-increasing above breast height.
inline std::vector<StemProfile> generate_synthetic_stems(Species species,
                                                         const SyntheticSpeciesParams& params,
                                                         int n, uint64_t seed) {
    params.validate();
    if (n < 1) throw invalid_input("generate_synthetic_stems: n must be >= 1");

    std::vector<StemProfile> stems;
    stems.reserve(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k) {
        Rng rng(substream_seed(seed, "synth", static_cast<uint64_t>(species), static_cast<uint64_t>(k)));
        const double dbh = rng.uniform(params.dbh_min_cm, params.dbh_max_cm);
        const double height = detail::synthetic_total_height(params, dbh);
        const double quadratic =
            params.taper_quadratic * (1.0 + params.taper_shape_jitter * rng.uniform(-1.0, 1.0));

        StemProfile stem;
        stem.species = species;
        stem.id = detail::strfmt("%s-%05d", species_code(species), k);

        const double rho = params.noise_correlation;
        const double innovation_sd = params.taper_noise_sd_cm * std::sqrt(1.0 - rho * rho);
        double noise = rng.normal(0.0, params.taper_noise_sd_cm);
        double prev_d = 0.0;
        for (long h = 0; static_cast<double>(h) < height; h += kGridStepCm) {
            const double base = detail::synthetic_base_diameter(params, dbh, quadratic, height,
                                                                static_cast<double>(h));
            double d = base + noise;
            if (h == 0) {
                d = std::max(d, 0.05);
            } else {
                // grid points beyond the stump all sit above breast height
                d = std::clamp(d, 0.05, prev_d);
            }
            stem.measurements.push_back({static_cast<double>(h), d});
            prev_d = d;
            noise = rho * noise + rng.normal(0.0, innovation_sd);
        }
        stem.known_prefix_end_cm = stem.measurements.front().height_cm;
        stem.validate();
        stems.push_back(std::move(stem));
    }
    return stems;
}

}  // namespace stembuck
