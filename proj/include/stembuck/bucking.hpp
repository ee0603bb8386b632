#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "stembuck/common.hpp"
#include "stembuck/stem_data.hpp"

namespace stembuck {

// One log product. The minimum diameter applies to the small (top) end of a
// log, the maximum to the large (butt) end.
struct Product {
    int length_cm = 0;
    double min_diameter_cm = 0.0;
    double max_diameter_cm = 0.0;
    double price = 0.0;

    void validate() const {
        if (length_cm <= 0) throw invalid_input("product: length must be > 0");
        if (min_diameter_cm < 0.0 || min_diameter_cm > max_diameter_cm) {
            throw invalid_input("product: need 0 <= min_diameter <= max_diameter");
        }
        if (price < 0.0) throw invalid_input("product: negative price");
    }
};

struct PriceMatrix {
    std::vector<Product> products;

    void validate() const {
        if (products.empty()) throw invalid_input("price matrix: no products");
        for (const auto& p : products) p.validate();
        for (size_t i = 0; i < products.size(); ++i) {
            for (size_t j = i + 1; j < products.size(); ++j) {
                const auto& a = products[i];
                const auto& b = products[j];
                if (a.length_cm == b.length_cm && a.min_diameter_cm == b.min_diameter_cm &&
                    a.max_diameter_cm == b.max_diameter_cm) {
                    throw invalid_input(detail::strfmt("price matrix: duplicate product at %zu and %zu", i, j));
                }
            }
        }
    }
};

// Effectively unbounded large-end diameter (used by the discard product).
inline constexpr double kNoDiameterLimitCm = 10000.0;

// The tuning price matrix: five log lengths priced at their length, 9 cm
// minimum and 100 cm maximum diameter, plus a 30 cm zero-price discard piece
// with no diameter bounds so the optimizer can skip stem sections.
inline PriceMatrix standard_price_matrix() {
    PriceMatrix pm;
    for (const int len : {251, 312, 373, 434, 495}) {
        pm.products.push_back({len, 9.0, 100.0, static_cast<double>(len)});
    }
    pm.products.push_back({30, 0.0, kNoDiameterLimitCm, 0.0});
    return pm;
}

struct Cut {
    int start_cm = 0;
    int product_index = 0;
    double planned_value = 0.0;
};

// Contiguous sequence of cuts from the stump upward.
struct CutPlan {
    std::vector<Cut> cuts;
    double total_planned_value = 0.0;
};

namespace detail {

// Diameter at every whole centimeter of a profile; NaN outside the measured
// range. Lets the DP probe feasibility in O(1).
struct DenseProfile {
    int first_cm = 0;
    int top_cm = 0;           // floor of the last measured height
    std::vector<double> diameter;  // index = height in cm, size top_cm + 1

    static DenseProfile build(const StemProfile& profile, int max_height_cm) {
        DenseProfile d;
        const auto& ms = profile.measurements;
        d.first_cm = static_cast<int>(std::ceil(ms.front().height_cm));
        d.top_cm = std::min(static_cast<int>(std::floor(ms.back().height_cm)), max_height_cm);
        d.diameter.assign(static_cast<size_t>(std::max(d.top_cm, 0)) + 1,
                          std::numeric_limits<double>::quiet_NaN());
        size_t seg = 0;
        for (int h = d.first_cm; h <= d.top_cm; ++h) {
            while (seg + 2 < ms.size() && ms[seg + 1].height_cm < static_cast<double>(h)) ++seg;
            const auto& lo = ms[seg];
            const auto& hi = ms[seg + 1];
            const double t = (static_cast<double>(h) - lo.height_cm) / (hi.height_cm - lo.height_cm);
            d.diameter[static_cast<size_t>(h)] = lo.diameter_cm + t * (hi.diameter_cm - lo.diameter_cm);
        }
        return d;
    }

    // Product p cut at h fits this stem: the small end at h+len must make the
    // minimum diameter and the large end at h must not exceed the maximum.
    bool feasible(const Product& p, int h) const {
        const int end = h + p.length_cm;
        if (h < first_cm || end > top_cm) return false;
        return diameter[static_cast<size_t>(end)] >= p.min_diameter_cm &&
               diameter[static_cast<size_t>(h)] <= p.max_diameter_cm;
    }
};

// Product indices ordered for tie-breaking: shorter length first, then lower
// original index.
inline std::vector<size_t> tie_break_order(const PriceMatrix& pm) {
    std::vector<size_t> order(pm.products.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return pm.products[a].length_cm < pm.products[b].length_cm;
    });
    return order;
}

// Longest-path dynamic program over cut positions on a 1-cm grid. The edge
// value of product p at position h comes from `edge_value`, which returns
// false when no edge exists there. Ties go to the candidate visited first.
template <typename EdgeValueFn>
inline CutPlan run_bucking_dp(int horizon_cm, const PriceMatrix& pm, EdgeValueFn&& edge_value) {
    const auto order = tie_break_order(pm);
    const size_t n_pos = static_cast<size_t>(std::max(horizon_cm, 0)) + 1;
    std::vector<double> value(n_pos, 0.0);
    std::vector<int> choice(n_pos, -1);
    std::vector<double> chosen_edge(n_pos, 0.0);

    for (int h = horizon_cm; h >= 0; --h) {
        double best = 0.0;
        int best_product = -1;
        double best_edge = 0.0;
        for (const size_t pi : order) {
            const Product& p = pm.products[pi];
            double ev;
            if (!edge_value(p, h, ev)) continue;
            const int end = h + p.length_cm;
            const double total = ev + (end <= horizon_cm ? value[static_cast<size_t>(end)] : 0.0);
            if (best_product < 0 || total > best) {
                best = total;
                best_product = static_cast<int>(pi);
                best_edge = ev;
            }
        }
        if (best_product >= 0) {
            value[static_cast<size_t>(h)] = best;
            choice[static_cast<size_t>(h)] = best_product;
            chosen_edge[static_cast<size_t>(h)] = best_edge;
        }
    }

    CutPlan plan;
    int h = 0;
    while (h <= horizon_cm && choice[static_cast<size_t>(h)] >= 0) {
        const int pi = choice[static_cast<size_t>(h)];
        plan.cuts.push_back({h, pi, chosen_edge[static_cast<size_t>(h)]});
        plan.total_planned_value += chosen_edge[static_cast<size_t>(h)];
        h += pm.products[static_cast<size_t>(pi)].length_cm;
    }
    return plan;
}

}  // namespace detail

// Value-maximizing bucking of a single known profile.
inline CutPlan buck_deterministic(const StemProfile& profile, const PriceMatrix& pm) {
    pm.validate();
    const auto dense = detail::DenseProfile::build(profile, static_cast<int>(kMaxHeightCm));
    return detail::run_bucking_dp(dense.top_cm, pm, [&](const Product& p, int h, double& ev) {
        if (!dense.feasible(p, h)) return false;
        ev = p.price;
        return true;
    });
}

// Stochastic bucking over a sample of predicted profiles sharing one known
// prefix. A cut is a DP edge while it fits at least one sample; its value is
// the mean over the whole sample, infeasible members counting zero.
inline CutPlan buck_stochastic(const std::vector<StemProfile>& samples, const PriceMatrix& pm) {
    if (samples.empty()) throw invalid_input("buck_stochastic: empty sample list");
    pm.validate();
    for (size_t i = 1; i < samples.size(); ++i) {
        if (samples[i].known_prefix_end_cm != samples[0].known_prefix_end_cm) {
            throw invalid_input("buck_stochastic: samples disagree on the known prefix end");
        }
    }
    const double prefix_end = samples[0].known_prefix_end_cm;
    for (size_t i = 1; i < samples.size(); ++i) {
        for (size_t k = 0; k < samples[0].measurements.size(); ++k) {
            const auto& m0 = samples[0].measurements[k];
            if (m0.height_cm > prefix_end) break;
            if (k >= samples[i].measurements.size() ||
                samples[i].measurements[k].height_cm != m0.height_cm ||
                samples[i].measurements[k].diameter_cm != m0.diameter_cm) {
                throw invalid_input("buck_stochastic: samples do not share the known prefix");
            }
        }
    }

    std::vector<detail::DenseProfile> dense;
    dense.reserve(samples.size());
    int horizon = 0;
    for (const auto& s : samples) {
        dense.push_back(detail::DenseProfile::build(s, static_cast<int>(kMaxHeightCm)));
        horizon = std::max(horizon, dense.back().top_cm);
    }

    const double n = static_cast<double>(samples.size());
    return detail::run_bucking_dp(horizon, pm, [&](const Product& p, int h, double& ev) {
        int feasible_count = 0;
        for (const auto& d : dense) {
            if (d.feasible(p, h)) ++feasible_count;
        }
        if (feasible_count == 0) return false;
        // price * (count/n) rather than a summed mean: keeps the all-feasible
        // case bit-identical to the deterministic DP
        ev = p.price * (static_cast<double>(feasible_count) / n);
        return true;
    });
}

namespace detail {

// Totals are summed per product (price times count) so that two plans
// yielding the same multiset of logs produce bit-identical values no matter
// the cut order.
inline double grouped_value(const std::vector<size_t>& counts, const PriceMatrix& pm) {
    double total = 0.0;
    for (size_t i = 0; i < pm.products.size(); ++i) {
        total += pm.products[i].price * static_cast<double>(counts[i]);
    }
    return total;
}

}  // namespace detail

// Re-checks every planned log against the true profile: feasible logs earn
// their price, infeasible logs and logs past the true top earn zero.
inline std::vector<double> realized_cut_values(const StemProfile& true_profile, const CutPlan& plan,
                                               const PriceMatrix& pm) {
    const auto dense = detail::DenseProfile::build(true_profile, static_cast<int>(kMaxHeightCm));
    std::vector<double> values;
    values.reserve(plan.cuts.size());
    for (const auto& cut : plan.cuts) {
        const Product& p = pm.products[static_cast<size_t>(cut.product_index)];
        values.push_back(dense.feasible(p, cut.start_cm) ? p.price : 0.0);
    }
    return values;
}

inline double evaluate_plan_on_true(const StemProfile& true_profile, const CutPlan& plan,
                                    const PriceMatrix& pm) {
    const auto dense = detail::DenseProfile::build(true_profile, static_cast<int>(kMaxHeightCm));
    std::vector<size_t> counts(pm.products.size(), 0);
    for (const auto& cut : plan.cuts) {
        const Product& p = pm.products[static_cast<size_t>(cut.product_index)];
        if (dense.feasible(p, cut.start_cm)) ++counts[static_cast<size_t>(cut.product_index)];
    }
    return detail::grouped_value(counts, pm);
}

// Optimal value of the true profile in the same grouped form, so that a plan
// realizing the optimal log multiset deviates by exactly zero.
inline double optimal_value_on_true(const StemProfile& true_profile, const PriceMatrix& pm) {
    const CutPlan plan = buck_deterministic(true_profile, pm);
    std::vector<size_t> counts(pm.products.size(), 0);
    for (const auto& cut : plan.cuts) ++counts[static_cast<size_t>(cut.product_index)];
    return detail::grouped_value(counts, pm);
}

// Exhaustive enumeration of product sequences; the independent test oracle
// for the DP. Throws when the search space exceeds `node_budget`.
inline double brute_force_buck(const StemProfile& profile, const PriceMatrix& pm, int max_cuts,
                               uint64_t node_budget = 200'000'000) {
    pm.validate();
    const auto dense = detail::DenseProfile::build(profile, static_cast<int>(kMaxHeightCm));
    double best = 0.0;
    uint64_t nodes = 0;
    // plain recursive enumeration, deliberately memo-free
    const auto dfs = [&](auto&& self, int h, int cuts_used, double acc) -> void {
        best = std::max(best, acc);
        if (cuts_used >= max_cuts) return;
        if (++nodes > node_budget) {
            throw computation_error("brute_force_buck: search space above the configured bound");
        }
        for (const auto& p : pm.products) {
            if (dense.feasible(p, h)) {
                self(self, h + p.length_cm, cuts_used + 1, acc + p.price);
            }
        }
    };
    dfs(dfs, 0, 0, 0.0);
    return best;
}

// ---------------------------------------------------------------------------
// CSV surfaces.

inline const char* kPriceMatrixCsvHeader = "length_cm,min_diam_cm,max_diam_cm,price";
inline const char* kPlanCsvHeader = "stem_id,cut_start_cm,product_length_cm,planned_value,realized_value";

inline PriceMatrix load_price_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw invalid_input("cannot open price matrix '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != kPriceMatrixCsvHeader) {
        throw invalid_input(path + ":1: expected header '" + std::string(kPriceMatrixCsvHeader) + "'");
    }
    PriceMatrix pm;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string trimmed = detail::trim(line);
        if (trimmed.empty()) continue;
        const auto fields = detail::split(trimmed, ',');
        if (fields.size() != 4) {
            throw invalid_input(detail::strfmt("%s:%ld: expected 4 fields", path.c_str(), line_no));
        }
        Product p;
        p.length_cm = static_cast<int>(detail::parse_long(detail::trim(fields[0]), "length_cm"));
        p.min_diameter_cm = detail::parse_double(detail::trim(fields[1]), "min_diam_cm");
        p.max_diameter_cm = detail::parse_double(detail::trim(fields[2]), "max_diam_cm");
        p.price = detail::parse_double(detail::trim(fields[3]), "price");
        pm.products.push_back(p);
    }
    pm.validate();
    return pm;
}

inline void save_price_matrix_csv(const std::string& path, const PriceMatrix& pm) {
    std::ofstream out(path);
    if (!out) throw computation_error("cannot write price matrix '" + path + "'");
    out << kPriceMatrixCsvHeader << "\n";
    for (const auto& p : pm.products) {
        out << detail::strfmt("%d,%.10g,%.10g,%.10g", p.length_cm, p.min_diameter_cm,
                              p.max_diameter_cm, p.price)
            << "\n";
    }
}

inline void append_plan_csv(std::ostream& out, const std::string& stem_id, const CutPlan& plan,
                            const PriceMatrix& pm, const std::vector<double>& realized) {
    for (size_t i = 0; i < plan.cuts.size(); ++i) {
        const auto& cut = plan.cuts[i];
        out << stem_id << ','
            << detail::strfmt("%d,%d,%.10g,%.10g", cut.start_cm,
                              pm.products[static_cast<size_t>(cut.product_index)].length_cm,
                              cut.planned_value, realized[i])
            << "\n";
    }
}

}  // namespace stembuck
