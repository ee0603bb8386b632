#pragma once

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stembuck/common.hpp"
#include "stembuck/taper_models.hpp"

namespace stembuck {

// Flat, versioned, textual checkpoint: named parameter blocks with shapes and
// row-major hexfloat values. Hexfloat makes the round trip bitwise exact.
inline constexpr const char* kCheckpointMagic = "stembuck-checkpoint v1";

inline void save_checkpoint(const std::string& path, const TaperModel& model) {
    std::ofstream out(path);
    if (!out) throw computation_error("cannot write checkpoint '" + path + "'");
    out << kCheckpointMagic << "\n";
    out << "kind " << model_kind_name(model.kind) << "\n";
    out << "species " << species_code(model.species) << "\n";

    const auto write_block = [&out](const std::string& name, int rows, int cols,
                                    const double* values) {
        out << name << ' ' << rows << ' ' << cols << "\n";
        const size_t n = static_cast<size_t>(rows) * static_cast<size_t>(cols);
        for (size_t i = 0; i < n; ++i) out << detail::hex_double(values[i]) << (i + 1 < n ? " " : "\n");
        if (n == 0) out << "\n";
    };

    if (model.kind == ModelKind::Polynomial) {
        out << "max_order " << model.poly.max_order << "\n";
        out << "params 1\n";
        write_block("coefficients", static_cast<int>(model.poly.coefficients.size()), 1,
                    model.poly.coefficients.data());
    } else {
        if (model.kind == ModelKind::Stochastic) {
            out << "lambda " << detail::hex_double(model.loss.lambda) << "\n";
        }
        out << "input_size " << model.lstm.input_size << "\n";
        out << "hidden_size " << model.lstm.hidden_size << "\n";
        out << "output_size " << model.lstm.output_size << "\n";
        const auto layout = model.lstm.layout();
        out << "params " << layout.size() << "\n";
        for (const auto& e : layout) {
            write_block(e.name, e.rows, e.cols, model.lstm.flat.data() + e.offset);
        }
    }
    if (!out) throw computation_error("error while writing checkpoint '" + path + "'");
}

namespace detail {

inline std::string next_line(std::istream& in, const std::string& path) {
    std::string line;
    if (!std::getline(in, line)) throw invalid_input("checkpoint '" + path + "': truncated");
    return trim(line);
}

inline std::string expect_key(const std::string& line, const std::string& key,
                              const std::string& path) {
    if (line.rfind(key + " ", 0) != 0) {
        throw invalid_input("checkpoint '" + path + "': expected '" + key + " ...', got '" + line + "'");
    }
    return trim(line.substr(key.size() + 1));
}

inline std::vector<double> parse_values(const std::string& line, size_t expected,
                                        const std::string& path) {
    std::istringstream iss(line);
    std::vector<double> values;
    std::string tok;
    while (iss >> tok) values.push_back(parse_double(tok, "parameter value"));
    if (values.size() != expected) {
        throw invalid_input(strfmt("checkpoint '%s': expected %zu values, got %zu", path.c_str(),
                                   expected, values.size()));
    }
    return values;
}

}  // namespace detail

inline TaperModel load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw invalid_input("cannot open checkpoint '" + path + "'");
    if (detail::next_line(in, path) != kCheckpointMagic) {
        throw invalid_input("checkpoint '" + path + "': bad magic line");
    }
    const ModelKind kind = model_kind_from_name(detail::expect_key(detail::next_line(in, path), "kind", path));
    const Species species = species_from_code(detail::expect_key(detail::next_line(in, path), "species", path));

    TaperModel model;
    model.kind = kind;
    model.species = species;

    if (kind == ModelKind::Polynomial) {
        model.poly.max_order = static_cast<int>(detail::parse_long(
            detail::expect_key(detail::next_line(in, path), "max_order", path), "max_order"));
        detail::expect_key(detail::next_line(in, path), "params", path);
        const auto header = detail::split(detail::next_line(in, path), ' ');
        if (header.size() != 3 || header[0] != "coefficients") {
            throw invalid_input("checkpoint '" + path + "': expected coefficients block");
        }
        const size_t n = static_cast<size_t>(detail::parse_long(header[1], "rows"));
        model.poly.coefficients = detail::parse_values(detail::next_line(in, path), n, path);
        if (model.poly.coefficients.size() != PolynomialCoeffs::coefficient_count(model.poly.max_order)) {
            throw invalid_input("checkpoint '" + path + "': coefficient count does not match max_order");
        }
        return model;
    }

    if (kind == ModelKind::Stochastic) {
        model.loss.lambda = detail::parse_double(
            detail::expect_key(detail::next_line(in, path), "lambda", path), "lambda");
    }
    const int input_size = static_cast<int>(detail::parse_long(
        detail::expect_key(detail::next_line(in, path), "input_size", path), "input_size"));
    const int hidden_size = static_cast<int>(detail::parse_long(
        detail::expect_key(detail::next_line(in, path), "hidden_size", path), "hidden_size"));
    const int output_size = static_cast<int>(detail::parse_long(
        detail::expect_key(detail::next_line(in, path), "output_size", path), "output_size"));
    model.lstm = LstmParams::create(input_size, hidden_size, output_size);

    const size_t n_blocks = static_cast<size_t>(detail::parse_long(
        detail::expect_key(detail::next_line(in, path), "params", path), "params"));
    const auto layout = model.lstm.layout();
    if (n_blocks != layout.size()) {
        throw invalid_input("checkpoint '" + path + "': unexpected parameter block count");
    }
    for (const auto& e : layout) {
        const auto header = detail::split(detail::next_line(in, path), ' ');
        if (header.size() != 3 || header[0] != e.name ||
            detail::parse_long(header[1], "rows") != e.rows ||
            detail::parse_long(header[2], "cols") != e.cols) {
            throw invalid_input("checkpoint '" + path + "': bad block header for '" + e.name + "'");
        }
        const auto values = detail::parse_values(detail::next_line(in, path), e.count(), path);
        std::copy(values.begin(), values.end(), model.lstm.flat.begin() + static_cast<long>(e.offset));
    }
    return model;
}

}  // namespace stembuck
