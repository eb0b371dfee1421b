#pragma once

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "mirror/errors.hpp"

namespace mirror::csv {

/// Shortest decimal representation that parses back to the same double.
inline std::string format_double(double v) {
    std::array<char, 32> buf{};
    const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc{}) throw InvalidArgument("format_double: conversion failed");
    return std::string(buf.data(), end);
}

inline double parse_double(std::string_view s, const std::string& field) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw SchemaViolation(field, "not a number: '" + std::string(s) + "'");
    return v;
}

inline std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline std::string trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\xEF' || s.front() == '\xBB' ||
                          s.front() == '\xBF'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return std::string(s);
}

/// Numeric table with a fixed header. Columns are returned in header order.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> columns;
};

/// Parses CSV text whose header must be exactly `expected` (a UTF-8 BOM is
/// tolerated). Blank lines are skipped. An empty input yields empty columns.
inline Table parse(std::istream& in, const std::vector<std::string>& expected, const std::string& source) {
    Table t;
    t.header = expected;
    t.columns.assign(expected.size(), {});
    std::string line;
    bool have_header = false;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto cells = split(line);
        if (!have_header) {
            if (cells.size() != expected.size()) throw SchemaViolation(source + ".header", "unexpected column count");
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (trim(cells[i]) != expected[i])
                    throw SchemaViolation(source + ".header", "expected column '" + expected[i] + "'");
            }
            have_header = true;
            continue;
        }
        ++row;
        if (cells.size() != expected.size())
            throw SchemaViolation(source + ".row[" + std::to_string(row) + "]", "unexpected column count");
        for (std::size_t i = 0; i < cells.size(); ++i)
            t.columns[i].push_back(parse_double(cells[i], source + ".row[" + std::to_string(row) + "]." + expected[i]));
    }
    return t;
}

inline Table read_file(const std::string& path, const std::vector<std::string>& expected) {
    std::ifstream in(path);
    if (!in) throw SchemaViolation(path, "cannot open file");
    return parse(in, expected, path);
}

inline void write(std::ostream& out, const std::vector<std::string>& header,
                  const std::vector<const std::vector<double>*>& columns) {
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    const std::size_t n = columns.empty() ? 0 : columns.front()->size();
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << format_double((*columns[c])[r]);
        out << '\n';
    }
}

inline void write_file(const std::string& path, const std::vector<std::string>& header,
                       const std::vector<const std::vector<double>*>& columns) {
    std::ofstream out(path);
    if (!out) throw InvalidArgument("cannot write " + path);
    write(out, header, columns);
}

}  // namespace mirror::csv
