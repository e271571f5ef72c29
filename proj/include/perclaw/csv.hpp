#pragma once

// Comma-separated values: header row, '.' decimal point, LF line endings.
// Doubles are written in shortest round-trip form.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>
#include <vector>

#include "perclaw/errors.hpp"

namespace perclaw {

inline std::string format_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, end);
}

template <class T>
std::string csv_field(const T& v) {
  if constexpr (std::is_same_v<T, bool>) return v ? "1" : "0";
  else if constexpr (std::is_floating_point_v<T>) return format_double(static_cast<double>(v));
  else if constexpr (std::is_integral_v<T>) return std::to_string(v);
  else return std::string(v);
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::initializer_list<std::string_view> header)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc), columns_(header.size()) {
    if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
    bool first = true;
    for (auto h : header) {
      out_ << (first ? "" : ",") << h;
      first = false;
    }
    out_ << '\n';
  }

  template <class... Ts>
  void row(const Ts&... values) {
    if (sizeof...(Ts) != columns_) throw std::logic_error("csv: row width does not match header in " + path_.string());
    bool first = true;
    ((out_ << (first ? "" : ",") << csv_field(values), first = false), ...);
    out_ << '\n';
  }

  void close() {
    out_.flush();
    if (!out_) throw std::runtime_error("write failed: " + path_.string());
    out_.close();
  }

  ~CsvWriter() {
    if (out_.is_open()) out_.close();
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t columns_;
};

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size() || s.empty())
    throw FormatError("not a number: '" + std::string(s) + "'");
  return v;
}

/// Numeric columns of a CSV file. A first line that does not parse as
/// numbers is taken to be a header and skipped; blank lines and lines
/// starting with '#' are ignored.
inline std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path, std::size_t columns) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::vector<double>> cols(columns);
  std::string line;
  std::size_t lineno = 0;
  bool header_allowed = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    if (fields.size() < columns)
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(columns) + " columns");
    std::vector<double> row;
    try {
      for (std::size_t c = 0; c < columns; ++c) row.push_back(parse_double(fields[c]));
    } catch (const FormatError& e) {
      if (header_allowed) {
        header_allowed = false;
        continue;
      }
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    header_allowed = false;
    for (std::size_t c = 0; c < columns; ++c) cols[c].push_back(row[c]);
  }
  return cols;
}

}  // namespace perclaw
