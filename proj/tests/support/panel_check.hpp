// SPDX-License-Identifier: Apache-2.0
//
// Checks the files written by `wsed visualize` against the panel contract:
// eight panels, frequency attention columns summing to one, clip
// probabilities in [0, 1], reconstruction shaped like the input.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace wsed::test {

struct PanelCsv {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;
};

inline PanelCsv read_panel(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);  // header: axes cell, then column indices
  PanelCsv p;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');  // row label
    std::size_t n = 0;
    while (std::getline(ss, cell, ',')) {
      p.values.push_back(std::stod(cell));
      ++n;
    }
    p.cols = n;
    ++p.rows;
  }
  return p;
}

inline bool pgm_matches(const std::filesystem::path& path, const PanelCsv& csv) {
  std::ifstream in(path);
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  return magic == "P2" && w == csv.cols && h == csv.rows && maxval == 255;
}

/// Empty when the directory satisfies the contract for `categories` classes.
inline std::vector<std::string> check_panels(const std::filesystem::path& dir, std::size_t categories) {
  std::vector<std::string> problems;
  std::vector<std::filesystem::path> csvs;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("panel", 0) == 0 && name != "panels.csv" && e.path().extension() == ".csv") csvs.push_back(e.path());
  }
  std::sort(csvs.begin(), csvs.end());
  if (csvs.size() != 8) {
    problems.push_back("expected 8 panels, found " + std::to_string(csvs.size()));
    return problems;
  }
  std::vector<PanelCsv> panels;
  for (const auto& p : csvs) {
    panels.push_back(read_panel(p));
    auto pgm = p;
    pgm.replace_extension(".pgm");
    if (!pgm_matches(pgm, panels.back())) problems.push_back(pgm.filename().string() + " does not match its CSV");
  }
  if (panels[0].rows != panels[1].rows || panels[0].cols != panels[1].cols)
    problems.push_back("reconstruction shape differs from input shape");
  for (std::size_t k = 2; k < 5; ++k) {
    const auto& a = panels[k];
    for (std::size_t t = 0; t < a.cols; ++t) {
      double s = 0.0;
      for (std::size_t f = 0; f < a.rows; ++f) s += a.values[f * a.cols + t];
      if (std::abs(s - 1.0) > 1e-9) {
        problems.push_back(csvs[k].filename().string() + " column " + std::to_string(t) + " sums to " + std::to_string(s));
        break;
      }
    }
  }
  const auto& za2 = panels[6];
  for (std::size_t c = 0; c < za2.rows; ++c) {
    double s = 0.0;
    for (std::size_t t = 0; t < za2.cols; ++t) s += za2.values[c * za2.cols + t];
    if (std::abs(s - 1.0) > 1e-9) problems.push_back("time attention row " + std::to_string(c) + " does not sum to 1");
  }
  const auto& p8 = panels[7];
  if (p8.values.size() != categories) problems.push_back("clip probability panel has the wrong length");
  for (double v : p8.values)
    if (!(v >= 0.0 && v <= 1.0)) problems.push_back("clip probability outside [0, 1]");
  return problems;
}

}  // namespace wsed::test
