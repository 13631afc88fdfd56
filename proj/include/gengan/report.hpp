#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "gengan/frontend.hpp"
#include "gengan/metrics.hpp"

namespace gengan {

/// Aligned text table with columns: system, A_w, EER, eer, GR, gr.
std::string format_table(const std::vector<MetricsReport>& reports);
/// Same columns as CSV with a header row.
std::string format_csv(const std::vector<MetricsReport>& reports);

/// Two panels: A_w against gr and A_w against eer, one labelled point per
/// report. Higher is better on every axis.
void render_scatter(const std::vector<MetricsReport>& reports, const std::filesystem::path& png);

/// One row per (original, transformed) pair, low frequencies at the bottom.
void render_spectrogram_grid(const std::vector<std::pair<MelSpectrogram, MelSpectrogram>>& pairs,
                             const std::vector<std::string>& row_labels, const std::filesystem::path& png);

struct RenderedReport {
  std::string table;
  std::string csv;
  std::vector<std::filesystem::path> files;
};

/// Table and CSV for `reports`; with a non-empty `out_dir` also writes
/// metrics.csv and tradeoff.png there. InvalidInput for an empty list.
RenderedReport render_report(const std::vector<MetricsReport>& reports, const std::filesystem::path& out_dir = {});

}  // namespace gengan
