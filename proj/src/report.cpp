#include "gengan/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "gengan/error.hpp"
#include "gengan/png.hpp"

namespace gengan {

namespace {

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::vector<std::string> row_of(const MetricsReport& r) {
  return {r.label.empty() ? r.mode : r.label, fixed2(r.word_accuracy), fixed2(r.eer), fixed2(r.eer_norm),
          fixed2(r.gr), fixed2(r.gr_norm)};
}

const std::vector<std::string> kHeader = {"system", "A_w", "EER", "eer", "GR", "gr"};

}  // namespace

std::string format_table(const std::vector<MetricsReport>& reports) {
  std::vector<std::vector<std::string>> rows = {kHeader};
  for (const auto& r : reports) rows.push_back(row_of(r));
  std::vector<std::size_t> width(kHeader.size(), 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::string out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      const std::string& cell = rows[i][c];
      const std::string pad(width[c] - cell.size(), ' ');
      out += c == 0 ? cell + pad : "  " + pad + cell;
    }
    out += '\n';
    if (i == 0) {
      std::size_t total = 0;
      for (std::size_t c = 0; c < width.size(); ++c) total += width[c] + (c ? 2 : 0);
      out += std::string(total, '-') + '\n';
    }
  }
  return out;
}

std::string format_csv(const std::vector<MetricsReport>& reports) {
  std::string out = "system,A_w,EER,eer,GR,gr\n";
  for (const auto& r : reports) {
    const auto row = row_of(r);
    for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + row[c];
    out += '\n';
  }
  return out;
}

void render_scatter(const std::vector<MetricsReport>& reports, const std::filesystem::path& png) {
  constexpr int kPanel = 480, kMargin = 60, kPlot = kPanel - 2 * kMargin;
  static const Rgb palette[] = {{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {148, 103, 189}, {255, 127, 14},
                                {140, 86, 75}};
  Image img(2 * kPanel, kPanel + 20);
  const Rgb black{0, 0, 0}, grid{220, 220, 220};
  for (int panel = 0; panel < 2; ++panel) {
    const int ox = panel * kPanel + kMargin, oy = kMargin + kPlot;  // plot origin (bottom-left)
    for (int t = 0; t <= 100; t += 25) {
      const int px = ox + t * kPlot / 100, py = oy - t * kPlot / 100;
      img.line(px, oy, px, oy - kPlot, grid);
      img.line(ox, py, ox + kPlot, py, grid);
      const std::string lab = std::to_string(t);
      img.text(px - Image::text_width(lab) / 2, oy + 6, lab, black);
      img.text(ox - Image::text_width(lab) - 6, py - 3, lab, black);
    }
    img.line(ox, oy, ox + kPlot, oy, black);
    img.line(ox, oy, ox, oy - kPlot, black);
    const std::string xl = panel == 0 ? "gr (%)" : "eer (%)";
    img.text(ox + kPlot / 2 - Image::text_width(xl, 2) / 2, oy + 22, xl, black, 2);
    img.text(ox - 50, kMargin - 30, "A_w (%)", black, 2);
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const auto& r = reports[i];
      const double x = std::clamp(panel == 0 ? r.gr_norm : r.eer_norm, 0.0, 100.0);
      const double y = std::clamp(r.word_accuracy, 0.0, 100.0);
      const int px = ox + static_cast<int>(x * kPlot / 100.0), py = oy - static_cast<int>(y * kPlot / 100.0);
      const Rgb c = palette[i % std::size(palette)];
      img.disc(px, py, 5, c);
      img.text(px + 8, py - 10, r.label.empty() ? r.mode : r.label, c);
    }
  }
  write_png(png, img);
}

void render_spectrogram_grid(const std::vector<std::pair<MelSpectrogram, MelSpectrogram>>& pairs,
                             const std::vector<std::string>& row_labels, const std::filesystem::path& png) {
  if (pairs.empty()) throw InvalidInput("spectrogram grid needs at least one pair");
  constexpr int kScale = 2, kGap = 12, kTitle = 24, kLabel = 14;
  int max_frames = 1, bands = pairs.front().first.n_bands;
  for (const auto& [a, b] : pairs) max_frames = std::max({max_frames, a.n_frames, b.n_frames});
  const int cell_w = max_frames * kScale, cell_h = bands * kScale;
  const int row_h = cell_h + kLabel + kGap;
  Image img(2 * cell_w + 3 * kGap, kTitle + static_cast<int>(pairs.size()) * row_h + kGap);
  const Rgb black{0, 0, 0};
  img.text(kGap, 8, "original", black, 2);
  img.text(2 * kGap + cell_w, 8, "transformed", black, 2);
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    const int top = kTitle + static_cast<int>(r) * row_h;
    if (r < row_labels.size()) img.text(kGap, top + 2, row_labels[r], black);
    for (int col = 0; col < 2; ++col) {
      const MelSpectrogram& m = col == 0 ? pairs[r].first : pairs[r].second;
      const int left = kGap + col * (cell_w + kGap), y0 = top + kLabel;
      for (int b = 0; b < m.n_bands; ++b)
        for (int f = 0; f < m.n_frames; ++f) {
          const Rgb c = heat_color(m.at(b, f));
          const int y = y0 + (m.n_bands - 1 - b) * kScale;
          img.fill_rect(left + f * kScale, y, left + (f + 1) * kScale - 1, y + kScale - 1, c);
        }
    }
  }
  write_png(png, img);
}

RenderedReport render_report(const std::vector<MetricsReport>& reports, const std::filesystem::path& out_dir) {
  if (reports.empty()) throw InvalidInput("render_report needs at least one report");
  RenderedReport out{format_table(reports), format_csv(reports), {}};
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const auto csv = out_dir / "metrics.csv";
    std::ofstream(csv) << out.csv;
    const auto scatter = out_dir / "tradeoff.png";
    render_scatter(reports, scatter);
    out.files = {csv, scatter};
  }
  return out;
}

}  // namespace gengan
