#pragma once

// Image grids as binary PGM (P5, maxval 255) and metrics charts as SVG.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cgan/errors.hpp"
#include "cgan/tensor.hpp"

namespace cgan {

struct GridLayout {
  std::size_t rows = 10;
  std::size_t cols = 10;
  std::size_t cell_height = 28;
  std::size_t cell_width = 28;
  std::size_t gutter = 2;

  std::size_t width() const { return cols * cell_width + (cols + 1) * gutter; }
  std::size_t height() const { return rows * cell_height + (rows + 1) * gutter; }
};

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// images: [rows*cols, cell_height*cell_width], row-major cells, values in [0,1].
// Cell (r, c) holds image r*cols + c; gutters are black.
inline std::string encode_pgm_grid(const Tensor<double>& images, const GridLayout& g) {
  if (images.rank() != 2 || images.rows() != g.rows * g.cols || images.cols() != g.cell_height * g.cell_width) {
    throw DimensionError("pgm grid: expected [" + std::to_string(g.rows * g.cols) + ", " +
                         std::to_string(g.cell_height * g.cell_width) + "], got " + shape_string(images.shape()));
  }
  const std::size_t w = g.width(), h = g.height();
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + w * h, '\0');
  for (std::size_t r = 0; r < g.rows; ++r) {
    for (std::size_t c = 0; c < g.cols; ++c) {
      const auto img = images.row(r * g.cols + c);
      const std::size_t top = g.gutter + r * (g.cell_height + g.gutter);
      const std::size_t left = g.gutter + c * (g.cell_width + g.gutter);
      for (std::size_t y = 0; y < g.cell_height; ++y) {
        for (std::size_t x = 0; x < g.cell_width; ++x) {
          out[header + (top + y) * w + left + x] = static_cast<char>(to_byte(img[y * g.cell_width + x]));
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics chart: losses on top, mean discriminator outputs below.

struct MetricSeries {
  std::string name;
  std::string color;
  std::vector<std::pair<double, double>> points;  // (step, value)
};

inline std::string svg_panel(const std::vector<MetricSeries>& series, double x0, double y0, double w, double h,
                             const std::string& title) {
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(y)) continue;
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  std::ostringstream os;
  os.precision(6);
  os << "<g>\n<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << w << "\" height=\"" << h
     << "\" fill=\"none\" stroke=\"#888\"/>\n";
  os << "<text x=\"" << x0 << "\" y=\"" << y0 - 6 << "\" font-size=\"12\">" << title << "</text>\n";
  if (xmin > xmax) return os.str() + "</g>\n";
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  os << "<text x=\"" << x0 + w + 4 << "\" y=\"" << y0 + 10 << "\" font-size=\"10\">" << ymax << "</text>\n";
  os << "<text x=\"" << x0 + w + 4 << "\" y=\"" << y0 + h << "\" font-size=\"10\">" << ymin << "</text>\n";
  os << "<text x=\"" << x0 << "\" y=\"" << y0 + h + 12 << "\" font-size=\"10\">step " << xmin << "</text>\n";
  os << "<text x=\"" << x0 + w - 60 << "\" y=\"" << y0 + h + 12 << "\" font-size=\"10\">step " << xmax << "</text>\n";
  double legend_y = y0 + 14;
  for (const auto& s : series) {
    os << "<polyline fill=\"none\" stroke-width=\"1\" stroke=\"" << s.color << "\" points=\"";
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(y)) continue;
      os << x0 + (x - xmin) / (xmax - xmin) * w << ',' << y0 + h - (y - ymin) / (ymax - ymin) * h << ' ';
    }
    os << "\"/>\n<text x=\"" << x0 + 6 << "\" y=\"" << legend_y << "\" font-size=\"11\" fill=\"" << s.color << "\">"
       << s.name << "</text>\n";
    legend_y += 14;
  }
  return os.str() + "</g>\n";
}

// Renders metrics lines (key=value records) into a standalone SVG document.
inline std::string metrics_svg(const std::vector<std::map<std::string, double>>& records) {
  auto series = [&](const std::string& key, const std::string& color) {
    MetricSeries s{key, color, {}};
    for (const auto& r : records) {
      const auto step = r.find("step");
      const auto v = r.find(key);
      if (step != r.end() && v != r.end()) s.points.emplace_back(step->second, v->second);
    }
    return s;
  };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"640\" font-family=\"sans-serif\">\n";
  os << svg_panel({series("d_loss", "#c0392b"), series("g_loss", "#2471a3")}, 40, 30, 600, 160, "losses");
  os << svg_panel({series("d_real", "#c0392b"), series("d_fake", "#2471a3")}, 40, 240, 600, 160,
                  "mean discriminator output");
  os << svg_panel({series("val_ll", "#7d3c98"), series("best_ll", "#1e8449")}, 40, 450, 600, 160,
                  "validation log-likelihood");
  os << "</svg>\n";
  return os.str();
}

}  // namespace cgan
