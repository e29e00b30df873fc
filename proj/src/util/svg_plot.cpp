#include "attnthermo/util/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace thermo::util {

namespace {

struct Range {
  double lo = 0.0, hi = 1.0;
  void expand(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (hi <= lo) {
      lo -= 0.5;
      hi += 0.5;
    } else {
      const double m = 0.05 * (hi - lo);
      lo -= m;
      hi += m;
    }
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

double tx(double v, bool logscale) {
  return logscale ? std::log10(std::max(v, 1e-300)) : v;
}

// Nice round tick values across [lo, hi].
std::vector<double> ticks(double lo, double hi, int target = 6) {
  std::vector<double> out;
  const double span = hi - lo;
  if (!(span > 0.0)) return {lo};
  double step = std::pow(10.0, std::floor(std::log10(span / target)));
  for (double mult : {1.0, 2.0, 5.0, 10.0}) {
    if (span / (step * mult) <= target) {
      step *= mult;
      break;
    }
  }
  const double first = std::ceil(lo / step) * step;
  for (double v = first; v <= hi + 1e-12 * span; v += step)
    out.push_back(std::abs(v) < 1e-12 * span ? 0.0 : v);
  return out;
}

}  // namespace

void write_line_plot(const std::filesystem::path& path,
                     const LinePlotSpec& spec) {
  if (spec.series.empty())
    throw std::invalid_argument("write_line_plot: no series");
  const double W = spec.width, H = spec.height;
  const double ml = 70, mr = spec.y2label.empty() ? 25 : 70, mt = 40, mb = 55;

  Range rx, ry, ry2;
  bool first_x = true, first_y = true, first_y2 = true;
  auto seed = [](Range& r, double v, bool& first) {
    if (first) {
      r.lo = r.hi = v;
      first = false;
    } else {
      r.expand(v);
    }
  };
  for (const auto& s : spec.series) {
    if (s.x.size() != s.y.size())
      throw std::invalid_argument("write_line_plot: x/y size mismatch");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      seed(rx, tx(s.x[i], spec.log_x), first_x);
      if (s.second_axis)
        seed(ry2, s.y[i], first_y2);
      else
        seed(ry, tx(s.y[i], spec.log_y), first_y);
    }
  }
  for (const auto& eb : spec.error_bars) {
    seed(rx, tx(eb.x, spec.log_x), first_x);
    seed(ry, tx(eb.y_low, spec.log_y), first_y);
    seed(ry, tx(eb.y_high, spec.log_y), first_y);
  }
  rx.pad();
  ry.pad();
  ry2.pad();

  auto X = [&](double v) {
    return ml + (tx(v, spec.log_x) - rx.lo) / (rx.hi - rx.lo) * (W - ml - mr);
  };
  auto Y = [&](double v) {
    return H - mb - (tx(v, spec.log_y) - ry.lo) / (ry.hi - ry.lo) * (H - mt - mb);
  };
  auto Y2 = [&](double v) {
    return H - mb - (v - ry2.lo) / (ry2.hi - ry2.lo) * (H - mt - mb);
  };

  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw std::runtime_error("write_line_plot: cannot open " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
      << "\" height=\"" << H << "\" font-family=\"sans-serif\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" "
      << "font-size=\"15\">" << spec.title << "</text>\n";

  // Axes + ticks.
  out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << W - ml - mr
      << "\" height=\"" << H - mt - mb
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (double t : ticks(rx.lo, rx.hi)) {
    const double px = ml + (t - rx.lo) / (rx.hi - rx.lo) * (W - ml - mr);
    out << "<line x1=\"" << px << "\" y1=\"" << H - mb << "\" x2=\"" << px
        << "\" y2=\"" << H - mb + 5 << "\" stroke=\"#444\"/>\n";
    out << "<text x=\"" << px << "\" y=\"" << H - mb + 18
        << "\" text-anchor=\"middle\" font-size=\"11\">"
        << (spec.log_x ? "1e" + fmt(t) : fmt(t)) << "</text>\n";
  }
  for (double t : ticks(ry.lo, ry.hi)) {
    const double py = H - mb - (t - ry.lo) / (ry.hi - ry.lo) * (H - mt - mb);
    out << "<line x1=\"" << ml - 5 << "\" y1=\"" << py << "\" x2=\"" << ml
        << "\" y2=\"" << py << "\" stroke=\"#444\"/>\n";
    out << "<text x=\"" << ml - 8 << "\" y=\"" << py + 4
        << "\" text-anchor=\"end\" font-size=\"11\">"
        << (spec.log_y ? "1e" + fmt(t) : fmt(t)) << "</text>\n";
  }
  if (!spec.y2label.empty()) {
    for (double t : ticks(ry2.lo, ry2.hi)) {
      const double py = Y2(t);
      out << "<line x1=\"" << W - mr << "\" y1=\"" << py << "\" x2=\""
          << W - mr + 5 << "\" y2=\"" << py << "\" stroke=\"#444\"/>\n";
      out << "<text x=\"" << W - mr + 8 << "\" y=\"" << py + 4
          << "\" text-anchor=\"start\" font-size=\"11\">" << fmt(t)
          << "</text>\n";
    }
  }
  out << "<text x=\"" << W / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\" font-size=\"13\">" << spec.xlabel
      << "</text>\n";
  out << "<text x=\"18\" y=\"" << H / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
      << H / 2 << ")\">" << spec.ylabel << "</text>\n";
  if (!spec.y2label.empty())
    out << "<text x=\"" << W - 16 << "\" y=\"" << H / 2
        << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(90 "
        << W - 16 << " " << H / 2 << ")\">" << spec.y2label << "</text>\n";

  for (double v : spec.vlines) {
    out << "<line x1=\"" << X(v) << "\" y1=\"" << mt << "\" x2=\"" << X(v)
        << "\" y2=\"" << H - mb
        << "\" stroke=\"#888\" stroke-dasharray=\"4,3\"/>\n";
  }

  for (const auto& eb : spec.error_bars) {
    const double px = X(eb.x);
    out << "<line x1=\"" << px << "\" y1=\"" << Y(eb.y_low) << "\" x2=\"" << px
        << "\" y2=\"" << Y(eb.y_high) << "\" stroke=\"#333\"/>\n";
    for (double yv : {eb.y_low, eb.y_high})
      out << "<line x1=\"" << px - 4 << "\" y1=\"" << Y(yv) << "\" x2=\""
          << px + 4 << "\" y2=\"" << Y(yv) << "\" stroke=\"#333\"/>\n";
  }

  double legend_y = mt + 16;
  for (const auto& s : spec.series) {
    out << "<polyline fill=\"none\" stroke=\"" << s.color
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      out << X(s.x[i]) << "," << (s.second_axis ? Y2(s.y[i]) : Y(s.y[i])) << " ";
    out << "\"/>\n";
    if (s.markers) {
      for (std::size_t i = 0; i < s.x.size(); ++i)
        out << "<circle cx=\"" << X(s.x[i]) << "\" cy=\""
            << (s.second_axis ? Y2(s.y[i]) : Y(s.y[i])) << "\" r=\"2.5\" fill=\""
            << s.color << "\"/>\n";
    }
    if (!s.label.empty()) {
      out << "<line x1=\"" << ml + 10 << "\" y1=\"" << legend_y << "\" x2=\""
          << ml + 34 << "\" y2=\"" << legend_y << "\" stroke=\"" << s.color
          << "\" stroke-width=\"2\"/>\n";
      out << "<text x=\"" << ml + 40 << "\" y=\"" << legend_y + 4
          << "\" font-size=\"12\">" << s.label << "</text>\n";
      legend_y += 16;
    }
  }
  out << "</svg>\n";
}

void write_heatmap(const std::filesystem::path& path, const HeatmapSpec& spec) {
  if (spec.nx < 2 || spec.ny < 2 ||
      spec.values.size() != static_cast<std::size_t>(spec.nx) * spec.ny)
    throw std::invalid_argument("write_heatmap: bad grid");
  const double W = spec.width, H = spec.height;
  const double ml = 60, mr = 25, mt = 40, mb = 50;

  double vmin = std::numeric_limits<double>::infinity(), vmax = -vmin;
  for (double v : spec.values) {
    vmin = std::min(vmin, v);
    vmax = std::max(vmax, v);
  }
  if (!(vmax > vmin)) vmax = vmin + 1.0;

  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw std::runtime_error("write_heatmap: cannot open " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
      << "\" height=\"" << H << "\" font-family=\"sans-serif\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2
      << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << spec.title
      << "</text>\n";

  const double cw = (W - ml - mr) / spec.nx;
  const double ch = (H - mt - mb) / spec.ny;
  for (int iy = 0; iy < spec.ny; ++iy) {
    for (int ix = 0; ix < spec.nx; ++ix) {
      const double v = spec.values[static_cast<std::size_t>(iy) * spec.nx + ix];
      const double u = (v - vmin) / (vmax - vmin);
      // Blue (low) -> white -> red (high).
      const int r = static_cast<int>(255 * std::min(1.0, 2.0 * u));
      const int b = static_cast<int>(255 * std::min(1.0, 2.0 * (1.0 - u)));
      const int g = static_cast<int>(255 * (1.0 - std::abs(2.0 * u - 1.0)));
      char color[8];
      std::snprintf(color, sizeof(color), "#%02x%02x%02x", r, g, b);
      out << "<rect x=\"" << ml + ix * cw << "\" y=\""
          << mt + (spec.ny - 1 - iy) * ch << "\" width=\"" << cw + 0.5
          << "\" height=\"" << ch + 0.5 << "\" fill=\"" << color << "\"/>\n";
    }
  }
  auto X = [&](double v) {
    return ml + (v - spec.x_min) / (spec.x_max - spec.x_min) * (W - ml - mr);
  };
  auto Y = [&](double v) {
    return H - mb - (v - spec.y_min) / (spec.y_max - spec.y_min) * (H - mt - mb);
  };
  if (!spec.overlay_circle.empty()) {
    out << "<polyline fill=\"none\" stroke=\"#000\" stroke-dasharray=\"5,4\" "
           "points=\"";
    for (const auto& pt : spec.overlay_circle)
      out << X(pt[0]) << "," << Y(pt[1]) << " ";
    out << "\"/>\n";
  }
  out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << W - ml - mr
      << "\" height=\"" << H - mt - mb
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\" font-size=\"13\">" << spec.xlabel
      << "</text>\n";
  out << "<text x=\"18\" y=\"" << H / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
      << H / 2 << ")\">" << spec.ylabel << "</text>\n";
  out << "</svg>\n";
}

}  // namespace thermo::util
