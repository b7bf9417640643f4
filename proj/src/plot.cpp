#include "tssl/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tssl/common.hpp"

namespace tssl::plot {
namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

// Round tick bounds outward to a "nice" step so axis labels stay short.
struct AxisScale {
  double lo = 0, hi = 1, step = 0.25;
};

AxisScale nice_axis(double lo, double hi) {
  if (!(std::isfinite(lo) && std::isfinite(hi))) return {0, 1, 0.25};
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double span = hi - lo;
  const double raw_step = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw_step)));
  double step = mag;
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    if (mag * m >= raw_step) {
      step = mag * m;
      break;
    }
  }
  AxisScale a;
  a.step = step;
  a.lo = std::floor(lo / step) * step;
  a.hi = std::ceil(hi / step) * step;
  if (a.lo == a.hi) a.hi = a.lo + step;
  return a;
}

}  // namespace

std::string render_line_chart(const std::vector<Series>& series, const ChartOptions& opt) {
  TSSL_CHECK(opt.width >= 200 && opt.height >= 150, "chart canvas too small");
  TSSL_CHECK(!series.empty(), "chart needs at least one series");
  for (const Series& s : series) {
    TSSL_CHECK(!s.points.empty(), "series '" << s.label << "' has no points");
  }
  const double ml = 64, mr = 16, mt = opt.title.empty() ? 16 : 40, mb = 48;
  const double pw = opt.width - ml - mr;
  const double ph = opt.height - mt - mb;

  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool any = false;
  for (const Series& s : series)
    for (const auto& [x, y] : s.points) {
      TSSL_CHECK(std::isfinite(x) && std::isfinite(y),
                 "non-finite point in series '" << s.label << "'");
      if (!any) {
        xmin = xmax = x;
        ymin = ymax = y;
        any = true;
      } else {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
    }
  const AxisScale xs = nice_axis(xmin, xmax);
  const AxisScale ys = nice_axis(ymin, ymax);

  auto px = [&](double x) { return ml + (x - xs.lo) / (xs.hi - xs.lo) * pw; };
  auto py = [&](double y) { return mt + ph - (y - ys.lo) / (ys.hi - ys.lo) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\""
      << opt.height << "\" viewBox=\"0 0 " << opt.width << " " << opt.height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!opt.title.empty())
    svg << "<text x=\"" << num(opt.width / 2.0)
        << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
        << escape(opt.title) << "</text>\n";

  // grid + ticks
  svg << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#444\">\n";
  for (double x = xs.lo; x <= xs.hi + xs.step * 0.5; x += xs.step) {
    const double gx = px(x);
    svg << "<line x1=\"" << num(gx) << "\" y1=\"" << num(mt) << "\" x2=\"" << num(gx)
        << "\" y2=\"" << num(mt + ph) << "\" stroke=\"#ddd\" stroke-width=\"1\"/>\n";
    svg << "<text x=\"" << num(gx) << "\" y=\"" << num(mt + ph + 16)
        << "\" text-anchor=\"middle\">" << num(x) << "</text>\n";
  }
  for (double y = ys.lo; y <= ys.hi + ys.step * 0.5; y += ys.step) {
    const double gy = py(y);
    svg << "<line x1=\"" << num(ml) << "\" y1=\"" << num(gy) << "\" x2=\"" << num(ml + pw)
        << "\" y2=\"" << num(gy) << "\" stroke=\"#ddd\" stroke-width=\"1\"/>\n";
    svg << "<text x=\"" << num(ml - 6) << "\" y=\"" << num(gy + 4)
        << "\" text-anchor=\"end\">" << num(y) << "</text>\n";
  }
  svg << "</g>\n";

  // axes
  svg << "<rect x=\"" << num(ml) << "\" y=\"" << num(mt) << "\" width=\"" << num(pw)
      << "\" height=\"" << num(ph) << "\" fill=\"none\" stroke=\"#333\" stroke-width=\"1\"/>\n";
  if (!opt.x_label.empty())
    svg << "<text x=\"" << num(ml + pw / 2) << "\" y=\"" << num(mt + ph + 36)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
        << escape(opt.x_label) << "</text>\n";
  if (!opt.y_label.empty())
    svg << "<text x=\"14\" y=\"" << num(mt + ph / 2)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
           "transform=\"rotate(-90 14 "
        << num(mt + ph / 2) << ")\">" << escape(opt.y_label) << "</text>\n";

  // series
  for (const Series& s : series) {
    if (s.points.empty()) continue;
    std::vector<std::pair<double, double>> pts = s.points;
    std::sort(pts.begin(), pts.end());
    svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < pts.size(); ++i) {
      if (i) svg << " ";
      svg << num(px(pts[i].first)) << "," << num(py(pts[i].second));
    }
    svg << "\"/>\n";
    for (const auto& [x, y] : pts)
      svg << "<circle cx=\"" << num(px(x)) << "\" cy=\"" << num(py(y))
          << "\" r=\"3\" fill=\"" << s.color << "\"/>\n";
  }

  // legend
  double lx = ml + 10, ly = mt + 14;
  for (const Series& s : series) {
    if (s.label.empty()) continue;
    svg << "<line x1=\"" << num(lx) << "\" y1=\"" << num(ly - 4) << "\" x2=\"" << num(lx + 22)
        << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << s.color
        << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << num(lx + 28) << "\" y=\"" << num(ly)
        << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#222\">" << escape(s.label)
        << "</text>\n";
    ly += 18;
  }

  svg << "</svg>\n";
  return svg.str();
}

void write_line_chart(const std::filesystem::path& path, const std::vector<Series>& series,
                      const ChartOptions& opt) {
  const std::string body = render_line_chart(series, opt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  TSSL_CHECK_CODE(out.good(), "io", "cannot open " << path.string() << " for writing");
  out << body;
  TSSL_CHECK_CODE(out.good(), "io", "failed writing " << path.string());
}

}  // namespace tssl::plot
