#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include "doctest.h"
#include "tssl/common.hpp"
#include "tssl/plot.hpp"

using tssl::plot::ChartOptions;
using tssl::plot::render_line_chart;
using tssl::plot::Series;

namespace {

std::vector<Series> sample_series() {
  Series a;
  a.label = "val miou";
  a.color = "#1f77b4";
  a.points = {{200, 0.42}, {400, 0.55}, {600, 0.61}};
  Series b;
  b.label = "loss";
  b.color = "#d62728";
  b.points = {{200, 1.2}, {400, 0.8}, {600, 0.5}};
  return {a, b};
}

}  // namespace

TEST_SUITE("plot") {

TEST_CASE("rendering is deterministic and well-formed svg") {
  ChartOptions opt;
  opt.title = "training curves";
  opt.x_label = "step";
  opt.y_label = "value";
  const std::string one = render_line_chart(sample_series(), opt);
  const std::string two = render_line_chart(sample_series(), opt);
  CHECK(one == two);
  CHECK(one.rfind("<svg", 0) == 0);
  CHECK(one.find("</svg>") != std::string::npos);
  CHECK(one.find("training curves") != std::string::npos);
  CHECK(one.find("step") != std::string::npos);

  // One polyline per series, in its requested color, plus legend labels.
  CHECK(one.find("#1f77b4") != std::string::npos);
  CHECK(one.find("#d62728") != std::string::npos);
  CHECK(one.find("val miou") != std::string::npos);
  size_t polylines = 0;
  for (size_t pos = one.find("<polyline"); pos != std::string::npos;
       pos = one.find("<polyline", pos + 1)) {
    ++polylines;
  }
  CHECK(polylines == 2);
}

TEST_CASE("special characters in labels are escaped") {
  ChartOptions opt;
  opt.title = "a < b & \"c\"";
  Series s;
  s.label = "x<y>";
  s.color = "#000000";
  s.points = {{0, 0}, {1, 1}};
  const std::string svg = render_line_chart({s}, opt);
  CHECK(svg.find("a &lt; b &amp; &quot;c&quot;") != std::string::npos);
  CHECK(svg.find("x&lt;y&gt;") != std::string::npos);
  CHECK(svg.find("a < b") == std::string::npos);
}

TEST_CASE("degenerate inputs are rejected") {
  ChartOptions opt;
  CHECK_THROWS_AS(render_line_chart({}, opt), tssl::Error);

  Series empty;
  empty.label = "e";
  empty.color = "#000";
  CHECK_THROWS_AS(render_line_chart({empty}, opt), tssl::Error);

  Series nan_series = empty;
  nan_series.points = {{0.0, std::numeric_limits<double>::quiet_NaN()}};
  CHECK_THROWS_AS(render_line_chart({nan_series}, opt), tssl::Error);

  Series fine = empty;
  fine.points = {{0, 1}};
  ChartOptions tiny;
  tiny.width = 10;
  tiny.height = 10;
  CHECK_THROWS_AS(render_line_chart({fine}, tiny), tssl::Error);
}

TEST_CASE("single-valued series still get a sensible axis") {
  Series flat;
  flat.label = "constant";
  flat.color = "#2ca02c";
  flat.points = {{1, 0.5}, {2, 0.5}, {3, 0.5}};
  ChartOptions opt;
  const std::string svg = render_line_chart({flat}, opt);
  CHECK(svg.find("<polyline") != std::string::npos);
  CHECK(svg.find("nan") == std::string::npos);
  CHECK(svg.find("inf") == std::string::npos);
}

TEST_CASE("charts land on disk through the writer") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "tssl_plot_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path path = dir / "chart.svg";
  ChartOptions opt;
  opt.title = "t";
  tssl::plot::write_line_chart(path, sample_series(), opt);
  std::ifstream in(path, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  CHECK(bytes == render_line_chart(sample_series(), opt));
  fs::remove_all(dir);
}

}  // TEST_SUITE
