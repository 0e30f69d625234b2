// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "vspp/error.hpp"
#include "vspp/metrics.hpp"
#include "vspp/plot.hpp"

using namespace vspp;

namespace {

Errc code_of(auto fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::Io;
}

metrics::MetricsTable sample_table(const std::string& stage, double scale) {
  metrics::MetricsTable t;
  t.stage = stage;
  t.config_hash = 0xfeedULL;
  t.config_yaml = "profile: desk\nseed: 1\n";
  t.columns = {"epoch", "loss", "acc"};
  for (int e = 1; e <= 5; ++e) t.add_row({static_cast<double>(e), scale / e, 0.1 * e + 1.0 / 3});
  return t;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("csv round trip keeps exact values and the header") {
    const auto t = sample_table("vspp", 2.7);
    const std::string text = metrics::to_csv(t);
    CHECK(text.rfind("# schema: vspp-metrics/1\n# stage: vspp\n# config_hash: 000000000000feed\n", 0) == 0);
    CHECK(text.find("# config: profile: desk\n# config: seed: 1\n") != std::string::npos);
    CHECK(text.find("epoch,loss,acc\n") != std::string::npos);
    const auto back = metrics::parse_csv(text);
    CHECK(back.rows == t.rows);
    CHECK(back.columns == t.columns);
    CHECK(back.config_hash == t.config_hash);
    CHECK(back.config_yaml == t.config_yaml);
    CHECK(metrics::to_csv(back) == text);
  }

  TEST_CASE("schema and row checks") {
    const std::string text = metrics::to_csv(sample_table("aux", 1));
    CHECK(code_of([&] { metrics::parse_csv("epoch,loss\n1,2\n"); }) == Errc::SchemaMismatch);
    std::string other = text;
    other.replace(other.find("vspp-metrics/1"), 14, "vspp-metrics/2");
    CHECK(code_of([&] { metrics::parse_csv(other); }) == Errc::SchemaMismatch);
    auto t = sample_table("aux", 1);
    CHECK(code_of([&] { t.add_row({1, 2}); }) == Errc::InvalidParams);
  }

  TEST_CASE("columns, truncation and slopes") {
    auto t = sample_table("vspp", 1);
    CHECK(t.column("acc") == 2);
    CHECK(t.column("nope") == -1);
    CHECK(t.values("epoch") == std::vector<double>{1, 2, 3, 4, 5});
    t.truncate_after("epoch", 3);
    CHECK(t.rows.size() == 3);
    CHECK(metrics::regression_slope({0, 1, 2, 3}, {1, 3, 5, 7}) == doctest::Approx(2.0));
    CHECK(metrics::regression_slope({1, 2, 3}, {4, 4, 4}) == 0.0);
  }

  TEST_CASE("save is atomic and load reads it back") {
    const auto dir = testutil::scratch("metrics");
    const auto t = sample_table("aux", 3);
    metrics::save(dir / "m.csv", t);
    CHECK(!std::filesystem::exists(dir / "m.csv.tmp"));
    CHECK(metrics::load(dir / "m.csv").rows == t.rows);
  }

  TEST_CASE("svg charts carry axes, legend and notes") {
    plot::Chart c;
    c.title = "loss";
    c.x_label = "epoch";
    c.y_label = "loss";
    c.series = {{"run-a", {1, 2, 3}, {3, 2, 1}}, {"run-b", {1, 2, 3}, {2, 2, 2}}};
    c.notes = {"config_hash run-a 000000000000feed"};
    const std::string svg = plot::render_svg(c);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(svg.find(">epoch<") != std::string::npos);
    CHECK(svg.find(">loss<") != std::string::npos);
    CHECK(svg.find("run-a") != std::string::npos);
    CHECK(svg.find("run-b") != std::string::npos);
    CHECK(svg.find("<!-- config_hash run-a 000000000000feed -->") != std::string::npos);
    std::size_t lines = 0;
    for (auto pos = svg.find("<polyline"); pos != std::string::npos; pos = svg.find("<polyline", pos + 1)) ++lines;
    CHECK(lines == 2);
  }

  TEST_CASE("overlay plots one file per shared metric") {
    const auto dir = testutil::scratch("plot");
    auto a = sample_table("vspp", 1);
    auto b = sample_table("vspp", 2);
    b.columns[2] = "other";
    const auto paths = plot::plot_metrics({{"a", a}, {"b", b}}, dir);
    REQUIRE(paths.size() == 1);
    CHECK(paths[0].filename() == "loss.svg");
    const std::string svg = slurp(paths[0]);
    CHECK(svg.find(">epoch<") != std::string::npos);
    CHECK(svg.find("000000000000feed") != std::string::npos);

    auto odd = sample_table("vspp", 1);
    odd.schema = "vspp-metrics/0";
    CHECK(code_of([&] { plot::plot_metrics({{"a", a}, {"odd", odd}}, dir); }) == Errc::SchemaMismatch);
  }
}
