#include <nci/tables.hpp>

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace nci;

TEST_SUITE("tables") {
  TEST_CASE("cells hold percent mean and unbiased std") {
    const auto t = make_table({"A"}, {"c1", "c2"}, {{{0.5, 0.6, 0.7}, {0.2, 0.2, 0.2}}});
    REQUIRE(t.columns == std::vector<std::string>{"c1", "c2", "Average"});
    CHECK(t.at("A", "c1").mean == doctest::Approx(60.0));
    CHECK(t.at("A", "c1").std == doctest::Approx(10.0));
    CHECK(t.at("A", "c2").std == doctest::Approx(0.0));
    // Average of per-run condition means: 35, 40, 45.
    CHECK(t.at("A", "Average").mean == doctest::Approx(40.0));
    CHECK(t.at("A", "Average").std == doctest::Approx(5.0));
  }

  TEST_CASE("average equals the mean of the condition cells") {
    const auto t = make_table({"A"}, {"a", "b", "c", "d", "e"},
                              {{{0.1, 0.3}, {0.5, 0.5}, {0.7, 0.9}, {0.2, 0.4}, {0.6, 0.6}}});
    double s = 0.0;
    for (int c = 0; c < 5; ++c) s += t.cells[0][static_cast<std::size_t>(c)].mean;
    CHECK(t.at("A", "Average").mean == doctest::Approx(s / 5).epsilon(1e-4));
  }

  TEST_CASE("failed runs mark the cell") {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const auto t = make_table({"A"}, {"c1", "c2"}, {{{0.5, nan}, {0.2, 0.4}}});
    CHECK(t.at("A", "c1").failed());
    CHECK(!t.at("A", "c2").failed());
    CHECK(t.at("A", "Average").failed());
    CHECK(emit_markdown(t).find("failed") != std::string::npos);
  }

  TEST_CASE("csv and markdown formatting") {
    const auto t = make_table({"M"}, {"Linear"}, {{{0.12345, 0.5}}});
    const std::string csv = emit_csv(t);
    CHECK(csv == "method,Linear_mean,Linear_std,Average_mean,Average_std\nM,31.17,26.63,31.17,26.63\n");
    const std::string md = emit_markdown(t);
    CHECK(md.rfind("| Method | Linear | Average |", 0) == 0);
    CHECK(md.find("31.17 ± 26.63") != std::string::npos);
  }

  TEST_CASE("csv round trip") {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const auto t = make_table({"A", "B"}, {"x", "y"}, {{{0.1, 0.2}, {0.3, 0.4}}, {{0.9, nan}, {0.5, 0.5}}});
    CHECK(parse_csv(emit_csv(t)) == t);
    const auto empty = make_table({}, {"x", "y"}, {});
    CHECK(emit_csv(empty) == "method,x_mean,x_std,y_mean,y_std,Average_mean,Average_std\n");
    CHECK(parse_csv(emit_csv(empty)) == empty);
  }

  TEST_CASE("row order does not change cells") {
    const auto a = make_table({"A", "B"}, {"x"}, {{{0.1, 0.2}}, {{0.7, 0.9}}});
    const auto b = make_table({"B", "A"}, {"x"}, {{{0.7, 0.9}}, {{0.1, 0.2}}});
    CHECK(a.at("A", "x").mean == b.at("A", "x").mean);
    CHECK(a.at("B", "Average").std == b.at("B", "Average").std);
  }

  TEST_CASE("malformed csv") {
    CHECK_THROWS(parse_csv("method,x_mean\nA,1.0,2.0\n"));
    CHECK_THROWS(parse_csv(""));
  }

  TEST_CASE("round2") {
    CHECK(round2(1.005) == doctest::Approx(1.0).epsilon(0.011));
    CHECK(round2(2.345678) == doctest::Approx(2.35));
    CHECK(round2(-0.004) == 0.0);
  }
}
