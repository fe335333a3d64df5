#include "doctest.h"
#include "config.hpp"

using namespace semiflow::cli;

TEST_CASE("config: sections, typed values and defaults") {
  auto c = Config::parse("[map]\nkind = pm\nalpha = 0.6\n[run]\nseed = 7\nstrict = yes\n");
  CHECK(c.str("map.kind", "") == "pm");
  CHECK(c.num("map.alpha", 0.0) == 0.6);
  CHECK(c.num("map.cutoff", 400) == 400);
  CHECK(*c.seed("run.seed") == 7u);
  CHECK(c.flag("run.strict", false));
  CHECK_FALSE(c.seed("other.seed").has_value());
  CHECK_THROWS_AS(c.integer("map.kind", 0), ConfigError);
  CHECK_THROWS_AS(c.flag("map.kind", false), ConfigError);
  CHECK_THROWS_AS(Config::parse("[map\nkind = pm\n"), ConfigError);
}

TEST_CASE("config: grids") {
  CHECK(parse_grid("1, 2,3") == std::vector<double>{1, 2, 3});
  auto lin = parse_grid("lin:0:1:5");
  REQUIRE(lin.size() == 5);
  CHECK(lin[2] == doctest::Approx(0.5));
  auto lg = parse_grid("log:1:100:3");
  CHECK(lg[1] == doctest::Approx(10.0));
  CHECK_THROWS_AS(parse_grid(""), ConfigError);
  CHECK_THROWS_AS(parse_grid("log:0:1:3"), ConfigError);
  CHECK_THROWS_AS(parse_grid("lin:0:1"), ConfigError);
  auto c = Config::parse("[a]\nN = 10, 20\nobs = x, y\n");
  CHECK(c.ints("a.N", {}) == std::vector<long>{10, 20});
  CHECK(c.words("a.obs", {}) == std::vector<std::string>{"x", "y"});
  CHECK(c.grid("a.missing", {4.0}) == std::vector<double>{4.0});
}
