#include <gtest/gtest.h>

#include <string>

#include "kdamp/run_config.hpp"
#include "kdamp/svg.hpp"

using namespace kdamp;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_run_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(RunConfig, EmptyTextGivesDefaults) {
  RunConfig c = parse_run_config("");
  EXPECT_EQ(c.seed, 12345);
  EXPECT_EQ(c.grid_D, 2);
  EXPECT_EQ(c.k.size(), 5u);
  EXPECT_EQ(c.eps.size(), 5u);
  EXPECT_TRUE(c.echo.is_null() || c.echo.empty());
}

TEST(RunConfig, ReadsTypedValuesAndLists) {
  RunConfig c = parse_run_config(
      "[run]\nseed = 7\nplots = yes\n[domain]\nkind = disk\n[collision]\nkind = multirate\n"
      "[modes]\nk = 2 3\ntau = -1\n[layer]\nchi = 0.5, 2\n[sim]\neps = 0.02, 0.005\ninit = ansatz\n");
  EXPECT_EQ(c.seed, 7);
  EXPECT_TRUE(c.plots);
  EXPECT_EQ(c.domain.kind, DomainKind::Disk);
  EXPECT_EQ(c.collision.kind, CollisionKind::MultiRate);
  EXPECT_EQ(c.sim.collision.kind, CollisionKind::MultiRate);
  EXPECT_EQ(c.k, (std::vector<int>{2, 3}));
  EXPECT_EQ(c.tau, (std::vector<int>{-1}));
  EXPECT_EQ(c.chi, (std::vector<double>{0.5, 2.0}));
  EXPECT_EQ(c.sim_eps.size(), 2u);
  EXPECT_EQ(c.sim.init, SimInit::Ansatz);
  EXPECT_EQ(c.echo["run.seed"], "7");
}

TEST(RunConfig, UnknownKeyReportsLine) {
  const std::string e = error_of("[run]\nseed = 1\n\n[grid]\nQq = 4\n");
  EXPECT_NE(e.find("line 5"), std::string::npos) << e;
  EXPECT_NE(e.find("grid.Qq"), std::string::npos) << e;
}

TEST(RunConfig, BadValueReportsKeyAndLine) {
  const std::string e = error_of("[grid]\nQ = twelve\n");
  EXPECT_NE(e.find("line 2"), std::string::npos) << e;
  EXPECT_NE(e.find("grid.Q"), std::string::npos) << e;
  EXPECT_NE(error_of("[collision]\nkind = hard_spheres\n").find("collision.kind"), std::string::npos);
  EXPECT_NE(error_of("[run]\nplots = maybe\n").find("boolean"), std::string::npos);
}

TEST(RunConfig, SyntaxErrorReportsLine) {
  const std::string e = error_of("[run]\nseed = 1\nnot a pair\n");
  EXPECT_NE(e.find("line 3"), std::string::npos) << e;
}

TEST(RunConfig, EpsInvariants) {
  EXPECT_NE(error_of("[residuals]\neps = 0.1, 0.01, 0.01, 0.001\n").find("distinct"), std::string::npos);
  EXPECT_NE(error_of("[residuals]\neps = 0.1, -0.01, 0.003, 0.001\n").find("positive"), std::string::npos);
  EXPECT_NE(error_of("[residuals]\neps = 0.1, 0.01, 0.001\n").find("at least 4"), std::string::npos);
  EXPECT_NE(error_of("[sim]\neps = 0\n").find("positive"), std::string::npos);
}

TEST(RunConfig, OtherInvariants) {
  EXPECT_NE(error_of("[modes]\ntau = 2\n").find("tau"), std::string::npos);
  EXPECT_NE(error_of("[modes]\nk = 0\n").find("1-based"), std::string::npos);
  EXPECT_NE(error_of("[layer]\nchi = 0\n").find("positive"), std::string::npos);
  EXPECT_NE(error_of("[grid]\nD = 4\n").find("grid.D"), std::string::npos);
  EXPECT_NE(error_of("[modes]\nk =\n").find("empty"), std::string::npos);
  // accommodation above one is not a physical wall
  EXPECT_FALSE(error_of("[sim]\neps = 0.5\nchi = 2\n").empty());
}

TEST(RunConfig, MissingFileIsConfigError) {
  EXPECT_THROW(load_run_config("/nonexistent/run.ini"), ConfigError);
}

TEST(Svg, DeterministicAndWellFormed) {
  Plot p{"t", "x", "y", true, true, {}};
  p.series.push_back({"a", {1, 10, 100}, {1, 0.1, 0.01}, true});
  p.series.push_back({"b", {1, 10, 100}, {2, 0, 0.02}});  // nonpositive point is skipped on log axes
  const std::string s = render_svg(p);
  EXPECT_EQ(s, render_svg(p));
  EXPECT_EQ(s.rfind("<svg", 0), 0u);
  EXPECT_NE(s.find("</svg>"), std::string::npos);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n') > 10, true);
  size_t circles = 0;
  for (size_t at = s.find("<circle"); at != std::string::npos; at = s.find("<circle", at + 1)) ++circles;
  EXPECT_EQ(circles, 3u);
}

TEST(Svg, RejectsEmptyPlot) {
  Plot p{"t", "x", "y", true, false, {}};
  p.series.push_back({"a", {-1, 0}, {1, 2}});
  EXPECT_THROW(render_svg(p), std::invalid_argument);
}
