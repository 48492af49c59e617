#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "kdamp/viscous_layer.hpp"

using namespace kdamp;

namespace {
Domain dom_of(DomainKind k) {
  DomainSpec s;
  s.kind = k;
  return make_domain(s);
}
}  // namespace

TEST(ViscousLayer, ProfilesSolveTheirOdes) {
  for (double chi : {0.5, 1.0, 2.0})
    for (int tau : {1, -1}) {
      LayerParams p{0.7, 1.3, chi, 2};
      const double lam = 5.0;
      const cplx datum(0.4, -1.1);
      auto u = tangential_velocity_profile(datum, lam, tau, p);
      auto c = check_profile(u, p.nu, I1 * double(tau) * lam, ScalarEP{}, p.nu / chi, -datum);
      EXPECT_LT(c.ode, 1e-6);
      EXPECT_LT(c.robin, 1e-7);
      EXPECT_LT(c.tail, 1e-12);
      EXPECT_TRUE(u.decays());
      auto th = temperature_profile(datum, lam, tau, p);
      c = check_profile(th, p.kappa, I1 * double(tau) * lam, ScalarEP{}, p.beta(), -datum);
      EXPECT_LT(c.ode, 1e-6);
      EXPECT_LT(c.robin, 1e-7);
    }
}

TEST(ViscousLayer, RobinSolverWithForcing) {
  const double coef = 0.8;
  const cplx il0(0, 3.0);
  ScalarEP f;
  f.add_term(cplx(-1.5, 0.4), 0, cplx(1.0, 2.0));
  f.add_term(cplx(-0.9, -0.2), 1, cplx(-0.5, 0.3));
  // resonant term: coef r^2 = il0
  const cplx r = std::sqrt(il0 / coef);
  f.add_term(-r, 0, cplx(0.7, 0.0));
  auto L = solve_robin_layer(coef, il0, f, 0.6, cplx(0.2, -0.4));
  auto c = check_profile(L, coef, il0, f, 0.6, cplx(0.2, -0.4));
  EXPECT_LT(c.ode, 1e-6);
  EXPECT_LT(c.robin, 1e-7);
  EXPECT_TRUE(L.decays());
}

TEST(ViscousLayer, Z1MatchesPrintedForm) {
  LayerParams p{0.9, 0.6, 1.4, 2};
  for (auto kind : {DomainKind::Slab, DomainKind::Rectangle, DomainKind::Disk}) {
    Domain dom = dom_of(kind);
    auto modes = compute_modes(dom, 5);
    for (const auto& m : modes)
      for (const auto& q : dom.boundary_quadrature(12))
        for (int tau : {1, -1}) {
          cplx a = normal_flux_Z1(m, tau, p, q.p), b = normal_flux_Z1_printed(m, tau, p, q.p);
          EXPECT_LT(std::abs(a - b), 1e-11 * (1 + std::abs(a)));
        }
  }
}

class ViscousAll : public ::testing::TestWithParam<DomainKind> {};

TEST_P(ViscousAll, SurfaceRouteMatchesClosedForm) {
  Domain dom = dom_of(GetParam());
  auto modes = compute_modes(dom, 5);
  for (double chi : {0.5, 1.0, 2.0})
    for (const auto& m : modes)
      for (int tau : {1, -1}) {
        LayerParams p{1.0, 1.0, chi, 2};
        DampingCoefficient d = damping_coefficient(dom, m, tau, p);
        EXPECT_LT(std::abs(d.il1 - d.il1_surface), 1e-8 * std::abs(d.il1)) << m.label();
        EXPECT_LT(d.il1.real(), 0.0);
      }
}

TEST_P(ViscousAll, TauSymmetry) {
  Domain dom = dom_of(GetParam());
  auto modes = compute_modes(dom, 4);
  LayerParams p{0.5, 0.25, 1.0, 2};
  for (const auto& m : modes) {
    auto dp = damping_coefficient(dom, m, 1, p), dm = damping_coefficient(dom, m, -1, p);
    EXPECT_NEAR(dp.il1.real(), dm.il1.real(), 1e-13);
    EXPECT_NEAR(dp.il1.imag(), -dm.il1.imag(), 1e-13);
  }
}

INSTANTIATE_TEST_SUITE_P(Domains, ViscousAll,
                         ::testing::Values(DomainKind::Slab, DomainKind::Rectangle, DomainKind::Disk));

TEST(ViscousLayer, ChiLargeLimit) {
  // a, b -> 0: Lambda -> -sqrt(coef)/sqrt(2 lam^3) (1 + tau i) c^2
  Domain dom = dom_of(DomainKind::Rectangle);
  auto m = compute_modes(dom, 1)[0];
  LayerParams p{1.0, 1.0, 1e9, 2};
  auto d = damping_coefficient(dom, m, 1, p);
  const double lam = m.lambda0, c2 = 1.0;
  const cplx L0 = -1.0 / std::sqrt(2 * lam * lam * lam) * cplx(1, 1) * c2;
  EXPECT_LT(std::abs(d.Lambda1 - L0), 1e-7);
  EXPECT_LT(std::abs(d.Lambda2 - L0), 1e-7);
}

TEST(ViscousLayer, SlabHasNoTangentialGradient) {
  Domain dom = dom_of(DomainKind::Slab);
  auto m = compute_modes(dom, 2)[1];
  auto d = damping_coefficient(dom, m, 1, LayerParams{});
  EXPECT_NEAR(d.integral_grad, 0.0, 1e-14);
  // two walls, Psi^2 = 2 at each
  EXPECT_NEAR(d.integral_psi, 2 * 2 * 0.5 * m.lambda0 * m.lambda0, 1e-10);
}

TEST(ViscousLayer, RejectsBadInput) {
  Domain dom = dom_of(DomainKind::Slab);
  auto m = compute_modes(dom, 1)[0];
  EXPECT_THROW(damping_coefficient(dom, m, 1, LayerParams{1, 1, 0, 2}), std::invalid_argument);
  EXPECT_THROW(damping_coefficient(dom, m, 0, LayerParams{}), std::invalid_argument);
  std::ostringstream os;
  write_damping_csv(os, {damping_coefficient(dom, m, 1, LayerParams{})});
  EXPECT_NE(os.str().find("domain,k,tau,lambda0,Re_il1"), std::string::npos);
}
