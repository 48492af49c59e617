#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "kdamp/assembly.hpp"

using namespace kdamp;

namespace {

const SlabEigenpair& default_pair() {
  static const SlabEigenpair a = build_slab_eigenpair(AssemblyOptions{});
  return a;
}

std::vector<NeumannMode> first_degenerate_group(const Domain& dom) {
  auto modes = compute_modes(dom, 8);
  for (const auto& m : modes)
    if (m.degeneracy > 1) {
      std::vector<NeumannMode> g;
      for (const auto& q : modes)
        if (q.group_id == m.group_id) g.push_back(q);
      return g;
    }
  return {};
}

}  // namespace

TEST(ExpPolyAlgebra, IntegrateMatchesQuadrature) {
  ScalarEP f;
  f.add_term(cplx(0, 3.0), 1, cplx(1.0, -0.5));
  f.add_term(cplx(-0.7, 0.2), 2, cplx(0.3, 0.1));
  f.add_term(0.0, 1, cplx(2.0, 0.0));
  ScalarEP g = f * conj(f);
  Rule1D r = gauss_legendre(60, 0.0, 1.0);
  cplx q = 0;
  for (std::size_t i = 0; i < r.size(); ++i) q += r.w[i] * g.eval(r.x[i]);
  EXPECT_LT(std::abs(integrate(g, 0.0, 1.0) - q), 1e-12);
  EXPECT_NEAR(integrate(g, 0.0, 1.0).imag(), 0.0, 1e-12);
}

TEST(SlabShifted, SolvesForcedProblem) {
  DomainSpec ds;
  Domain dom = make_domain(ds);
  auto m = compute_modes(dom, 2)[1];
  const int D = 2;
  SlabFluid U0 = slab_eigenpair(m, -1, D);
  const cplx il0 = I1 * (-m.lambda0);
  SlabFluid F;
  F.rho.add_term(cplx(0, 1.3), 0, cplx(0.2, 0.1));
  F.u.add_term(0.0, 2, cplx(-1.0, 0.0));
  F.theta.add_term(cplx(0, -m.n * std::numbers::pi), 1, cplx(0.5, 0.5));
  SlabShifted s = solve_slab_shifted(U0, il0, D, F, cplx(0.3, -0.1), cplx(-0.2, 0.4));
  EXPECT_LT(slab_shifted_residual(s, U0, il0, D, F), 1e-10);
  EXPECT_LT(std::abs(s.V.u.eval(0.0) + cplx(0.3, -0.1)), 1e-12);
  EXPECT_LT(std::abs(s.V.u.eval(1.0) - cplx(-0.2, 0.4)), 1e-12);
  EXPECT_LT(std::abs(slab_inner(s.V, U0, D)), 1e-12);
  // Green's identity: imu = c int g Psi - <F, U0>
  const double c = std::sqrt((D + 2.0) / (2.0 * D));
  const ScalarEP psi = slab_cosine(m);
  const cplx green = c * (cplx(0.3, -0.1) * psi.eval(0.0) + cplx(-0.2, 0.4) * psi.eval(1.0)) - slab_inner(F, U0, D);
  EXPECT_LT(std::abs(s.imu - green), 1e-11);
}

TEST(SlabShifted, EigenpairIsNormalized) {
  DomainSpec ds;
  Domain dom = make_domain(ds);
  for (const auto& m : compute_modes(dom, 3)) {
    SlabFluid U = slab_eigenpair(m, 1, 2);
    EXPECT_NEAR(slab_inner(U, U, 2).real(), 1.0, 1e-12);
  }
}

TEST(Assembly, ConstructionIsConsistent) {
  const auto& a = default_pair();
  EXPECT_LT(a.ode_residual, 1e-10);
  EXPECT_LT(a.orth1, 1e-9);
  EXPECT_LT(a.orth2, 1e-9);
  EXPECT_LT(a.leak, 1e-10);
  for (const auto& W : a.wall) {
    EXPECT_LT(W.solv1.max_abs(), 1e-10);
    EXPECT_LT(W.solv2.max_abs(), 1e-10);
    EXPECT_LT(W.bc1, 1e-10);
    EXPECT_LT(W.bc2, 1e-10);
    EXPECT_NEAR(W.robin_beta, (2 + 2.0) / (2 + 1.0) * a.tc.kappa / a.chi, 1e-12);
    for (int m = 0; m < 3; ++m) {
      for (const auto& t : W.layer[m].terms) EXPECT_LT(t.alpha.real(), 0.0);
      for (const auto& t : W.knudsen[m].terms) EXPECT_LT(t.alpha.real(), 0.0);
    }
  }
  // walls mirror each other for the symmetric mode
  EXPECT_LT(std::abs(a.wall[0].Z1 + a.wall[1].Z1), 1e-12);
}

TEST(Assembly, InteriorDissipationClosedForm) {
  const auto& a = default_pair();
  const int D = 2;
  const double mu = a.mode.mu, lam2 = a.mode.lambda0 * a.mode.lambda0, c2 = (D + 2.0) / (2.0 * D);
  const double expect = -(a.tc.nu * (2.0 - 2.0 / D) * mu * c2 * mu / lam2 +
                          (D + 2.0) / D * a.tc.kappa * mu * 0.5 * D * c2 * std::pow(2.0 / (D + 2.0), 2));
  EXPECT_NEAR(a.dissipation.real(), expect, 1e-10);
  EXPECT_NEAR(a.dissipation.imag(), 0.0, 1e-10);
  EXPECT_LE(a.dissipation.real(), 0.0);
  EXPECT_LT(std::abs(a.il[2] - a.il2_green), 1e-10);
}

class AssemblyParams : public ::testing::TestWithParam<std::tuple<int, int, double, int>> {};

TEST_P(AssemblyParams, FirstCorrectionMatchesDampingCoefficient) {
  auto [mode, tau, chi, kind] = GetParam();
  AssemblyOptions o;
  o.mode = mode;
  o.tau = tau;
  o.chi = chi;
  o.velocity_points = 8;
  if (kind == 1) {
    o.collision.kind = CollisionKind::MultiRate;
    o.collision.sigma_a = 2;
    o.collision.sigma_b = 4;
  }
  SlabEigenpair a = build_slab_eigenpair(o);
  EXPECT_NEAR(a.il[0].imag(), tau * a.mode.lambda0, 1e-14);
  EXPECT_LT(std::abs(a.il[1] - a.il1_closed), 1e-10 * std::abs(a.il1_closed));
  EXPECT_LT(std::abs(a.il[1] - a.il1_green), 1e-10 * std::abs(a.il1_closed));
  EXPECT_LT(a.il[1].real(), 0.0);
  EXPECT_LT(std::abs(a.il[2] - a.il2_green), 1e-9 * std::abs(a.il[2]));
  EXPECT_LE(a.dissipation.real(), 0.0);
  for (const auto& W : a.wall) {
    EXPECT_LT(W.solv1.max_abs(), 1e-10);
    EXPECT_LT(W.solv2.max_abs(), 1e-10);
    EXPECT_NEAR(W.robin_beta, 4.0 / 3.0 * a.tc.kappa / chi, 1e-10);
  }
}

INSTANTIATE_TEST_SUITE_P(Slab, AssemblyParams,
                         ::testing::Combine(::testing::Values(1, 2), ::testing::Values(1, -1),
                                            ::testing::Values(0.5, 2.0), ::testing::Values(0, 1)));

TEST(Assembly, TauConjugation) {
  AssemblyOptions o;
  o.velocity_points = 8;
  SlabEigenpair p = build_slab_eigenpair(o);
  o.tau = -1;
  SlabEigenpair m = build_slab_eigenpair(o);
  for (int k = 0; k < 3; ++k) EXPECT_LT(std::abs(p.il[k] - std::conj(m.il[k])), 1e-10);
}

TEST(Assembly, CutoffIsTwiceDifferentiable) {
  const double delta = 0.5, h = 1e-5;
  for (double d : {0.1, 0.25, 0.3, 0.375, 0.45, 0.5, 0.6}) {
    double c, dc, cp, dcp, cm, dcm;
    layer_cutoff(LayerCutoff::Bump, d, delta, c, dc);
    layer_cutoff(LayerCutoff::Bump, d + h, delta, cp, dcp);
    layer_cutoff(LayerCutoff::Bump, d - h, delta, cm, dcm);
    EXPECT_NEAR((cp - cm) / (2 * h), dc, 1e-6);
    // second derivative of the quintic step peaks at 30 sqrt(3)/9 / (delta/2)^2
    const double bound = 30 * std::sqrt(3.0) / 9 / (0.25 * delta * delta);
    EXPECT_LE(std::abs(dcp - dcm) / (2 * h), bound * (1 + 1e-3));
  }
  double c, dc;
  layer_cutoff(LayerCutoff::Bump, 0.2, delta, c, dc);
  EXPECT_EQ(c, 1.0);
  layer_cutoff(LayerCutoff::Bump, 0.5, delta, c, dc);
  EXPECT_EQ(c, 0.0);
}

TEST(Assembly, AnsatzApproachesInteriorTermDeepInside) {
  const auto& a = default_pair();
  const int N = a.model->grid.size();
  const double x = 0.4;
  const VecC g0 = a.interior[0].eval(x);
  double prev = 1e300;
  for (double eps : {1e-2, 1e-4, 1e-6}) {
    const double d = (evaluate_ansatz(a, eps, x).g - g0).cwiseAbs().maxCoeff();
    EXPECT_LT(d, prev);
    prev = d;
  }
  EXPECT_LT(prev, 5e-3);
  (void)N;
}

TEST(Assembly, OrderZeroResidualDoesNotDecay) {
  AssemblyOptions o;
  o.order = 0;
  o.velocity_points = 8;
  SlabEigenpair a = build_slab_eigenpair(o);
  const double r1 = residual_norms(a, 1e-2).interior, r2 = residual_norms(a, 1e-4).interior;
  EXPECT_GT(r2, r1);
}

TEST(Assembly, BoundaryResidualAtOrderOne) {
  AssemblyOptions o;
  o.order = 1;
  o.velocity_points = 8;
  SlabEigenpair a = build_slab_eigenpair(o);
  const double b1 = residual_norms(a, 1e-3).boundary, b2 = residual_norms(a, 1e-5).boundary;
  EXPECT_NEAR(std::log(b1 / b2) / std::log(std::sqrt(1e-3 / 1e-5)), 2.0, 0.02);
}

// the predicted exponents are reached once eps is small enough
TEST(Assembly, AsymptoticSlopes) {
  const auto& a = default_pair();
  ScalingReport r = scaling_study(a, {1e-6, 3e-7, 1e-7, 3e-8, 1e-8});
  EXPECT_NEAR(r.slope_interior, 1.0, 0.05);
  EXPECT_NEAR(r.slope_boundary, 3.0, 0.01);
  EXPECT_NEAR(r.slope_deviation, 0.25, 0.01);
}

TEST(Assembly, SlopesStableUnderRefinement) {
  const auto& a = default_pair();
  const std::vector<double> eps = {1e-1, 3e-2, 1e-2, 3e-3, 1e-3};
  ScalingReport r1 = scaling_study(a, eps, 10), r2 = scaling_study(a, eps, 20);
  EXPECT_NEAR(r1.slope_interior, r2.slope_interior, 0.05);
  EXPECT_NEAR(r1.slope_boundary, r2.slope_boundary, 0.05);
  EXPECT_NEAR(r1.slope_deviation, r2.slope_deviation, 0.05);
  AssemblyOptions o;
  o.velocity_points = 12;
  ScalingReport r3 = scaling_study(build_slab_eigenpair(o), eps, 10);
  EXPECT_NEAR(r1.slope_interior, r3.slope_interior, 0.05);
  EXPECT_NEAR(r1.slope_deviation, r3.slope_deviation, 0.05);
}

TEST(Assembly, ReportRoundTrip) {
  ScalingReport r;
  r.order = 2;
  r.cutoff = "bump";
  r.eps = {0.1, 0.01, 1e-3, 1e-4};
  r.interior = {1.0 / 3, 2.0 / 7, 0.1, 1e-17};
  r.boundary = {0.5, 0.25, 0.125, 0.0625};
  r.deviation = {0.9, 0.8, 0.7, 0.6};
  r.slope_interior = 1.0000000000000002;
  r.slope_boundary = 3;
  r.slope_deviation = 0.25;
  r.seconds = 1.5;
  nlohmann::json j = r;
  ScalingReport s = nlohmann::json::parse(j.dump()).get<ScalingReport>();
  EXPECT_EQ(s.eps, r.eps);
  EXPECT_EQ(s.interior, r.interior);
  EXPECT_EQ(s.slope_interior, r.slope_interior);
  EXPECT_EQ(s.cutoff, r.cutoff);
}

TEST(Assembly, EigenpairJson) {
  nlohmann::json j = eigenpair_json(default_pair());
  EXPECT_EQ(j["walls"].size(), 2u);
  EXPECT_EQ(j["il"].size(), 3u);
}

TEST(Assembly, RejectsBadInput) {
  AssemblyOptions o;
  o.order = 3;
  EXPECT_THROW(build_slab_eigenpair(o), std::invalid_argument);
  o = AssemblyOptions{};
  o.chi = 0;
  EXPECT_THROW(build_slab_eigenpair(o), std::invalid_argument);
  EXPECT_THROW(evaluate_ansatz(default_pair(), 0.0, 0.5), std::invalid_argument);
  EXPECT_THROW(evaluate_ansatz(default_pair(), 0.1, 1.5), std::domain_error);
  EXPECT_THROW(scaling_study(default_pair(), {0.1, 0.01, 0.001}), std::invalid_argument);
}

TEST(Multiplicity, SquarePairRotation) {
  DomainSpec ds;
  ds.kind = DomainKind::Rectangle;
  Domain dom = make_domain(ds);
  auto group = first_degenerate_group(dom);
  ASSERT_EQ(group.size(), 2u);
  for (double chi : {0.5, 1.0, 2.0})
    for (int tau : {1, -1}) {
      LayerParams p{1.0, 1.0, chi, 2};
      MultiplicityResult r = orthogonalize_multiplicity(dom, group, tau, p);
      EXPECT_LT(r.offdiag, 1e-9);
      EXPECT_LT(r.compat, 1e-8);
      EXPECT_LT((r.Q1 - r.Q1_closed).cwiseAbs().maxCoeff(), 1e-8);
      EXPECT_LT(r.asymmetry, 1e-10);
      for (int k = 0; k < 2; ++k) {
        EXPECT_LT(r.il1[k].real(), 0.0);
        DampingCoefficient d = damping_coefficient(dom, group[k], tau, p);
        EXPECT_LT(std::abs(r.Q1(k, k) - d.il1), 1e-8 * std::abs(d.il1));
      }
      EXPECT_TRUE(r.collide);  // x <-> y symmetry
      EXPECT_LT(detail::offdiag_max(r.Q2_rotated), 1e-10);
      EXPECT_FALSE(r.q2_boundary_part);
    }
}

TEST(Multiplicity, RotationDiagonalizesMixedBasis) {
  DomainSpec ds;
  ds.kind = DomainKind::Rectangle;
  ds.Lx = 1.0;
  ds.Ly = 1.0;
  Domain dom = make_domain(ds);
  auto group = first_degenerate_group(dom);
  ASSERT_EQ(group.size(), 2u);
  MultiplicityResult r = orthogonalize_multiplicity(dom, group, 1, LayerParams{});
  // the Q1 eigenvalues are basis independent
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(r.Q1);
  std::vector<cplx> ev = {es.eigenvalues()(0), es.eigenvalues()(1)}, dg = r.il1;
  auto by_re = [](cplx a, cplx b) { return a.real() < b.real() || (a.real() == b.real() && a.imag() < b.imag()); };
  std::sort(ev.begin(), ev.end(), by_re);
  std::sort(dg.begin(), dg.end(), by_re);
  for (int k = 0; k < 2; ++k) EXPECT_LT(std::abs(ev[k] - dg[k]), 1e-9);
}

TEST(Multiplicity, SimpleModeIdentity) {
  DomainSpec ds;
  ds.kind = DomainKind::Disk;
  Domain dom = make_domain(ds);
  auto modes = compute_modes(dom, 6);
  for (const auto& m : modes) {
    if (m.degeneracy != 1) continue;
    MultiplicityResult r = orthogonalize_multiplicity(dom, {m}, 1, LayerParams{});
    EXPECT_EQ(r.rotation(0, 0), 1.0);
    EXPECT_FALSE(r.collide);
    EXPECT_LT(std::abs(r.il1[0] - damping_coefficient(dom, m, 1, LayerParams{}).il1), 1e-8 * std::abs(r.il1[0]));
  }
}

TEST(Multiplicity, RejectsMixedGroup) {
  DomainSpec ds;
  ds.kind = DomainKind::Rectangle;
  Domain dom = make_domain(ds);
  auto modes = compute_modes(dom, 4);
  EXPECT_THROW(orthogonalize_multiplicity(dom, {modes[0], modes[3]}, 1, LayerParams{}), std::invalid_argument);
  EXPECT_THROW(orthogonalize_multiplicity(dom, {}, 1, LayerParams{}), std::invalid_argument);
}
