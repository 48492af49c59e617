#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "kdamp/knudsen.hpp"

using namespace kdamp;

namespace {

struct Fixture {
  CollisionModel model;
  WallFrame frame;
  BoundaryContext ctx;
};

Fixture make_fixture(CollisionSpec spec = {}, int Q = 12, double chi = 0.8, Eigen::VectorXd n = Eigen::Vector2d(-1, 0)) {
  Fixture f;
  f.model = make_collision(make_velocity_grid(2, Q, VelocityRule::HalfRange), spec);
  f.frame = make_wall_frame(n);
  f.ctx = make_boundary_context(f.model, f.frame, chi);
  return f;
}

CollisionSpec multirate() {
  CollisionSpec s;
  s.kind = CollisionKind::MultiRate;
  s.sigma_a = 0.7;
  s.sigma_b = 1.6;
  s.sigma_0 = 1.1;
  return s;
}

VecC random_vec(std::mt19937& rng, int n) {
  std::normal_distribution<double> N;
  VecC v(n);
  for (int i = 0; i < n; ++i) v(i) = cplx(N(rng), N(rng));
  return v;
}

}  // namespace

TEST(Knudsen, WallFrameRejectsOblique) {
  EXPECT_THROW(make_wall_frame(Eigen::Vector2d(std::sqrt(0.5), std::sqrt(0.5))), std::invalid_argument);
  WallFrame f = make_wall_frame(Eigen::Vector3d(0, 0, -1));
  EXPECT_EQ(f.axis, 2);
  EXPECT_EQ(f.tangents.size(), 2u);
}

TEST(Knudsen, HalfRangeMoments) {
  auto F = make_fixture();
  const auto& G = F.model.grid;
  const double s = sqrt2pi();
  Eigen::VectorXd vn = normal_speeds(G, F.frame);
  VecC one = VecC::Ones(G.size());
  EXPECT_NEAR(half_moment(G, F.frame, vn, one).real(), 0.5, 1e-13);
  EXPECT_NEAR(half_moment(G, F.frame, G.v2, one).real(), 3.0 / s, 1e-13);
  EXPECT_NEAR(half_moment(G, F.frame, Eigen::VectorXd(G.v2.cwiseProduct(G.v2)), one).real(), 15.0 / s, 1e-12);
}

TEST(Knudsen, DiffuseOperatorKillsWallMaxwellian) {
  auto F = make_fixture();
  const auto& G = F.model.grid;
  VecC one = VecC::Ones(G.size());
  EXPECT_LT(diffuse_op(G, F.frame, one, 0.8).cwiseAbs().maxCoeff(), 1e-13);
  // tangential drift is reflected into -sqrt(2pi) chi u.v
  VecC u(2);
  u << 0, 1;
  VecC ld = diffuse_op(G, F.frame, hydro_vector(G, 0, u, 0), 0.8);
  Eigen::VectorXd vn = normal_speeds(G, F.frame);
  for (int q = 0; q < G.size(); ++q)
    if (vn(q) > 0) EXPECT_NEAR(std::abs(ld(q) + sqrt2pi() * 0.8 * G.V(q, 1)), 0.0, 1e-13);
  // reflection operator annihilates specularly symmetric states
  EXPECT_LT(reflection_op(G, F.frame, hydro_vector(G, 1.0, u, 0.3)).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Knudsen, NormalFluxDatumLeavesMassResidual) {
  auto F = make_fixture();
  const auto& G = F.model.grid;
  Eigen::VectorXd vn = normal_speeds(G, F.frame);
  const cplx un(0.7, -0.2);
  VecC H = VecC::Zero(G.size());
  for (int q = 0; q < G.size(); ++q)
    if (vn(q) > 0) H(q) = 2.0 * vn(q) * un;
  SolvabilityResidual r = solvability_residual(G, F.frame, H, {});
  EXPECT_LT(std::abs(r.mass - un), 1e-13);
  EXPECT_LT(std::abs(r.tangential[0]), 1e-13);
}

TEST(Knudsen, RoundOneDatumIsSolvable) {
  for (auto spec : {CollisionSpec{}, multirate()})
    for (double chi : {0.4, 1.0, 2.5}) {
      auto F = make_fixture(spec, 12, chi);
      VecC dz_u(2);
      dz_u << 0, cplx(0.3, 1.1);
      const cplx dz_th(-0.6, 0.25);
      SolvabilityResidual r = solvability_residual(F.model.grid, F.frame, round1_datum(F.ctx, dz_u, dz_th), {});
      EXPECT_LT(r.max_abs(), 1e-10) << chi;
      // literal form leaves (1 - 1/(chi sqrt(2pi))) of the flux behind
      SolvabilityResidual rl =
          solvability_residual(F.model.grid, F.frame, round1_datum(F.ctx, dz_u, dz_th, true), {});
      const double miss = 1.0 - 1.0 / (chi * sqrt2pi());
      EXPECT_LT(std::abs(rl.tangential[0] - F.ctx.tc.nu * dz_u(1) * miss), 1e-10);
      EXPECT_LT(std::abs(rl.energy - 4.0 * F.ctx.tc.kappa * dz_th * miss), 1e-10);
    }
}

TEST(Knudsen, DirectAndClosedConditionsAgree) {
  std::mt19937 rng(7);
  for (auto spec : {CollisionSpec{}, multirate()}) {
    auto F = make_fixture(spec, 12, 0.9, Eigen::Vector2d(0, 1));
    const auto& G = F.model.grid;
    const int N = G.size();
    for (int trial = 0; trial < 10; ++trial) {
      GForm g = GForm::zero(2, N);
      g.rho = random_vec(rng, 1)(0);
      g.theta = random_vec(rng, 1)(0);
      g.u = random_vec(rng, 2);
      g.dz_u = random_vec(rng, 2);
      g.dz_theta = random_vec(rng, 1)(0);
      g.Mb = Eigen::MatrixXcd::Zero(2, 2);
      g.Mb.col(0) = random_vec(rng, 2);
      g.Mb.col(1) = random_vec(rng, 2);
      g.grad_u_int.col(0) = random_vec(rng, 2);
      g.grad_u_int.col(1) = random_vec(rng, 2);
      g.tb = random_vec(rng, 2);
      g.grad_theta_int = random_vec(rng, 2);
      VecC sg = random_vec(rng, N);
      g.S = sg - G.project_hydro(sg);
      FForm f = FForm::zero(2, N);
      f.rho = random_vec(rng, 1)(0);
      f.theta = random_vec(rng, 1)(0);
      f.u = random_vec(rng, 2);
      VecC sf = random_vec(rng, N);
      f.S = sf - G.project_hydro(sf);
      VectorEP S;
      VecC s1 = random_vec(rng, N);
      S.add_term(cplx(-1.3, 0.4), 0, s1);
      S.add_term(cplx(-0.8, -0.1), 1, VecC(0.3 * random_vec(rng, N)));
      FluidBoundaryConditions bc = fluid_boundary_conditions(F.ctx, g, f, S);
      const double scale = 1.0 + std::abs(bc.theta_closed) + bc.tangential_closed.cwiseAbs().maxCoeff();
      EXPECT_LT(bc.max_disagreement(), 1e-7 * scale) << trial;
    }
  }
}

TEST(Knudsen, TemperatureSlopeAlone) {
  auto F = make_fixture(multirate(), 12, 1.7);
  const int N = F.model.grid.size();
  GForm g = GForm::zero(2, N);
  g.dz_theta = cplx(0.4, -0.9);
  FluidBoundaryConditions bc = fluid_boundary_conditions(F.ctx, g, FForm::zero(2, N), {});
  const cplx expect = (4.0 / 3.0) * (F.ctx.tc.kappa / 1.7) * g.dz_theta;
  EXPECT_LT(std::abs(bc.theta_direct - expect), 1e-11);
  EXPECT_LT(std::abs(bc.tangential_direct(0)), 1e-11);
  EXPECT_LT(std::abs(bc.normal_direct), 1e-11);
}

TEST(Knudsen, StrainAlone) {
  auto F = make_fixture({}, 12, 0.6);
  const int N = F.model.grid.size();
  GForm g = GForm::zero(2, N);
  g.grad_u_int << cplx(0.2, 0.1), cplx(-0.5, 0.3), cplx(0.9, 0.0), cplx(0.1, -0.4);
  FluidBoundaryConditions bc = fluid_boundary_conditions(F.ctx, g, FForm::zero(2, N), {});
  // n = -e_x, tangent e_y; 2d(u) n . e_y = -(G(1,0) + G(0,1))
  const cplx strain = -(g.grad_u_int(1, 0) + g.grad_u_int(0, 1));
  EXPECT_LT(std::abs(bc.tangential_direct(0) + F.ctx.tc.nu / 0.6 * strain), 1e-11);
}

TEST(Knudsen, ZeroDataGivesZero) {
  auto F = make_fixture();
  HalfSpaceProblem P{&F.model, F.frame, VecC::Zero(F.model.grid.size()), {}};
  HalfSpaceSolution s = solve_halfspace(P);
  EXPECT_TRUE(s.converged);
  EXPECT_LE(s.iterations, 2);
  for (const auto& g : s.g) EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Knudsen, ExpansionBasisCount) {
  for (auto spec : {CollisionSpec{}, multirate()}) {
    auto F = make_fixture(spec, 8);
    HalfSpaceBasis b = make_halfspace_basis(F.model, F.frame);
    EXPECT_EQ(static_cast<int>(b.kappa.size()), b.expected_decaying);
  }
}

class KnudsenSolve : public ::testing::TestWithParam<int> {};

TEST_P(KnudsenSolve, SolvableDatumDecaysAndMatchesExpansion) {
  auto F = make_fixture(GetParam() ? multirate() : CollisionSpec{}, 10, 1.2);
  const auto& G = F.model.grid;
  VecC dz_u(2);
  dz_u << 0, cplx(0.5, -0.3);
  VecC H = round1_datum(F.ctx, dz_u, cplx(0.2, 0.7));
  // smooth decaying source in Null-perp so the solvability integrals stay zero
  std::mt19937 rng(3);
  VecC s = random_vec(rng, G.size());
  s -= G.project_hydro(s);
  VectorEP S;
  S.add_term(cplx(-0.9, 0.2), 0, VecC(0.2 * s));
  HalfSpaceProblem P{&F.model, F.frame, H, S};
  HalfSpaceSolution it = solve_halfspace(P);
  EXPECT_TRUE(it.converged);
  EXPECT_LT(it.solvability.max_abs(), 1e-10);
  EXPECT_TRUE(it.tail_decays) << it.decay_rate << " " << it.tail_ratio;
  EXPECT_LT(it.conservation_defect, 1e-8);

  HalfSpaceBasis b = make_halfspace_basis(F.model, F.frame);
  ExpansionSolution ex = solve_halfspace_expansion(F.model, b, H, S);
  EXPECT_LT(ex.bc_residual, 1e-9);
  // wall moments from both routes; the iterative one is cut off at xi_max, so
  // they can only agree to the size of the slowest mode there
  BoundaryMoments mi = wall_moments(G, it.g[0]), me = wall_moments(G, ex.g.eval(0.0));
  EXPECT_LT(ex.slowest_rate, 0.0);
  const double cut = H.cwiseAbs().maxCoeff() * std::exp(ex.slowest_rate * HalfSpaceOptions{}.xi_max);
  EXPECT_LT(std::abs(mi.rho - me.rho), cut);
  EXPECT_LT(std::abs(mi.theta - me.theta), cut);
  EXPECT_LT((mi.u - me.u).cwiseAbs().maxCoeff(), cut);
  // conserved fluxes carry nothing out of the layer
  EXPECT_LT(std::abs(it.tail_mass_flux), 1e-6);
  EXPECT_LT(std::abs(it.tail_energy_flux), 1e-6);
}

TEST(Knudsen, NestedGridRefinement) {
  auto F = make_fixture({}, 10, 0.7);
  VecC dz_u(2);
  dz_u << 0, cplx(-0.8, 0.2);
  VecC H = round1_datum(F.ctx, dz_u, cplx(0.5, 0.1));
  HalfSpaceOptions coarse, fine;
  fine.cells = 2 * coarse.cells;
  fine.stretch = std::sqrt(coarse.stretch);  // every coarse node is a fine node
  HalfSpaceProblem P{&F.model, F.frame, H, {}};
  HalfSpaceSolution a = solve_halfspace(P, coarse), b = solve_halfspace(P, fine);
  EXPECT_NEAR(a.xi[10], b.xi[20], 1e-12);
  const auto& G = F.model.grid;
  BoundaryMoments ma = wall_moments(G, a.g[0]), mb = wall_moments(G, b.g[0]);
  EXPECT_LT(std::abs(ma.rho - mb.rho), 1e-5);
  EXPECT_LT(std::abs(ma.theta - mb.theta), 1e-5);
  EXPECT_LT((ma.u - mb.u).cwiseAbs().maxCoeff(), 1e-5);
}

INSTANTIATE_TEST_SUITE_P(Collision, KnudsenSolve, ::testing::Values(0, 1));

TEST(Knudsen, UnsolvableMassFluxShowsUpInTail) {
  auto F = make_fixture({}, 10, 1.0);
  const auto& G = F.model.grid;
  Eigen::VectorXd vn = normal_speeds(G, F.frame);
  VecC H = VecC::Zero(G.size());
  for (int q = 0; q < G.size(); ++q)
    if (vn(q) > 0) H(q) = 2.0 * vn(q);
  HalfSpaceProblem P{&F.model, F.frame, H, {}};
  HalfSpaceSolution s = solve_halfspace(P);
  EXPECT_TRUE(s.converged);
  EXPECT_FALSE(s.tail_decays);
  EXPECT_GT(s.tail_ratio, 0.5);
  EXPECT_NEAR(std::abs(s.solvability.mass), 1.0, 1e-12);
  EXPECT_LT(std::abs(s.tail_mass_flux - s.solvability.mass), 0.05 * std::abs(s.solvability.mass));
  std::ostringstream os;
  write_knudsen_csv(os, s, "unit_flux");
  EXPECT_EQ(os.str().rfind("solve,xi,norm", 0), 0u);
}

TEST(Knudsen, RejectsBadInput) {
  auto F = make_fixture();
  EXPECT_THROW(make_boundary_context(F.model, F.frame, -1.0), std::invalid_argument);
  HalfSpaceOptions o;
  o.cells = 1;
  EXPECT_THROW(make_xi_grid(o), std::invalid_argument);
  HalfSpaceProblem P{nullptr, F.frame, VecC::Zero(1), {}};
  EXPECT_THROW(solve_halfspace(P), std::invalid_argument);
  auto Fz = make_fixture({}, 12, 0.0);
  const int N = Fz.model.grid.size();
  EXPECT_THROW(fluid_boundary_conditions(Fz.ctx, GForm::zero(2, N), FForm::zero(2, N), {}), std::invalid_argument);
}
