#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "kdamp/slab_sim.hpp"

using namespace kdamp;

namespace {

SimConfig small_config(double eps = 0.04, double chi = 1.0, int Nx = 100) {
  SimConfig c;
  c.eps = eps;
  c.chi = chi;
  c.Nx = Nx;
  c.Q = 8;
  return c;
}

double sigma_extrapolated(SimConfig c) {
  const double coarse = run_and_fit(c).fit.sigma;
  c.Nx *= 2;
  const double fine = run_and_fit(c).fit.sigma;
  return 2 * fine - coarse;  // first-order upwind error
}

}  // namespace

TEST(SlabSim, RejectsBadConfig) {
  SimConfig c = small_config();
  c.eps = 0.5;  // accommodation above one
  EXPECT_THROW(SlabSimulator{c}, std::invalid_argument);
  c = small_config();
  c.Nx = 2;
  EXPECT_THROW(SlabSimulator{c}, std::invalid_argument);
  c = small_config();
  c.D = 3;
  EXPECT_THROW(SlabSimulator{c}, std::invalid_argument);
  c = small_config();
  c.chi = -1;
  EXPECT_THROW(SlabSimulator{c}, std::invalid_argument);
  c = small_config();
  SlabSimulator s(c);
  c.dt = 2 * s.dt_max();
  EXPECT_THROW(run_and_fit(c), std::invalid_argument);
  EXPECT_THROW(parse_sim_init("sine"), std::invalid_argument);
}

TEST(SlabSim, AccommodationFormula) {
  SimConfig c = small_config(0.01, 1.0);
  EXPECT_NEAR(c.alpha(), std::sqrt(2 * std::numbers::pi) * 0.1, 1e-15);
  c.chi = 0;
  EXPECT_EQ(c.alpha(), 0.0);
}

TEST(SlabSim, RelaxationKeepsUniformMaxwellian) {
  SlabSimulator s(small_config());
  const auto& G = s.model().grid;
  Eigen::VectorXcd u(2);
  u << 0.3, -0.2;
  const Eigen::VectorXcd m = G.maxwellian(cplx(0.7), u, cplx(0.1, 0.4));
  KineticField f = s.zero_field();
  for (int i = 0; i < s.cells(); ++i) f.g.col(i) = m;
  const Eigen::MatrixXcd before = f.g;
  s.relax(f, 0.3);
  EXPECT_LT((f.g - before).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(SlabSim, RelaxationDecaysKineticPartExactly) {
  SimConfig c = small_config();
  SlabSimulator s(c);
  const auto& G = s.model().grid;
  std::mt19937 rng(7);
  std::normal_distribution<double> nd;
  KineticField f = s.zero_field();
  for (int i = 0; i < s.cells(); ++i) {
    Eigen::VectorXcd v(G.size());
    for (int q = 0; q < G.size(); ++q) v(q) = cplx(nd(rng), nd(rng));
    f.g.col(i) = v - G.project_hydro(v);
  }
  const double E0 = s.entropy(f), dt = 1e-3;
  s.relax(f, dt);
  const double decay = std::exp(-dt / (c.eps * c.eps));
  EXPECT_NEAR(s.entropy(f) / E0, decay * decay, 1e-12);
}

TEST(SlabSim, TransportFollowsCharacteristics) {
  SimConfig c = small_config(0.04, 1.0, 400);
  SlabSimulator s(c);
  const auto& G = s.model().grid;
  auto profile = [](double x) { return std::sin(2 * std::numbers::pi * x); };
  KineticField f = s.zero_field();
  for (int i = 0; i < s.cells(); ++i) f.g.col(i).setConstant(profile(s.x(i)));
  const double dt = s.dt_max(), dx = s.dx();
  s.transport(f, dt);
  const double g2 = 4 * std::numbers::pi * std::numbers::pi;  // max |profile''|
  for (int q = 0; q < G.size(); ++q) {
    const double cq = std::abs(dt * G.V(q, 0) / (c.eps * dx));
    // leading modified-equation term plus twice the third-order one
    const double bound = 0.5 * cq * (1 - cq) * dx * dx * g2 + cq * std::pow(dx * 2 * std::numbers::pi, 3) / 3;
    for (int i = 2; i < s.cells() - 2; ++i) {
      const double exact = profile(s.x(i) - G.V(q, 0) * dt / c.eps);
      EXPECT_LE(std::abs(f.g(q, i) - exact), bound) << "q " << q << " i " << i;
    }
  }
}

TEST(SlabSim, WallMapsConstantToConstant) {
  for (double chi : {0.0, 1.0, 1.9}) {
    SlabSimulator s(small_config(0.04, chi));
    for (int side : {0, 1}) {
      Eigen::VectorXcd trace = Eigen::VectorXcd::Constant(s.model().grid.size(), cplx(1.3, -0.4)), in;
      s.wall(side).apply(trace, in);
      EXPECT_LT((in.array() - cplx(1.3, -0.4)).abs().maxCoeff(), 1e-14);
    }
  }
}

TEST(SlabSim, WallHasZeroMassFluxAndContracts) {
  std::mt19937 rng(11);
  std::normal_distribution<double> nd;
  for (double chi : {0.0, 0.5, 1.0, 1.9}) {
    SlabSimulator s(small_config(0.04, chi));
    const int N = s.model().grid.size();
    for (int side : {0, 1}) {
      const SlabWallBC& b = s.wall(side);
      for (int rep = 0; rep < 20; ++rep) {
        Eigen::VectorXcd trace(N), in;
        for (int q = 0; q < N; ++q) trace(q) = cplx(nd(rng), nd(rng));
        b.apply(trace, in);
        cplx fo = 0, fi = 0;
        double eo = 0, ei = 0;
        for (size_t j = 0; j < b.out.size(); ++j) {
          fo += b.wvn_out(j) * trace(b.out[j]);
          eo += b.wvn_out(j) * std::norm(trace(b.out[j]));
        }
        for (size_t j = 0; j < b.in.size(); ++j) {
          fi += b.wvn_in(j) * in(j);
          ei += b.wvn_in(j) * std::norm(in(j));
        }
        EXPECT_LT(std::abs(fi - fo), 1e-12);
        EXPECT_LE(ei, eo * (1 + 1e-13));
        if (chi == 0) EXPECT_NEAR(ei, eo, 1e-12 * eo);
      }
    }
  }
}

TEST(SlabSim, DiscreteDiffuseNormalizationMatchesHalfRangeAverage) {
  SlabSimulator s(small_config());
  const auto& G = s.model().grid;
  Eigen::VectorXd n(2);
  n << -1, 0;
  // half-range rule integrates |v_x| exactly, so sqrt(2 pi) sum_in w |v_x| = 1
  EXPECT_NEAR(std::sqrt(2 * std::numbers::pi) * s.wall(0).flux_norm, 1.0, 1e-13);
  Eigen::VectorXcd g = G.V.col(0).cast<cplx>().array().square() + cplx(0.5);
  cplx out_flux = 0;
  for (size_t j = 0; j < s.wall(0).out.size(); ++j) out_flux += s.wall(0).wvn_out(j) * g(s.wall(0).out[j]);
  EXPECT_NEAR(std::abs(out_flux / s.wall(0).flux_norm - G.half_boundary_average(n, g, +1)), 0.0, 1e-13);
}

TEST(SlabSim, InitialAmplitudes) {
  SimConfig c = small_config(0.01, 1.0, 200);
  SlabSimulator s(c);
  const SlabEigenpair a = simulator_eigenpair(c);
  const Eigen::MatrixXcd h = sample_ansatz(s, a, c.eps, 2, false);
  c.init = SimInit::Zero;
  EXPECT_EQ(mode_amplitude(s, init_state(SlabSimulator(c), a), h), cplx(0));
  c.init = SimInit::Mode;
  EXPECT_NEAR(std::abs(mode_amplitude(s, init_state(SlabSimulator(c), a), h) - 1.0), 0.0, 1e-2);
  c.init = SimInit::Ansatz;
  const cplx b = mode_amplitude(s, init_state(SlabSimulator(c), a), h);
  EXPECT_NEAR(std::abs(b - 1.0), 0.0, 2 * std::pow(c.eps, 0.25));
}

TEST(SlabSim, FitRecoversSyntheticSignal) {
  std::vector<double> t;
  std::vector<cplx> b;
  for (int j = 0; j < 200; ++j) {
    t.push_back(0.01 * j);
    b.push_back(2.0 * std::exp(cplx(-3.0, -40.0) * t.back()));
  }
  DecayFit f = fit_decay(t, b);
  EXPECT_NEAR(f.sigma, -3.0, 1e-10);
  EXPECT_NEAR(f.omega, 40.0, 1e-9);
  EXPECT_NEAR(f.A, 2.0, 1e-10);
  EXPECT_GT(f.r2, 0.999999);
  EXPECT_FALSE(f.inconclusive);

  std::mt19937 rng(3);
  std::uniform_real_distribution<double> ud(0.1, 1.0);
  for (auto& z : b) z = ud(rng) * std::polar(1.0, ud(rng));
  EXPECT_TRUE(fit_decay(t, b).inconclusive);
}

TEST(SlabSim, ConservationOverRuns) {
  for (double chi : {0.0, 1.0}) {
    SimConfig c = small_config(0.04, chi, 80);
    c.min_periods = 4;
    const SimResult r = run_and_fit(c);
    EXPECT_LT(r.diag.mass_drift, 1e-10);
    EXPECT_LE(r.diag.entropy_increase, 0.0);
    EXPECT_LT(r.diag.wall_mass_flux, 1e-12);
    EXPECT_LE(r.diag.wall_entropy_balance, 1e-12);
    if (chi == 0) EXPECT_LT(r.diag.wall_entropy_defect, 1e-12);
    for (size_t j = 1; j < r.E.size(); ++j) EXPECT_LE(r.E[j], r.E[j - 1]);
  }
}

TEST(SlabSim, MassConservedForNonzeroMean) {
  SimConfig c = small_config(0.04, 1.0, 60);
  SlabSimulator s(c);
  KineticField f = s.zero_field();
  const auto& G = s.model().grid;
  for (int i = 0; i < s.cells(); ++i)
    for (int q = 0; q < G.size(); ++q) f.g(q, i) = 1.0 + std::cos(3 * s.x(i)) * G.V(q, 0) + 0.2 * G.v2(q) * s.x(i);
  const cplx m0 = s.mass(f);
  double E = s.entropy(f);
  for (int n = 0; n < 500; ++n) {
    strang_step(s, f, s.dt_max());
    const double En = s.entropy(f);
    EXPECT_LE(En, E);
    E = En;
  }
  EXPECT_LT(std::abs(s.mass(f) - m0), 1e-10 * std::abs(m0));
}

TEST(SlabSim, DampingMatchesEigenvalueExpansion) {
  // refinement removes the upwind error; the O(1) eigenvalue correction is part of the target
  SimConfig c = small_config(0.04, 1.0, 100);
  const SimResult r = run_and_fit(c);
  EXPECT_FALSE(r.fit.inconclusive);
  EXPECT_LT(r.fit.sigma, 0);
  EXPECT_NEAR(r.fit.omega / r.omega_pred, 1.0, 0.03);
  EXPECT_NEAR(r.fit.omega * c.eps / r.lambda0, 1.0, 0.05);
  const double s = sigma_extrapolated(c);
  EXPECT_NEAR(s / r.sigma_pred_next, 1.0, 0.1);
}

TEST(SlabSim, SpecularWallOnlyInteriorDissipation) {
  SimConfig c = small_config(0.04, 0.0, 50);
  const SimResult r = run_and_fit(c);
  EXPECT_EQ(r.sigma_pred, 0.0);
  EXPECT_NEAR(r.sigma_pred_next, -std::numbers::pi * std::numbers::pi, 1e-6);
  EXPECT_NEAR(sigma_extrapolated(c) / r.sigma_pred_next, 1.0, 0.05);
}

TEST(SlabSim, WritesTraceAndFit) {
  SimConfig c = small_config(0.04, 1.0, 40);
  c.min_periods = 3;
  const SimResult r = run_and_fit(c);
  const auto dir = std::filesystem::temp_directory_path() / "kdamp_sim_test";
  std::filesystem::create_directories(dir);
  write_trace_csv(r, (dir / "trace.csv").string());
  std::ifstream is(dir / "trace.csv");
  std::string header, line;
  std::getline(is, header);
  EXPECT_EQ(header, "t,re_b,im_b,abs_b,E");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, static_cast<int>(r.t.size()));
  const auto j = fit_json(r);
  EXPECT_EQ(j.at("config").at("Nx").get<int>(), 40);
  EXPECT_DOUBLE_EQ(j.at("sigma_fit").get<double>(), r.fit.sigma);
  std::filesystem::remove_all(dir);
}
