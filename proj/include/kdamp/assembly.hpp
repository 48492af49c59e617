#pragma once

// Two-scale approximate eigenfunctions.  Multiplicity handling works on any
// domain; the full two-round construction and its residuals are done on the
// slab, where every field is an exponential polynomial in one variable.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <future>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "acoustic.hpp"
#include "collision.hpp"
#include "domain.hpp"
#include "expoly.hpp"
#include "json.hpp"
#include "knudsen.hpp"
#include "neumann.hpp"
#include "quadrature.hpp"
#include "velocity.hpp"
#include "viscous_layer.hpp"

namespace kdamp {

// ------------------------------------------------------------- multiplicity

struct MultiplicityResult {
  std::vector<NeumannMode> group;
  int tau = 1;
  Eigen::MatrixXcd Q1, Q1_closed;  // c int Z1(U^k) Psi^l, and Lambda1 G_grad + Lambda2 G_psi
  double asymmetry = 0;
  Eigen::MatrixXd rotation;  // column j: rotated mode j in the group basis
  Eigen::MatrixXcd Q1_rotated;
  double offdiag = 0;
  bool collide = false;
  Eigen::MatrixXcd Q2_rotated;  // interior dissipation part only
  bool q2_boundary_part = false;
  double compat = 0;  // largest partner residual in the round-1 solves
  std::vector<cplx> il1;
};

namespace detail {

// orthogonal O diagonalizing a complex symmetric S = X + iY when X and Y commute
inline Eigen::MatrixXd common_rotation(const Eigen::MatrixXcd& S) {
  const Eigen::MatrixXd M = S.real() + 0.6180339887498949 * S.imag();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()));
  return es.eigenvectors();
}

inline bool signed_permutation(const Eigen::MatrixXd& O, double tol = 1e-12) {
  for (int j = 0; j < O.cols(); ++j) {
    int big = 0;
    for (int i = 0; i < O.rows(); ++i) {
      const double a = std::abs(O(i, j));
      if (std::abs(a - 1.0) < tol) ++big;
      else if (a > tol) return false;
    }
    if (big != 1) return false;
  }
  return true;
}

inline double offdiag_max(const Eigen::MatrixXcd& M) {
  double m = 0;
  for (int i = 0; i < M.rows(); ++i)
    for (int j = 0; j < M.cols(); ++j)
      if (i != j) m = std::max(m, std::abs(M(i, j)));
  return m;
}

}  // namespace detail

inline MultiplicityResult orthogonalize_multiplicity(const Domain& dom, const std::vector<NeumannMode>& group, int tau,
                                                     const LayerParams& p, int boundary_order = 64,
                                                     double collide_tol = 1e-8) {
  if (group.empty()) throw std::invalid_argument("orthogonalize_multiplicity: empty group");
  for (const auto& m : group)
    if (std::abs(m.lambda0 - group.front().lambda0) > 1e-9 * group.front().lambda0)
      throw std::invalid_argument("orthogonalize_multiplicity: modes do not share an eigenvalue");
  const int K = static_cast<int>(group.size()), D = p.D;
  const double c = std::sqrt((D + 2.0) / (2.0 * D));
  MultiplicityResult r;
  r.group = group;
  r.tau = tau;
  r.Q1 = Eigen::MatrixXcd::Zero(K, K);
  Eigen::MatrixXd G1 = Eigen::MatrixXd::Zero(K, K), G2 = Eigen::MatrixXd::Zero(K, K);
  const double lam = group.front().lambda0;
  for (const auto& q : dom.boundary_quadrature(boundary_order)) {
    std::vector<ModeValue> v(K);
    std::vector<cplx> z(K);
    for (int k = 0; k < K; ++k) {
      v[k] = evaluate_mode(group[k], q.p.x);
      z[k] = normal_flux_Z1(group[k], tau, p, q.p);
    }
    for (int k = 0; k < K; ++k)
      for (int l = 0; l < K; ++l) {
        r.Q1(k, l) += q.w * c * z[k] * v[l].psi;
        G1(k, l) += q.w * tangential_gradient(v[k].grad, q.p).dot(tangential_gradient(v[l].grad, q.p));
        G2(k, l) += q.w * (2.0 / (D + 2.0)) * lam * lam * v[k].psi * v[l].psi;
      }
  }
  const DampingCoefficient dc = damping_coefficient(dom, group.front(), tau, p, boundary_order);
  r.Q1_closed = dc.Lambda1 * G1.cast<cplx>() + dc.Lambda2 * G2.cast<cplx>();
  r.asymmetry = (r.Q1 - r.Q1.transpose()).cwiseAbs().maxCoeff();
  const Eigen::MatrixXcd S = 0.5 * (r.Q1 + r.Q1.transpose());
  r.rotation = K > 1 ? detail::common_rotation(S) : Eigen::MatrixXd::Identity(1, 1);
  r.Q1_rotated = r.rotation.transpose().cast<cplx>() * S * r.rotation.cast<cplx>();
  r.offdiag = detail::offdiag_max(r.Q1_rotated);

  // interior dissipation <D U^k, U^l>; for eigenmodes D U = (0, -nu(2-2/D) mu u, -(D+2)/D kappa mu theta)
  auto nodes = dom.interior_quadrature(40);
  Eigen::MatrixXcd Q2 = Eigen::MatrixXcd::Zero(K, K);
  const double mu = group.front().mu;
  for (const auto& nd : nodes)
    for (int k = 0; k < K; ++k) {
      FluidPoint a = make_eigenpair(group[k], tau, D).at(nd.x);
      FluidPoint Da;
      Da.u = -p.nu * (2.0 - 2.0 / D) * mu * a.u;
      Da.theta = -(D + 2.0) / D * p.kappa * mu * a.theta;
      for (int l = 0; l < K; ++l) Q2(k, l) += nd.w * h_density(Da, make_eigenpair(group[l], tau, D).at(nd.x), D);
    }
  r.Q2_rotated = r.rotation.transpose().cast<cplx>() * Q2 * r.rotation.cast<cplx>();

  for (int i = 0; i < K; ++i)
    for (int j = i + 1; j < K; ++j)
      if (std::abs(r.Q1_rotated(i, i) - r.Q1_rotated(j, j)) < collide_tol * (1 + std::abs(r.Q1_rotated(i, i))))
        r.collide = true;
  if (r.collide && K > 1) {
    // rotate once more inside the collided space by Q2; pieces Q2 cannot split stay as they are
    Eigen::MatrixXd O2 = detail::common_rotation(0.5 * (r.Q2_rotated + r.Q2_rotated.transpose()));
    if (detail::offdiag_max(O2.transpose().cast<cplx>() * r.Q1_rotated * O2.cast<cplx>()) < 1e-9 &&
        detail::offdiag_max(r.Q2_rotated) > 1e-12) {
      r.rotation = r.rotation * O2;
      r.Q1_rotated = O2.transpose().cast<cplx>() * r.Q1_rotated * O2.cast<cplx>();
      r.Q2_rotated = O2.transpose().cast<cplx>() * r.Q2_rotated * O2.cast<cplx>();
      r.offdiag = detail::offdiag_max(r.Q1_rotated);
    }
  }
  for (int k = 0; k < K; ++k) r.il1.push_back(r.Q1_rotated(k, k));

  // round-1 solves: u1.n = Z1 with no interior forcing
  if (detail::signed_permutation(r.rotation)) {
    FluidState F(D, nodes);
    for (int k = 0; k < K; ++k) {
      const NeumannMode mk = group[k];
      BoundaryField g = [&, mk](const BoundaryPoint& b) { return normal_flux_Z1(mk, tau, p, b); };
      ShiftedSolveOptions so;
      so.boundary_order = boundary_order;
      ShiftedSolution s = solve_shifted_acoustic(dom, group, k, tau, F, g, so);
      // residuals refer to the unrotated partners; a signed permutation maps them onto the rotated ones
      r.compat = std::max(r.compat, s.max_compat());
    }
  } else {
    r.compat = r.offdiag;
  }
  return r;
}

// ------------------------------------------------------------- slab fields

// rho(x), u(x) (normal component), theta(x) on [0,1]
struct SlabFluid {
  ScalarEP rho, u, theta;
  SlabFluid& operator+=(const SlabFluid& o) {
    rho += o.rho;
    u += o.u;
    theta += o.theta;
    return *this;
  }
  friend SlabFluid operator+(SlabFluid a, const SlabFluid& b) { return a += b; }
  friend SlabFluid operator*(cplx s, SlabFluid a) {
    a.rho = s * a.rho;
    a.u = s * a.u;
    a.theta = s * a.theta;
    return a;
  }
};

inline cplx slab_inner(const SlabFluid& a, const SlabFluid& b, int D) {
  ScalarEP d = a.rho * conj(b.rho) + a.u * conj(b.u) + (0.5 * D) * (a.theta * conj(b.theta));
  return integrate(d, 0.0, 1.0);
}

inline ScalarEP slab_cosine(const NeumannMode& m) {
  const double q = m.n * std::numbers::pi;
  ScalarEP f;
  f.add_term(cplx(0, q), 0, 0.5 * m.norm);
  f.add_term(cplx(0, -q), 0, 0.5 * m.norm);
  return f;
}

inline SlabFluid slab_eigenpair(const NeumannMode& m, int tau, int D) {
  if (m.kind != DomainKind::Slab) throw std::invalid_argument("slab_eigenpair: not a slab mode");
  const double c = std::sqrt((D + 2.0) / (2.0 * D));
  const cplx il = I1 * double(tau) * m.lambda0;
  const ScalarEP psi = slab_cosine(m);
  SlabFluid U;
  U.rho = cplx(c * D / (D + 2.0)) * psi;
  U.u = (c / il) * psi.deriv();
  U.theta = cplx(c * 2.0 / (D + 2.0)) * psi;
  return U;
}

struct SlabShifted {
  cplx imu = 0;
  SlabFluid V;
};

// (A - il0) V = imu U0 + F on [0,1], u.n = gL at x=0 and gR at x=1, <V,U0> = 0.
// The normal velocity obeys a u'' + lambda0^2 u = il0 f_u + (f_rho + f_theta)'.
inline SlabShifted solve_slab_shifted(const SlabFluid& U0, cplx il0, int D, const SlabFluid& F, cplx gL, cplx gR) {
  const double a = (D + 2.0) / D;
  const double lam2 = std::norm(il0);
  const double om = std::sqrt(lam2 / a);
  auto rhs = [&](const SlabFluid& X) { return il0 * X.u + (X.rho + X.theta).deriv(); };
  const ScalarEP uF = solve_second_order(a, il0 * il0, rhs(F));
  const ScalarEP uU = solve_second_order(a, il0 * il0, rhs(U0));
  auto val = [](const ScalarEP& f, double x) { return f.eval_or(x, cplx(0.0)); };
  const double cw = std::cos(om);
  if (std::abs(std::sin(om)) > 1e-9) throw std::invalid_argument("solve_slab_shifted: frequency is not a slab eigenvalue");
  const cplx denom = val(uU, 1.0) - val(uU, 0.0) * cw;
  if (std::abs(denom) < 1e-12) throw std::runtime_error("solve_slab_shifted: degenerate compatibility");
  SlabShifted s;
  s.imu = (gR - val(uF, 1.0) + (gL + val(uF, 0.0)) * cw) / denom;
  const cplx C1 = -gL - val(uF, 0.0) - s.imu * val(uU, 0.0);
  ScalarEP u = uF + s.imu * uU;
  u.add_term(cplx(0, om), 0, 0.5 * C1);
  u.add_term(cplx(0, -om), 0, 0.5 * C1);
  const ScalarEP du = u.deriv();
  s.V.u = u;
  s.V.rho = (1.0 / il0) * (du - F.rho - s.imu * U0.rho);
  s.V.theta = (1.0 / il0) * (cplx(2.0 / D) * du - F.theta - s.imu * U0.theta);
  const cplx proj = slab_inner(s.V, U0, D) / slab_inner(U0, U0, D);
  s.V += (-proj) * U0;
  s.V.rho.prune(0.0);
  s.V.u.prune(0.0);
  s.V.theta.prune(0.0);
  return s;
}

// max over sample points of |(A - il0) V - imu U0 - F|
inline double slab_shifted_residual(const SlabShifted& s, const SlabFluid& U0, cplx il0, int D, const SlabFluid& F) {
  double m = 0;
  auto v = [](const ScalarEP& f, double x) { return f.eval_or(x, cplx(0.0)); };
  const ScalarEP du = s.V.u.deriv(), ds = (s.V.rho + s.V.theta).deriv();
  for (int i = 0; i <= 50; ++i) {
    const double x = i / 50.0;
    m = std::max(m, std::abs(v(du, x) - il0 * v(s.V.rho, x) - s.imu * v(U0.rho, x) - v(F.rho, x)));
    m = std::max(m, std::abs(v(ds, x) - il0 * v(s.V.u, x) - s.imu * v(U0.u, x) - v(F.u, x)));
    m = std::max(m, std::abs(2.0 / D * v(du, x) - il0 * v(s.V.theta, x) - s.imu * v(U0.theta, x) - v(F.theta, x)));
  }
  return m;
}

// ------------------------------------------------------------- slab assembly

enum class LayerCutoff { Bump, None };

inline std::string to_string(LayerCutoff c) { return c == LayerCutoff::Bump ? "bump" : "none"; }
inline LayerCutoff parse_layer_cutoff(const std::string& s) {
  if (s == "bump") return LayerCutoff::Bump;
  if (s == "none") return LayerCutoff::None;
  throw std::invalid_argument("unknown cutoff '" + s + "'");
}

struct AssemblyOptions {
  CollisionSpec collision;
  int velocity_points = 10;  // half-range rule per axis
  double chi = 1.0;
  int mode = 1;  // 1-based
  int tau = 1;
  int order = 2;
  LayerCutoff cutoff = LayerCutoff::Bump;
};

struct SlabWall {
  double x = 0;  // wall position
  double s = 1;  // e_x . grad d
  WallFrame frame;
  ScalarEP theta0, w1, theta1, w2, Y2;
  VectorEP layer[3], knudsen[3];  // knudsen[0] unused
  VectorEP layer_d[3], knudsen_d[3];
  cplx Z1 = 0, Z2 = 0;
  double robin_beta = 0;
  cplx robin_datum = 0;
  SolvabilityResidual solv1, solv2;
  double bc1 = 0, bc2 = 0, slowest_rate = 0;
};

struct SlabEigenpair {
  int D = 2;
  NeumannMode mode;
  int tau = 1;
  double chi = 1;
  int order = 2;
  LayerCutoff cutoff = LayerCutoff::Bump;
  std::shared_ptr<const CollisionModel> model;
  TransportCoefficients tc;
  cplx il[3] = {0, 0, 0};
  SlabFluid U[3];
  VectorEP interior[3], interior_d[3];
  SlabWall wall[2];
  // cross-checks
  cplx il1_green = 0, il1_closed = 0, il2_green = 0, dissipation = 0;
  double orth1 = 0, orth2 = 0;
  double leak = 0;           // hydrodynamic content of the kinetic corrections
  double ode_residual = 0;   // interior shifted solves
};

namespace detail {

struct SlabVectors {
  VecC one, vx, h, Axx, Bx, Phi2;
};

inline VectorEP kinetic_of(const SlabFluid& U, const SlabVectors& b) {
  return outer(U.rho, b.one) + outer(U.u, b.vx) + outer(U.theta, b.h);
}

// grad u : Ahat + grad theta . Bhat
inline VectorEP first_correction(const SlabFluid& U, const SlabVectors& b) {
  return outer(U.u.deriv(), b.Axx) + outer(U.theta.deriv(), b.Bx);
}

inline SlabFluid fluid_of_ep(const VelocityGrid& G, const VectorEP& g) {
  SlabFluid F;
  for (const auto& t : g.terms) {
    VecC m = G.fluid_moments(t.c);
    F.rho.add_term(t.alpha, t.p, m(0));
    F.u.add_term(t.alpha, t.p, m(1));
    F.theta.add_term(t.alpha, t.p, m(G.D + 1));
  }
  return F;
}

inline VecC ev(const VectorEP& f, double s, int N) { return f.eval_or(s, VecC::Zero(N)); }
inline cplx ev(const ScalarEP& f, double s) { return f.eval_or(s, cplx(0.0)); }

}  // namespace detail

inline SlabEigenpair build_slab_eigenpair(const AssemblyOptions& o) {
  if (o.order < 0 || o.order > 2) throw std::invalid_argument("order must be 0, 1 or 2");
  if (!(o.chi > 0)) throw std::invalid_argument("assembly needs chi > 0");
  if (o.tau != 1 && o.tau != -1) throw std::invalid_argument("tau must be +1 or -1");
  if (o.mode < 1) throw std::invalid_argument("mode index is 1-based");
  const int D = 2;
  SlabEigenpair a;
  a.D = D;
  a.tau = o.tau;
  a.chi = o.chi;
  a.order = o.order;
  a.cutoff = o.cutoff;
  auto model = std::make_shared<CollisionModel>(
      make_collision(make_velocity_grid(D, o.velocity_points, VelocityRule::HalfRange), o.collision));
  a.model = model;
  const CollisionModel& M = *model;
  const VelocityGrid& G = M.grid;
  const int N = G.size();
  a.tc = transport_coefficients(M);
  const HatFunctions hats = hat_functions(M);

  DomainSpec ds;
  ds.kind = DomainKind::Slab;
  ds.D = D;
  const Domain dom = make_domain(ds);
  a.mode = compute_modes(dom, o.mode).at(o.mode - 1);
  const double lam0 = a.mode.lambda0;
  const cplx il0 = I1 * double(o.tau) * lam0;
  const double c = std::sqrt((D + 2.0) / (2.0 * D));
  a.il[0] = il0;

  detail::SlabVectors b;
  b.one = VecC::Ones(N);
  b.vx = G.V.col(0).cast<cplx>();
  b.h = (0.5 * G.v2.array() - 0.5 * D).matrix().cast<cplx>();
  b.Axx = hats.Ahat[0].cast<cplx>();
  b.Bx = hats.Bhat[0].cast<cplx>();
  {
    VecC f = b.vx.cwiseProduct(b.Bx);
    f -= G.project_hydro(f);
    b.Phi2 = M.pseudo_inverse(f);
  }
  for (const VecC* k : {&b.Axx, &b.Bx, &b.Phi2})
    a.leak = std::max(a.leak, G.project_hydro(*k).cwiseAbs().maxCoeff());

  const LayerParams lp{a.tc.nu, a.tc.kappa, o.chi, D};
  a.U[0] = slab_eigenpair(a.mode, o.tau, D);
  const SlabFluid& U0 = a.U[0];
  const VectorEP kin0 = detail::kinetic_of(U0, b);
  const VectorEP I2U0 = detail::first_correction(U0, b);
  const ScalarEP psi = slab_cosine(a.mode);

  // round 1: thermal layer, normal flux, interior correction
  for (int w = 0; w < 2; ++w) {
    SlabWall& W = a.wall[w];
    W.x = w == 0 ? 0.0 : 1.0;
    W.s = w == 0 ? 1.0 : -1.0;
    W.frame = make_wall_frame(Eigen::Vector2d(-W.s, 0.0));
    W.theta0 = temperature_profile(detail::ev(U0.theta, W.x), lam0, o.tau, lp).f;
    W.w1 = (-il0 * W.theta0).tail_integral();
    W.Z1 = detail::ev(W.w1, 0.0);
  }
  SlabShifted s1 = solve_slab_shifted(U0, il0, D, SlabFluid{}, a.wall[0].Z1, a.wall[1].Z1);
  a.ode_residual = slab_shifted_residual(s1, U0, il0, D, SlabFluid{});
  a.il[1] = s1.imu;
  a.U[1] = s1.V;
  a.orth1 = std::abs(slab_inner(a.U[1], U0, D));
  for (const auto& W : a.wall) a.il1_green += c * W.Z1 * detail::ev(psi, W.x);
  a.il1_closed = damping_coefficient(dom, a.mode, o.tau, lp).il1;
  const VectorEP kin1 = detail::kinetic_of(a.U[1], b);

  std::vector<HalfSpaceBasis> basis;
  for (int w = 0; w < 2; ++w) {
    SlabWall& W = a.wall[w];
    basis.push_back(make_halfspace_basis(M, W.frame));
    W.layer[0] = outer(W.theta0, VecC(b.h - b.one));
    const VectorEP base1 = outer(W.w1, VecC(W.s * b.vx)) + outer(W.theta0.deriv(), VecC(W.s * b.Bx));
    W.layer[1] = base1;
    const VecC g1 = detail::ev(kin1, W.x, N) + detail::ev(base1, 0.0, N);
    const VecC f0 = detail::ev(kin0, W.x, N) + detail::ev(W.layer[0], 0.0, N);
    const VecC H1 = -reflection_op(G, W.frame, g1) + diffuse_op(G, W.frame, f0, o.chi);
    ExpansionSolution ex = solve_halfspace_expansion(M, basis[w], H1);
    W.knudsen[1] = ex.g;
    W.solv1 = ex.solvability;
    W.bc1 = ex.bc_residual;
    W.slowest_rate = ex.slowest_rate;
  }

  // round 2: temperature correction fixed by the energy condition, then normal fluxes
  const VecC mA = G.fluid_moments(VecC(b.vx.cwiseProduct(b.Axx)));
  const double ku = mA(1).real();  // nu (2 - 2/D)
  for (int w = 0; w < 2; ++w) {
    SlabWall& W = a.wall[w];
    const VecC mF = G.fluid_moments(VecC(W.s * b.vx.cwiseProduct(b.Phi2)));
    const cplx Frho = mF(0), Fue = W.s * mF(1), Fth = mF(D + 1);
    const ScalarEP d3 = W.theta0.deriv(3);
    const VecC Ff = detail::ev(kin1, W.x, N) + detail::ev(W.layer[1], 0.0, N) + detail::ev(W.knudsen[1], 0.0, N);
    const VecC Gg = detail::ev(I2U0, W.x, N) + detail::ev(W.w1.deriv(), 0.0) * b.Axx +
                    detail::ev(W.theta0.deriv(2), 0.0) * b.Phi2;
    auto energy = [&](const VecC& H) { return solvability_residual(G, W.frame, H, VectorEP{}).energy; };
    const cplx E0 = energy(-reflection_op(G, W.frame, Gg) + diffuse_op(G, W.frame, Ff, o.chi));
    const cplx Ea = energy(diffuse_op(G, W.frame, VecC(b.h - b.one), o.chi));
    const cplx Eb = energy(-reflection_op(G, W.frame, VecC(W.s * b.Bx)));
    W.robin_beta = (-Eb / Ea).real();
    W.robin_datum = -E0 / Ea;
    ScalarEP forcing = a.il[1] * W.theta0 + (2.0 / (D + 2.0) * Frho - D / (D + 2.0) * Fth) * d3;
    W.theta1 = solve_robin_layer(a.tc.kappa, il0, forcing, W.robin_beta, W.robin_datum).f;
    W.w2 = (-il0 * W.theta1 - a.il[1] * W.theta0 - Frho * d3).tail_integral();
    W.Y2 = (-1.0 * (cplx(ku) * W.w1.deriv(2) - il0 * W.w1 + Fue * d3)).tail_integral();
    W.Z2 = detail::ev(W.w2, 0.0);
    W.layer[1] += outer(W.theta1, VecC(b.h - b.one));
    W.layer[2] = outer(W.Y2, VecC(D / (D + 2.0) * b.one + 2.0 / (D + 2.0) * b.h)) + outer(W.w2, VecC(W.s * b.vx)) +
                 outer(W.w1.deriv(), b.Axx) + outer(W.theta1.deriv(), VecC(W.s * b.Bx)) +
                 outer(W.theta0.deriv(2), b.Phi2);
  }
  const SlabFluid FD = detail::fluid_of_ep(G, I2U0.deriv().map([&](const VecC& v) { return VecC(-b.vx.cwiseProduct(v)); }));
  const SlabFluid F2 = a.il[1] * a.U[1] + FD;
  SlabShifted s2 = solve_slab_shifted(U0, il0, D, F2, a.wall[0].Z2, a.wall[1].Z2);
  a.ode_residual = std::max(a.ode_residual, slab_shifted_residual(s2, U0, il0, D, F2));
  a.il[2] = s2.imu;
  a.U[2] = s2.V;
  a.orth2 = std::abs(slab_inner(a.U[2], U0, D));
  a.dissipation = -slab_inner(FD, U0, D);
  for (const auto& W : a.wall) a.il2_green += c * W.Z2 * detail::ev(psi, W.x);
  a.il2_green -= slab_inner(F2, U0, D);

  a.interior[0] = kin0;
  a.interior[1] = kin1;
  a.interior[2] = detail::kinetic_of(a.U[2], b) + I2U0;
  for (int w = 0; w < 2; ++w) {
    SlabWall& W = a.wall[w];
    const VecC g2 = detail::ev(a.interior[2], W.x, N) + detail::ev(W.layer[2], 0.0, N);
    const VecC f1 = detail::ev(a.interior[1], W.x, N) + detail::ev(W.layer[1], 0.0, N) + detail::ev(W.knudsen[1], 0.0, N);
    const VecC H2 = -reflection_op(G, W.frame, g2) + diffuse_op(G, W.frame, f1, o.chi);
    ExpansionSolution ex = solve_halfspace_expansion(M, basis[w], H2);
    W.knudsen[2] = ex.g;
    W.solv2 = ex.solvability;
    W.bc2 = ex.bc_residual;
  }
  for (int m = 0; m < 3; ++m) {
    a.interior_d[m] = a.interior[m].deriv();
    for (auto& W : a.wall) {
      W.layer_d[m] = W.layer[m].deriv();
      W.knudsen_d[m] = W.knudsen[m].deriv();
    }
  }
  return a;
}

// C^2 cutoff: 1 up to delta/2, 0 from delta on
inline void layer_cutoff(LayerCutoff kind, double d, double delta, double& chi, double& dchi) {
  chi = 1;
  dchi = 0;
  if (kind == LayerCutoff::None) return;
  const double h = 0.5 * delta;
  const double t = std::clamp((d - h) / h, 0.0, 1.0);
  chi = 1 - t * t * t * (10 - 15 * t + 6 * t * t);
  dchi = (t > 0 && t < 1) ? -30 * t * t * (1 - t) * (1 - t) / h : 0.0;
}

struct AnsatzValue {
  VecC g, gx;  // value and x-derivative over the velocity grid
};

inline AnsatzValue evaluate_ansatz(const SlabEigenpair& a, double eps, double x) {
  if (!(eps > 0)) throw std::invalid_argument("eps must be positive");
  if (x < -1e-14 || x > 1 + 1e-14) throw std::domain_error("x outside the slab");
  const int N = a.model->grid.size();
  AnsatzValue r{VecC::Zero(N), VecC::Zero(N)};
  const double se = std::sqrt(eps);
  for (int m = 0; m <= a.order; ++m) {
    const double wm = std::pow(se, m);
    r.g += wm * detail::ev(a.interior[m], x, N);
    r.gx += wm * detail::ev(a.interior_d[m], x, N);
    for (const auto& W : a.wall) {
      const double d = W.s * (x - W.x);
      double ch, dch;
      layer_cutoff(a.cutoff, d, 0.5, ch, dch);
      if (ch == 0 && dch == 0) continue;
      const double z = d / se, xi = d / eps;
      const VecC L = detail::ev(W.layer[m], z, N), Ld = detail::ev(W.layer_d[m], z, N);
      r.g += wm * ch * L;
      r.gx += wm * W.s * (dch * L + ch * Ld / se);
      if (m >= 1) {
        const VecC K = detail::ev(W.knudsen[m], xi, N), Kd = detail::ev(W.knudsen_d[m], xi, N);
        r.g += wm * ch * K;
        r.gx += wm * W.s * (dch * K + ch * Kd / eps);
      }
    }
  }
  return r;
}

inline cplx truncated_eigenvalue(const SlabEigenpair& a, double eps) {
  cplx il = 0;
  for (int m = 0; m <= a.order; ++m) il += std::pow(std::sqrt(eps), m) * a.il[m];
  return il;
}

// R = (1/eps) L g - v_x dg/dx + i lambda g
inline VecC interior_residual_at(const SlabEigenpair& a, double eps, double x) {
  AnsatzValue v = evaluate_ansatz(a, eps, x);
  const VecC vx = a.model->grid.V.col(0).cast<cplx>();
  return a.model->apply(v.g) / eps - vx.cwiseProduct(v.gx) + truncated_eigenvalue(a, eps) * v.g;
}

// r = L^R g - sqrt(eps) L^D g on the outgoing half of wall w
inline VecC boundary_residual_at(const SlabEigenpair& a, double eps, int w) {
  const auto& G = a.model->grid;
  const SlabWall& W = a.wall[w];
  const VecC g = evaluate_ansatz(a, eps, W.x).g;
  return reflection_op(G, W.frame, g) - std::sqrt(eps) * diffuse_op(G, W.frame, g, a.chi);
}

// composite Gauss rule on [0,1] refined geometrically toward both walls
inline Rule1D slab_x_rule(double eps, int per_panel = 10) {
  std::vector<double> bp = {0.0, 0.25, 0.5, 0.75, 1.0};
  for (double d = eps / 4; d < 0.5; d *= 2) {
    bp.push_back(d);
    bp.push_back(1 - d);
  }
  std::sort(bp.begin(), bp.end());
  bp.erase(std::unique(bp.begin(), bp.end(), [](double p, double q) { return std::abs(p - q) < 1e-15; }), bp.end());
  Rule1D r;
  for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
    Rule1D p = gauss_legendre(per_panel, bp[i], bp[i + 1]);
    r.x.insert(r.x.end(), p.x.begin(), p.x.end());
    r.w.insert(r.w.end(), p.w.begin(), p.w.end());
  }
  return r;
}

struct ResidualNorms {
  double eps = 0, interior = 0, boundary = 0, deviation = 0;
};

// L^2(dx; L^2(a^{-1} M dv)) with a the collision frequency of the non-hydrodynamic part
inline ResidualNorms residual_norms(const SlabEigenpair& a, double eps, int per_panel = 10) {
  const auto& G = a.model->grid;
  const double rate = a.model->rate_0();
  ResidualNorms n;
  n.eps = eps;
  const Rule1D xr = slab_x_rule(eps, per_panel);
  const int N = G.size();
  for (std::size_t i = 0; i < xr.x.size(); ++i) {
    const VecC R = interior_residual_at(a, eps, xr.x[i]);
    const VecC dv = evaluate_ansatz(a, eps, xr.x[i]).g - detail::ev(a.interior[0], xr.x[i], N);
    for (int q = 0; q < N; ++q) {
      n.interior += xr.w[i] * G.w(q) * std::norm(R(q)) / rate;
      n.deviation += xr.w[i] * G.w(q) * std::norm(dv(q)) / rate;
    }
  }
  for (int w = 0; w < 2; ++w) {
    const VecC r = boundary_residual_at(a, eps, w);
    for (int q = 0; q < N; ++q) n.boundary += G.w(q) * std::norm(r(q)) / rate;
  }
  n.interior = std::sqrt(n.interior);
  n.deviation = std::sqrt(n.deviation);
  n.boundary = std::sqrt(n.boundary);
  return n;
}

struct ScalingReport {
  int order = 2;
  std::string cutoff;
  std::vector<double> eps, interior, boundary, deviation;
  double slope_interior = 0;   // against sqrt(eps)
  double slope_boundary = 0;   // against sqrt(eps)
  double slope_deviation = 0;  // against eps
  double seconds = 0;
};

inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const int n = static_cast<int>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline ScalingReport scaling_study(const SlabEigenpair& a, const std::vector<double>& eps_list, int per_panel = 10) {
  if (eps_list.size() < 4) throw std::invalid_argument("scaling_study needs at least 4 eps values");
  const auto t0 = std::chrono::steady_clock::now();
  ScalingReport r;
  r.order = a.order;
  r.cutoff = to_string(a.cutoff);
  std::vector<std::future<ResidualNorms>> jobs;
  for (double e : eps_list) jobs.push_back(std::async(std::launch::async, [&a, e, per_panel] {
    return residual_norms(a, e, per_panel);
  }));
  std::vector<double> root;
  for (auto& j : jobs) {
    ResidualNorms n = j.get();
    r.eps.push_back(n.eps);
    root.push_back(std::sqrt(n.eps));
    r.interior.push_back(n.interior);
    r.boundary.push_back(n.boundary);
    r.deviation.push_back(n.deviation);
  }
  r.slope_interior = loglog_slope(root, r.interior);
  r.slope_boundary = loglog_slope(root, r.boundary);
  r.slope_deviation = loglog_slope(r.eps, r.deviation);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline void to_json(nlohmann::json& j, const ScalingReport& r) {
  j = nlohmann::json{{"order", r.order},
                     {"cutoff", r.cutoff},
                     {"eps", r.eps},
                     {"interior", r.interior},
                     {"boundary", r.boundary},
                     {"deviation", r.deviation},
                     {"slope_interior", r.slope_interior},
                     {"slope_boundary", r.slope_boundary},
                     {"slope_deviation", r.slope_deviation},
                     {"seconds", r.seconds},
                     {"note", "order 2 ansatz; damping analysis elsewhere uses the same order"}};
}

inline void from_json(const nlohmann::json& j, ScalingReport& r) {
  j.at("order").get_to(r.order);
  j.at("cutoff").get_to(r.cutoff);
  j.at("eps").get_to(r.eps);
  j.at("interior").get_to(r.interior);
  j.at("boundary").get_to(r.boundary);
  j.at("deviation").get_to(r.deviation);
  j.at("slope_interior").get_to(r.slope_interior);
  j.at("slope_boundary").get_to(r.slope_boundary);
  j.at("slope_deviation").get_to(r.slope_deviation);
  j.at("seconds").get_to(r.seconds);
}

inline nlohmann::json eigenpair_json(const SlabEigenpair& a) {
  auto cj = [](cplx z) { return nlohmann::json::array({z.real(), z.imag()}); };
  nlohmann::json j;
  j["domain"] = "slab";
  j["k"] = a.mode.k;
  j["tau"] = a.tau;
  j["lambda0"] = a.mode.lambda0;
  j["chi"] = a.chi;
  j["order"] = a.order;
  j["il"] = nlohmann::json::array({cj(a.il[0]), cj(a.il[1]), cj(a.il[2])});
  j["nu"] = a.tc.nu;
  j["kappa"] = a.tc.kappa;
  j["il1_closed"] = cj(a.il1_closed);
  j["dissipation"] = cj(a.dissipation);
  for (int w = 0; w < 2; ++w) {
    const auto& W = a.wall[w];
    nlohmann::json jw;
    jw["x"] = W.x;
    jw["Z1"] = cj(W.Z1);
    jw["Z2"] = cj(W.Z2);
    jw["theta0_wall"] = cj(detail::ev(W.theta0, 0.0));
    jw["theta1_wall"] = cj(detail::ev(W.theta1, 0.0));
    jw["robin_beta"] = W.robin_beta;
    jw["knudsen_slowest_rate"] = W.slowest_rate;
    j["walls"].push_back(jw);
  }
  return j;
}

}  // namespace kdamp
