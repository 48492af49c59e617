#pragma once

// Kinetic half-space layer: wall operators, solvability moments, induced
// fluid boundary conditions, and two solvers (source iteration on a
// stretched grid, and an eigen-expansion used where exact xi-derivatives
// are needed).

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "collision.hpp"
#include "expoly.hpp"
#include "quadrature.hpp"
#include "velocity.hpp"

namespace kdamp {

inline double sqrt2pi() { return std::sqrt(2.0 * std::numbers::pi); }

struct WallFrame {
  int D = 2;
  Eigen::VectorXd n;  // outward normal
  int axis = 0;
  int sign = 1;
  std::vector<Eigen::VectorXd> tangents;
};

// tensor grids only integrate half-range moments exactly for axis normals
inline WallFrame make_wall_frame(const Eigen::VectorXd& n) {
  WallFrame f;
  f.D = static_cast<int>(n.size());
  f.n = n;
  int found = -1;
  for (int j = 0; j < f.D; ++j)
    if (std::abs(std::abs(n(j)) - 1.0) < 1e-14) found = j;
  if (found < 0 || std::abs(n.norm() - 1.0) > 1e-14)
    throw std::invalid_argument("wall normal must be a signed coordinate axis");
  f.axis = found;
  f.sign = n(found) > 0 ? 1 : -1;
  for (int j = 0; j < f.D; ++j)
    if (j != found) f.tangents.push_back(Eigen::VectorXd::Unit(f.D, j));
  return f;
}

inline Eigen::VectorXd normal_speeds(const VelocityGrid& G, const WallFrame& f) { return G.V * f.n; }

inline int mirror_of(const VelocityGrid& G, const WallFrame& f, int q) { return G.mirror[f.axis][q]; }

// gamma_+ g - L gamma_- g on the outgoing half, zero elsewhere
inline VecC reflection_op(const VelocityGrid& G, const WallFrame& f, const VecC& g) {
  const Eigen::VectorXd vn = normal_speeds(G, f);
  VecC out = VecC::Zero(G.size());
  for (int q = 0; q < G.size(); ++q)
    if (vn(q) > 0) out(q) = g(q) - g(mirror_of(G, f, q));
  return out;
}

// sqrt(2 pi) chi [<gamma_- g>_dOmega - L gamma_- g], weight |v.n| on the incoming half
inline VecC diffuse_op(const VelocityGrid& G, const WallFrame& f, const VecC& g, double chi) {
  const Eigen::VectorXd vn = normal_speeds(G, f);
  const cplx avg = G.half_boundary_average(f.n, g, -1);
  VecC out = VecC::Zero(G.size());
  for (int q = 0; q < G.size(); ++q)
    if (vn(q) > 0) out(q) = sqrt2pi() * chi * (avg - g(mirror_of(G, f, q)));
  return out;
}

// int_{v.n>0} h eta (v.n) M dv
inline cplx half_moment(const VelocityGrid& G, const WallFrame& f, const Eigen::VectorXd& eta, const VecC& h) {
  const Eigen::VectorXd vn = normal_speeds(G, f);
  cplx s = 0;
  for (int q = 0; q < G.size(); ++q)
    if (vn(q) > 0) s += (G.w(q) * eta(q) * vn(q)) * h(q);
  return s;
}

// int_0^inf <S eta> dxi for an exponential-sum source
inline cplx source_moment(const VelocityGrid& G, const VectorEP& S, const Eigen::VectorXd& eta) {
  if (S.empty()) return 0.0;
  ScalarEP m = S.map([&](const VecC& c) { return cplx(G.dot(eta, c)); });
  m.prune(0.0);
  if (m.empty()) return 0.0;
  return -m.tail_integral().eval(0.0);
}

struct Invariants {
  Eigen::VectorXd one, v2;
  std::vector<Eigen::VectorXd> tan;
};

inline Invariants reflection_invariants(const VelocityGrid& G, const WallFrame& f) {
  Invariants I;
  I.one = Eigen::VectorXd::Ones(G.size());
  I.v2 = G.v2;
  for (const auto& a : f.tangents) I.tan.push_back(G.V * a);
  return I;
}

struct SolvabilityResidual {
  cplx mass = 0;
  std::vector<cplx> tangential;
  cplx energy = 0;
  double max_abs() const {
    double m = std::abs(mass);
    for (auto t : tangential) m = std::max(m, std::abs(t));
    return std::max(m, std::abs(energy));
  }
};

// residual_eta = int_{v.n>0} H eta (v.n) M + int <S eta>
inline SolvabilityResidual solvability_residual(const VelocityGrid& G, const WallFrame& f, const VecC& H,
                                                const VectorEP& S) {
  Invariants I = reflection_invariants(G, f);
  SolvabilityResidual r;
  r.mass = half_moment(G, f, I.one, H) + source_moment(G, S, I.one);
  for (const auto& a : I.tan) r.tangential.push_back(half_moment(G, f, a, H) + source_moment(G, S, a));
  r.energy = half_moment(G, f, I.v2, H) + source_moment(G, S, I.v2);
  return r;
}

// ---------------------------------------------------------------- fluid BCs

// g = hydro - (dz_u (x) n : Ahat + dz_theta n.Bhat) + (Mb : Ahat + tb.Bhat)
//       + (grad u_int : Ahat + grad theta_int . Bhat) + S_g
struct GForm {
  cplx rho = 0, theta = 0;
  VecC u, dz_u;
  cplx dz_theta = 0;
  Eigen::MatrixXcd Mb, grad_u_int;  // M(k,l) multiplies Ahat_kl
  VecC tb, grad_theta_int;
  VecC S;  // velocity-grid vector, kinetic
  static GForm zero(int D, int N) {
    GForm g;
    g.u = g.dz_u = g.tb = g.grad_theta_int = VecC::Zero(D);
    g.Mb = g.grad_u_int = Eigen::MatrixXcd::Zero(D, D);
    g.S = VecC::Zero(N);
    return g;
  }
};

struct FForm {
  cplx rho = 0, theta = 0;
  VecC u;
  VecC S;
  static FForm zero(int D, int N) {
    FForm f;
    f.u = VecC::Zero(D);
    f.S = VecC::Zero(N);
    return f;
  }
};

inline VecC hydro_vector(const VelocityGrid& G, cplx rho, const VecC& u, cplx theta) {
  VecC g(G.size());
  for (int q = 0; q < G.size(); ++q) {
    cplx s = rho + theta * (0.5 * G.v2(q) - 0.5 * G.D);
    for (int j = 0; j < G.D; ++j) s += u(j) * G.V(q, j);
    g(q) = s;
  }
  return g;
}

// M : Ahat = sum_kl M_kl Ahat_kl
inline VecC contract_A(const HatFunctions& h, const Eigen::MatrixXcd& M) {
  const int D = static_cast<int>(M.rows());
  VecC out = VecC::Zero(h.Ahat.front().size());
  for (int k = 0; k < D; ++k)
    for (int l = 0; l < D; ++l)
      if (M(k, l) != cplx(0.0)) out += M(k, l) * h.Ahat[k * D + l].cast<cplx>();
  return out;
}

inline VecC contract_B(const HatFunctions& h, const VecC& t) {
  VecC out = VecC::Zero(h.Bhat.front().size());
  for (int j = 0; j < t.size(); ++j)
    if (t(j) != cplx(0.0)) out += t(j) * h.Bhat[j].cast<cplx>();
  return out;
}

inline VecC build_g(const VelocityGrid& G, const HatFunctions& h, const WallFrame& f, const GForm& g) {
  VecC out = hydro_vector(G, g.rho, g.u, g.theta);
  const VecC n = f.n.cast<cplx>();
  out -= contract_A(h, g.dz_u * n.transpose()) + g.dz_theta * contract_B(h, n);
  out += contract_A(h, g.Mb) + contract_B(h, g.tb);
  out += contract_A(h, g.grad_u_int) + contract_B(h, g.grad_theta_int);
  return out + g.S;
}

inline VecC build_f(const VelocityGrid& G, const FForm& f) { return hydro_vector(G, f.rho, f.u, f.theta) + f.S; }

struct FluidBoundaryConditions {
  cplx normal_direct = 0, normal_closed = 0;  // u_g.n
  VecC tangential_direct, tangential_closed;  // u_f.a per tangent
  cplx theta_direct = 0, theta_closed = 0;    // theta_f
  double max_disagreement() const {
    double m = std::max(std::abs(normal_direct - normal_closed), std::abs(theta_direct - theta_closed));
    if (tangential_direct.size()) m = std::max(m, (tangential_direct - tangential_closed).cwiseAbs().maxCoeff());
    return m;
  }
};

struct BoundaryContext {
  const CollisionModel* model = nullptr;
  HatFunctions hats;
  TransportCoefficients tc;
  WallFrame frame;
  double chi = 1.0;
};

inline BoundaryContext make_boundary_context(const CollisionModel& m, const WallFrame& f, double chi) {
  if (!(chi >= 0)) throw std::invalid_argument("chi must be nonnegative");
  BoundaryContext c;
  c.model = &m;
  c.hats = hat_functions(m);
  c.tc = transport_coefficients(m);
  c.frame = f;
  c.chi = chi;
  return c;
}

inline VecC wall_datum(const BoundaryContext& c, const GForm& g, const FForm& f) {
  const auto& G = c.model->grid;
  return -reflection_op(G, c.frame, build_g(G, c.hats, c.frame, g)) + diffuse_op(G, c.frame, build_f(G, f), c.chi);
}

// Direct route: the three moment integrals are affine in the unknown fluid
// value, so each is zeroed by one secant step.  Closed route: the algebraic
// right-hand sides obtained from the flux identities.
inline FluidBoundaryConditions fluid_boundary_conditions(const BoundaryContext& c, GForm g, FForm f,
                                                         const VectorEP& S) {
  if (!(c.chi > 0)) throw std::invalid_argument("fluid_boundary_conditions needs chi > 0");
  const auto& G = c.model->grid;
  const WallFrame& fr = c.frame;
  const int D = G.D;
  const Eigen::VectorXd& n = fr.n;
  const VecC nc = n.cast<cplx>();
  Invariants I = reflection_invariants(G, fr);
  const double nu = c.tc.nu, kappa = c.tc.kappa, chi = c.chi;
  FluidBoundaryConditions out;

  auto res = [&](const GForm& gg, const FForm& ff) { return solvability_residual(G, fr, wall_datum(c, gg, ff), S); };

  // normal
  {
    const cplx un = nc.dot(g.u);  // n real, no conjugation issue
    SolvabilityResidual r0 = res(g, f);
    GForm g1 = g;
    g1.u += nc;
    SolvabilityResidual r1 = res(g1, f);
    const cplx slope = r1.mass - r0.mass;
    out.normal_direct = un - r0.mass / slope;
    g.u += (out.normal_direct - un) * nc;
  }
  const cplx Sg_vn = G.dot(Eigen::VectorXd(G.V * n), g.S);
  out.normal_closed = source_moment(G, S, I.one) - Sg_vn;

  // tangential
  out.tangential_direct.resize(fr.tangents.size());
  out.tangential_closed.resize(fr.tangents.size());
  const Eigen::MatrixXcd Mi = g.grad_u_int + g.grad_u_int.transpose();
  const Eigen::MatrixXcd Mbs = g.Mb + g.Mb.transpose();
  const VecC LDSf = diffuse_op(G, fr, f.S, chi);
  for (std::size_t t = 0; t < fr.tangents.size(); ++t) {
    const VecC a = fr.tangents[t].cast<cplx>();
    const cplx ua = a.dot(f.u);
    SolvabilityResidual r0 = res(g, f);
    FForm f1 = f;
    f1.u += a;
    SolvabilityResidual r1 = res(g, f1);
    const cplx slope = r1.tangential[t] - r0.tangential[t];
    out.tangential_direct(t) = ua - r0.tangential[t] / slope;
    const Eigen::VectorXd av = I.tan[t];
    const cplx SgA = G.dot(Eigen::VectorXd(av.cwiseProduct(G.V * n)), g.S);
    out.tangential_closed(t) = (nu / chi) * a.dot(g.dz_u) - (nu / chi) * a.dot(Mi * nc) - (nu / chi) * a.dot(Mbs * nc) +
                               half_moment(G, fr, av, LDSf) / chi - SgA / chi + source_moment(G, S, av) / chi;
  }

  // temperature, with u_g.n already fixed by the normal condition
  {
    SolvabilityResidual r0 = res(g, f);
    FForm f1 = f;
    f1.theta += 1.0;
    SolvabilityResidual r1 = res(g, f1);
    out.theta_direct = f.theta - r0.energy / (r1.energy - r0.energy);
    const cplx ufn = nc.dot(f.u);
    const cplx SgE = G.dot(Eigen::VectorXd(G.v2.cwiseProduct(G.V * n)), g.S);
    const cplx gradn = nc.dot(g.grad_theta_int + g.tb);
    out.theta_closed = ((D + 2.0) * kappa * g.dz_theta - (D + 2.0) * kappa * gradn - (D + 2.0) * out.normal_closed -
                        SgE + 0.5 * sqrt2pi() * chi * ufn + half_moment(G, fr, I.v2, LDSf) +
                        source_moment(G, S, I.v2)) /
                       ((D + 1.0) * chi);
  }
  return out;
}

// Wall datum produced by a leading-order layer with tangential shear dz_u and
// temperature slope dz_theta.  The diffuse half carries sqrt(2 pi) chi; the
// `literal` variant drops it and is kept only to measure what that costs.
inline VecC round1_datum(const BoundaryContext& c, const VecC& dz_u, cplx dz_theta, bool literal = false) {
  const auto& G = c.model->grid;
  const int D = G.D;
  const VecC n = c.frame.n.cast<cplx>();
  const VecC dz_tan = dz_u - n * n.dot(dz_u);
  VecC X = contract_A(c.hats, dz_u * n.transpose()) + dz_theta * contract_B(c.hats, n);
  VecC H = reflection_op(G, c.frame, X);
  const double k = literal ? 1.0 : sqrt2pi();
  const double beta = (D + 2.0) / (D + 1.0) * c.tc.kappa;
  const Eigen::VectorXd vn = normal_speeds(G, c.frame);
  for (int q = 0; q < G.size(); ++q) {
    if (!(vn(q) > 0)) continue;
    cplx vt = 0;
    for (int j = 0; j < D; ++j) vt += G.V(q, j) * dz_tan(j);
    H(q) += -k * c.tc.nu * vt + k * (0.5 * (D + 1.0) - 0.5 * G.v2(q)) * beta * dz_theta;
  }
  if (literal) {
    // literal form divides by chi
    const VecC X2 = H - reflection_op(G, c.frame, X);
    H = reflection_op(G, c.frame, X) + X2 / c.chi;
  }
  return H;
}

// ----------------------------------------------------------- xi grid, iteration

struct HalfSpaceOptions {
  double xi_max = 25.0;
  int cells = 120;
  double stretch = 1.04;  // ratio of consecutive cell widths
  double tol = 1e-9;
  int max_iter = 200000;
  double tail_threshold = 1e-2;  // ||g(xi_max)|| / max ||g|| below this counts as decayed
};

inline std::vector<double> make_xi_grid(const HalfSpaceOptions& o) {
  if (!(o.xi_max > 0) || o.cells < 2 || !(o.stretch >= 1.0)) throw std::invalid_argument("bad xi grid options");
  std::vector<double> x(o.cells + 1);
  const double r = o.stretch;
  for (int i = 0; i <= o.cells; ++i)
    x[i] = (r == 1.0) ? o.xi_max * i / o.cells : o.xi_max * (std::pow(r, i) - 1.0) / (std::pow(r, o.cells) - 1.0);
  x[o.cells] = o.xi_max;
  return x;
}

struct HalfSpaceProblem {
  const CollisionModel* model = nullptr;
  WallFrame frame;
  VecC H;      // used on v.n > 0
  VectorEP S;  // interior source in xi
};

struct HalfSpaceSolution {
  std::vector<double> xi;
  std::vector<VecC> g;  // node values
  int iterations = 0;
  bool converged = false;
  std::vector<double> history;
  SolvabilityResidual solvability;
  std::vector<double> norm;
  std::vector<cplx> mass_flux, heat_flux;
  double decay_rate = 0;  // slope of log||g|| over the last decade of xi
  // conserved fluxes at xi_max; they equal the solvability residuals
  cplx tail_mass_flux = 0, tail_energy_flux = 0;
  std::vector<cplx> tail_momentum_flux;
  double tail_ratio = 0;  // ||g(xi_max)|| / max ||g||
  bool tail_decays = false;
  double conservation_defect = 0;  // max |d/dxi <vn g> - <S>| in cell-integrated form
};

namespace detail {
inline double log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2) return 0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}
}  // namespace detail

namespace detail {
// e^{-t} moments over [0,T]: phi0 = <e^{-t}>, phi1 = <e^{-t} (2t/T - 1)>
inline void exp_cell_moments(double T, double& e, double& phi0, double& phi1) {
  e = std::exp(-T);
  if (T > 0.5) {
    phi0 = -std::expm1(-T) / T;
    phi1 = 2.0 * (-std::expm1(-T) - T * e) / (T * T) - phi0;
    return;
  }
  // alternating series, no cancellation at small T
  double a = 0, b = 0, term = 1;  // term = T^k / k!
  for (int k = 1; k <= 24; ++k) {
    term *= T / k;
    const double sgn = (k % 2) ? 1.0 : -1.0;
    a += sgn * term;                                // 1 - e^{-T}
    if (k >= 2) b += -sgn * (k - 1.0) * term;        // 1 - e^{-T}(1+T)
  }
  phi0 = a / T;
  phi1 = 2.0 * b / (T * T) - phi0;
}
}  // namespace detail

// Characteristics integrated exactly through each cell with a source that is
// linear in the cell (mean plus Legendre slope).  The cell balance
// |vn| (g_out - g_in) = h (Qbar - sigma gbar) holds identically, so the mass
// flux is conserved up to the iteration error.
inline HalfSpaceSolution solve_halfspace(const HalfSpaceProblem& P, const HalfSpaceOptions& o = {}) {
  if (!P.model) throw std::invalid_argument("half-space problem without collision model");
  const CollisionModel& M = *P.model;
  const VelocityGrid& G = M.grid;
  const int N = G.size();
  const Eigen::VectorXd vn = normal_speeds(G, P.frame);
  for (int q = 0; q < N; ++q)
    if (vn(q) == 0) throw std::invalid_argument("velocity grid has a node with v.n = 0");
  if (P.H.size() != N) throw std::invalid_argument("wall datum has the wrong length");
  HalfSpaceSolution sol;
  sol.xi = make_xi_grid(o);
  const int C = o.cells;
  const double sigma = M.rate_0();
  // source mean and slope per cell
  std::vector<VecC> S0(C, VecC::Zero(N)), S1(C, VecC::Zero(N));
  if (!P.S.empty()) {
    const Rule1D gl = gauss_legendre(10);
    for (int c = 0; c < C; ++c) {
      const double a = sol.xi[c], b = sol.xi[c + 1];
      for (std::size_t i = 0; i < gl.x.size(); ++i) {
        const VecC s = P.S.eval(0.5 * (a + b) + 0.5 * (b - a) * gl.x[i]);
        S0[c] += 0.5 * gl.w[i] * s;
        S1[c] += 1.5 * gl.w[i] * gl.x[i] * s;
      }
    }
  }
  Eigen::MatrixXd E(C, N), F0(C, N), F1(C, N), Tc(C, N);
  for (int c = 0; c < C; ++c) {
    const double h = sol.xi[c + 1] - sol.xi[c];
    for (int q = 0; q < N; ++q) {
      Tc(c, q) = sigma * h / std::abs(vn(q));
      detail::exp_cell_moments(Tc(c, q), E(c, q), F0(c, q), F1(c, q));
    }
  }
  // cell mean and slope moments, one column per cell
  Eigen::MatrixXcd m0 = Eigen::MatrixXcd::Zero(N, C), m1 = m0, n0 = m0, n1 = m0;
  Eigen::MatrixXcd Sm0(N, C), Sm1(N, C);
  for (int c = 0; c < C; ++c) {
    Sm0.col(c) = S0[c];
    Sm1.col(c) = S1[c];
  }
  sol.g.assign(C + 1, VecC::Zero(N));
  double scale = std::max(1.0, P.H.cwiseAbs().maxCoeff());
  if (C) scale = std::max(scale, Sm0.cwiseAbs().maxCoeff());
  // gain sigma0 - L on the whole block: sigma0 P - (ra - r0) PA - (rb - r0) PB
  const Eigen::MatrixXcd E0 = G.E.cast<cplx>(), Ea = M.Ea.cast<cplx>(), Eb = M.Eb.cast<cplx>();
  const Eigen::VectorXcd wc = G.w.cast<cplx>();
  const double da = M.rate_A() - sigma, db = M.rate_B() - sigma;
  auto gain = [&](const Eigen::MatrixXcd& X) {
    const Eigen::MatrixXcd Y = wc.asDiagonal() * X;
    Eigen::MatrixXcd out = sigma * (E0 * (E0.transpose() * Y));
    if (da != 0 && Ea.cols()) out -= da * (Ea * (Ea.transpose() * Y));
    if (db != 0 && Eb.cols()) out -= db * (Eb * (Eb.transpose() * Y));
    return out;
  };
  Eigen::MatrixXcd Q0(N, C), Q1(N, C);
  // one cell along a characteristic; dir = +1 when travelling with xi
  auto cell = [&](int c, int q, cplx gin, int dir) {
    const cplx A = Q0(q, c) / sigma, B = double(dir) * Q1(q, c) / sigma;
    const double T = Tc(c, q);
    const cplx d = gin - (A - B - 2.0 * B / T);
    n0(q, c) = A - 2.0 * B / T + d * F0(c, q);
    n1(q, c) = double(dir) * (B + 3.0 * d * F1(c, q));
    return A + B - 2.0 * B / T + d * E(c, q);
  };
  for (int it = 1; it <= o.max_iter; ++it) {
    Q0 = gain(m0) + Sm0;
    Q1 = gain(m1) + Sm1;
    sol.g[C].setZero();
    for (int c = C - 1; c >= 0; --c)
      for (int q = 0; q < N; ++q)
        if (vn(q) < 0) sol.g[c](q) = cell(c, q, sol.g[c + 1](q), -1);
    for (int q = 0; q < N; ++q)
      if (vn(q) > 0) sol.g[0](q) = sol.g[0](mirror_of(G, P.frame, q)) + P.H(q);
    for (int c = 0; c < C; ++c)
      for (int q = 0; q < N; ++q)
        if (vn(q) > 0) sol.g[c + 1](q) = cell(c, q, sol.g[c](q), +1);
    const double diff = std::max((n0 - m0).cwiseAbs().maxCoeff(), (n1 - m1).cwiseAbs().maxCoeff());
    m0.swap(n0);
    m1.swap(n1);
    sol.iterations = it;
    if (it % 50 == 1) sol.history.push_back(diff / scale);
    if (diff <= o.tol * scale) {
      sol.converged = true;
      sol.history.push_back(diff / scale);
      break;
    }
    if (!std::isfinite(diff)) break;
  }
  if (!sol.converged)
    throw std::runtime_error("half-space iteration did not converge in " + std::to_string(o.max_iter) +
                             " iterations; last increment " +
                             (sol.history.empty() ? std::string("n/a") : std::to_string(sol.history.back())));
  std::vector<VecC>& Sbar = S0;
  // diagnostics
  Eigen::VectorXd bn = 0.5 * (G.v2.array() - (G.D + 2.0)).matrix().cwiseProduct(vn);
  for (int i = 0; i <= C; ++i) {
    sol.norm.push_back(std::sqrt(std::abs(G.dot(sol.g[i].conjugate().eval(), sol.g[i]))));
    sol.mass_flux.push_back(G.dot(vn, sol.g[i]));
    sol.heat_flux.push_back(G.dot(bn, sol.g[i]));
  }
  Eigen::VectorXd one = Eigen::VectorXd::Ones(N);
  for (int c = 0; c < C; ++c) {
    const double h = sol.xi[c + 1] - sol.xi[c];
    const cplx d = sol.mass_flux[c + 1] - sol.mass_flux[c] - h * G.dot(one, Sbar[c]);
    sol.conservation_defect = std::max(sol.conservation_defect, std::abs(d) / scale);
  }
  sol.solvability = solvability_residual(G, P.frame, P.H, P.S);
  std::vector<double> xs, ys;
  for (int i = 0; i <= C; ++i)
    if (sol.xi[i] >= 0.1 * o.xi_max && sol.norm[i] > 0) {
      xs.push_back(sol.xi[i]);
      ys.push_back(std::log(sol.norm[i]));
    }
  sol.decay_rate = detail::log_slope(xs, ys);
  sol.tail_mass_flux = sol.mass_flux[C];
  sol.tail_energy_flux = G.dot(Eigen::VectorXd(vn.cwiseProduct(G.v2)), sol.g[C]);
  for (const auto& a : P.frame.tangents)
    sol.tail_momentum_flux.push_back(G.dot(Eigen::VectorXd(vn.cwiseProduct(G.V * a)), sol.g[C]));
  const double gmax = *std::max_element(sol.norm.begin(), sol.norm.end());
  sol.tail_ratio = gmax > 0 ? sol.norm[C] / gmax : 0.0;
  sol.tail_decays = gmax == 0 || (sol.decay_rate < 0 && sol.tail_ratio < o.tail_threshold);
  return sol;
}

// interpolated boundary moments used for refinement checks
struct BoundaryMoments {
  cplx rho, theta;
  VecC u;
};

inline BoundaryMoments wall_moments(const VelocityGrid& G, const VecC& g0) {
  VecC m = G.fluid_moments(g0);
  BoundaryMoments b;
  b.rho = m(0);
  b.u = m.segment(1, G.D);
  b.theta = m(G.D + 1);
  return b;
}

inline void write_knudsen_csv(std::ostream& os, const HalfSpaceSolution& s, const std::string& label = "") {
  os << "solve,xi,norm,mass_flux_re,mass_flux_im,heat_flux_re,heat_flux_im\n";
  os.precision(12);
  for (std::size_t i = 0; i < s.xi.size(); ++i)
    os << label << ',' << s.xi[i] << ',' << s.norm[i] << ',' << s.mass_flux[i].real() << ','
       << s.mass_flux[i].imag() << ',' << s.heat_flux[i].real() << ',' << s.heat_flux[i].imag() << '\n';
}

// ------------------------------------------------------ eigen-expansion solver

struct HalfSpaceBasis {
  WallFrame frame;
  Eigen::VectorXcd kappa;  // decaying exponents
  Eigen::MatrixXcd Phi;    // N x m
  Eigen::MatrixXd L;       // dense collision matrix
  Eigen::VectorXd vn;
  int expected_decaying = 0;
};

// (v.n) g' + L g = 0 has g = phi e^{kappa xi} with -L phi = kappa (v.n) phi
inline HalfSpaceBasis make_halfspace_basis(const CollisionModel& M, const WallFrame& f, double tol = 1e-7) {
  const VelocityGrid& G = M.grid;
  HalfSpaceBasis b;
  b.frame = f;
  b.L = M.dense();
  b.vn = normal_speeds(G, f);
  const int N = G.size();
  for (int q = 0; q < N; ++q)
    if (b.vn(q) == 0) throw std::invalid_argument("velocity grid has a node with v.n = 0");
  Eigen::MatrixXd A = -(b.vn.cwiseInverse().asDiagonal() * b.L);
  Eigen::EigenSolver<Eigen::MatrixXd> es(A);
  if (es.info() != Eigen::Success) throw std::runtime_error("half-space eigen decomposition failed");
  std::vector<int> keep;
  for (int j = 0; j < N; ++j)
    if (es.eigenvalues()(j).real() < -tol) keep.push_back(j);
  b.kappa.resize(keep.size());
  b.Phi.resize(N, keep.size());
  for (std::size_t j = 0; j < keep.size(); ++j) {
    b.kappa(j) = es.eigenvalues()(keep[j]);
    b.Phi.col(j) = es.eigenvectors().col(keep[j]);
    b.Phi.col(j) /= b.Phi.col(j).norm();
  }
  int npos = 0;
  for (int q = 0; q < N; ++q) npos += b.vn(q) > 0;
  b.expected_decaying = npos - (G.D + 1);
  return b;
}

struct ExpansionSolution {
  VectorEP g;  // exact profile in xi
  double bc_residual = 0;
  SolvabilityResidual solvability;
  double slowest_rate = 0;
};

// particular solution of (v.n) y' + L y = S, exponent by exponent
inline VectorEP particular_halfspace(const HalfSpaceBasis& b, const VectorEP& S) {
  VectorEP y;
  const int N = static_cast<int>(b.vn.size());
  std::vector<cplx> alphas;
  for (const auto& t : S.terms) {
    bool seen = false;
    for (auto a : alphas)
      if (std::abs(a - t.alpha) <= 1e-13 * (1 + std::abs(a))) seen = true;
    if (!seen) alphas.push_back(t.alpha);
  }
  const Eigen::MatrixXcd V = b.vn.cast<cplx>().asDiagonal();
  for (cplx al : alphas) {
    int P = -1;
    for (const auto& t : S.terms)
      if (std::abs(al - t.alpha) <= 1e-13 * (1 + std::abs(al))) P = std::max(P, t.p);
    std::vector<VecC> s(P + 1, VecC::Zero(N));
    for (const auto& t : S.terms)
      if (std::abs(al - t.alpha) <= 1e-13 * (1 + std::abs(al))) s[t.p] += t.c;
    Eigen::MatrixXcd K = al * V + b.L.cast<cplx>();
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(K);
    if (lu.rank() < N) throw std::domain_error("resonant half-space source exponent");
    std::vector<VecC> qk(P + 2, VecC::Zero(N));
    for (int k = P; k >= 0; --k) qk[k] = lu.solve(VecC(s[k] - double(k + 1) * (V * qk[k + 1])));
    for (int k = 0; k <= P; ++k) y.add_term(al, k, qk[k]);
  }
  return y;
}

inline ExpansionSolution solve_halfspace_expansion(const CollisionModel& M, const HalfSpaceBasis& b, const VecC& H,
                                                   const VectorEP& S = {}) {
  const VelocityGrid& G = M.grid;
  const int N = G.size();
  ExpansionSolution out;
  VectorEP part = particular_halfspace(b, S);
  const VecC p0 = part.empty() ? VecC::Zero(N) : part.eval(0.0);
  std::vector<int> rows;
  for (int q = 0; q < N; ++q)
    if (b.vn(q) > 0) rows.push_back(q);
  const int m = static_cast<int>(b.kappa.size());
  Eigen::MatrixXcd A(rows.size(), m);
  VecC rhs(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int q = rows[i], mq = mirror_of(G, b.frame, q);
    const double wt = std::sqrt(G.w(q) * b.vn(q));
    A.row(i) = wt * (b.Phi.row(q) - b.Phi.row(mq));
    rhs(i) = wt * (H(q) - (p0(q) - p0(mq)));
  }
  VecC cvec = A.completeOrthogonalDecomposition().solve(rhs);
  out.g = part;
  for (int j = 0; j < m; ++j)
    if (cvec(j) != cplx(0.0)) out.g.add_term(b.kappa(j), 0, VecC(cvec(j) * b.Phi.col(j)));
  // boundary mismatch in the unweighted sense
  const VecC g0 = out.g.empty() ? VecC::Zero(N) : out.g.eval(0.0);
  const VecC lr = reflection_op(G, b.frame, g0);
  for (int q : rows) out.bc_residual = std::max(out.bc_residual, std::abs(lr(q) - H(q)));
  out.solvability = solvability_residual(G, b.frame, H, S);
  out.slowest_rate = -1e300;
  for (int j = 0; j < m; ++j) out.slowest_rate = std::max(out.slowest_rate, b.kappa(j).real());
  return out;
}

}  // namespace kdamp
