#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "domain.hpp"
#include "expoly.hpp"
#include "neumann.hpp"
#include "velocity.hpp"

namespace kdamp {

using Vec2c = Eigen::Vector2cd;
constexpr cplx I1(0.0, 1.0);

struct FluidPoint {
  cplx rho = 0;
  Vec2c u = Vec2c::Zero();
  cplx theta = 0;
  FluidPoint& operator+=(const FluidPoint& o) {
    rho += o.rho;
    u += o.u;
    theta += o.theta;
    return *this;
  }
  friend FluidPoint operator*(cplx s, FluidPoint p) {
    p.rho *= s;
    p.u *= s;
    p.theta *= s;
    return p;
  }
  friend FluidPoint operator+(FluidPoint a, const FluidPoint& b) { return a += b; }
  friend FluidPoint operator-(FluidPoint a, const FluidPoint& b) { return a += cplx(-1.0) * b; }
};

// pointwise H density  rho1 conj(rho2) + u1.conj(u2) + (D/2) theta1 conj(theta2)
inline cplx h_density(const FluidPoint& a, const FluidPoint& b, int D) {
  return a.rho * std::conj(b.rho) + (a.u.array() * b.u.conjugate().array()).sum() + 0.5 * D * a.theta * std::conj(b.theta);
}

// what the acoustic operator needs at a point
struct FluidJet {
  FluidPoint val;
  cplx div_u = 0;
  Vec2c grad_rho_theta = Vec2c::Zero();
};

// (div u, grad(rho+theta), (2/D) div u)
inline FluidPoint apply_acoustic(const FluidJet& j, int D) {
  FluidPoint r;
  r.rho = j.div_u;
  r.u = j.grad_rho_theta;
  r.theta = (2.0 / D) * j.div_u;
  return r;
}

struct FluidState {
  int D = 2;
  std::vector<InteriorNode> nodes;
  std::vector<FluidPoint> f;

  FluidState() = default;
  FluidState(int D_, std::vector<InteriorNode> n) : D(D_), nodes(std::move(n)), f(nodes.size()) {}

  template <class Fn>
  static FluidState sample(int D, const std::vector<InteriorNode>& nodes, Fn&& fn) {
    FluidState s(D, nodes);
    for (std::size_t i = 0; i < nodes.size(); ++i) s.f[i] = fn(nodes[i].x);
    return s;
  }
  FluidState& operator+=(const FluidState& o) {
    for (std::size_t i = 0; i < f.size(); ++i) f[i] += o.f[i];
    return *this;
  }
  FluidState scaled(cplx s) const {
    FluidState r = *this;
    for (auto& p : r.f) p = s * p;
    return r;
  }
};

inline cplx h_inner(const FluidState& a, const FluidState& b) {
  cplx s = 0;
  for (std::size_t i = 0; i < a.f.size(); ++i) s += a.nodes[i].w * h_density(a.f[i], b.f[i], a.D);
  return s;
}

struct AcousticEigenpair {
  int tau = 1;
  NeumannMode mode;
  int D = 2;
  double c = 1;  // sqrt((D+2)/(2D))
  cplx il = 0;   // i lambda = i tau lambda0

  FluidPoint at(const Vec2& x) const {
    ModeValue v = evaluate_mode(mode, x);
    FluidPoint p;
    p.rho = c * (D / (D + 2.0)) * v.psi;
    p.u = (c / il) * v.grad.cast<cplx>();
    p.theta = c * (2.0 / (D + 2.0)) * v.psi;
    return p;
  }
  FluidJet jet(const Vec2& x) const {
    ModeValue v = evaluate_mode(mode, x);
    FluidJet j;
    j.val.rho = c * (D / (D + 2.0)) * v.psi;
    j.val.u = (c / il) * v.grad.cast<cplx>();
    j.val.theta = c * (2.0 / (D + 2.0)) * v.psi;
    j.div_u = (c / il) * v.hess.trace();
    j.grad_rho_theta = c * v.grad.cast<cplx>();
    return j;
  }
};

inline AcousticEigenpair make_eigenpair(const NeumannMode& m, int tau, int D) {
  if (tau != 1 && tau != -1) throw std::invalid_argument("make_eigenpair: tau must be +1 or -1");
  AcousticEigenpair p;
  p.tau = tau;
  p.mode = m;
  p.D = D;
  p.c = std::sqrt((D + 2.0) / (2.0 * D));
  p.il = I1 * double(tau) * m.lambda0;
  return p;
}

// g(v) = c[(D/(D+2))Psi + v.grad Psi/(i lambda) + (2/(D+2)) Psi (|v|^2/2 - D/2)]
inline VecC infinitesimal_maxwellian(const AcousticEigenpair& p, const VelocityGrid& g, const Vec2& x) {
  FluidPoint f = p.at(x);
  VecC out(g.size());
  for (int q = 0; q < g.size(); ++q)
    out(q) = f.rho + f.u(0) * g.V(q, 0) + f.u(1) * g.V(q, 1) + f.theta * (0.5 * g.v2(q) - 0.5 * g.D);
  return out;
}

// fluid state (rho, u, theta) read back from a velocity distribution
inline FluidPoint fluid_of(const VelocityGrid& g, const VecC& f) {
  VecC m = g.fluid_moments(f);
  FluidPoint p;
  p.rho = m(0);
  p.u = Vec2c(m(1), m(2));
  p.theta = m(g.D + 1);
  return p;
}

struct IncompressibleSplit {
  FluidState Pi, PiPerp;
};

// Pi U: incompressible part; velocity split through the gradients of the first K modes
inline IncompressibleSplit split_incompressible(const FluidState& U, const std::vector<NeumannMode>& modes) {
  const int D = U.D, K = static_cast<int>(modes.size()), n = static_cast<int>(U.nodes.size());
  Eigen::MatrixXcd Gm = Eigen::MatrixXcd::Zero(K, K);
  Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(K);
  std::vector<std::vector<Vec2>> grads(n, std::vector<Vec2>(K));
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < K; ++k) grads[i][k] = evaluate_mode(modes[k], U.nodes[i].x).grad;
    for (int k = 0; k < K; ++k) {
      rhs(k) += U.nodes[i].w * grads[i][k].cast<cplx>().dot(U.f[i].u);
      for (int l = 0; l < K; ++l) Gm(k, l) += U.nodes[i].w * grads[i][k].dot(grads[i][l]);
    }
  }
  Eigen::VectorXcd a = Gm.ldlt().solve(rhs);
  IncompressibleSplit s{FluidState(D, U.nodes), FluidState(D, U.nodes)};
  for (int i = 0; i < n; ++i) {
    const auto& p = U.f[i];
    Vec2c gu = Vec2c::Zero();
    for (int k = 0; k < K; ++k) gu += a(k) * grads[i][k].cast<cplx>();
    const cplx sum = p.rho + p.theta;
    FluidPoint perp, par;
    perp.rho = (D / (D + 2.0)) * sum;
    perp.theta = (2.0 / (D + 2.0)) * sum;
    perp.u = gu;
    par.rho = (2.0 / (D + 2.0)) * p.rho - (D / (D + 2.0)) * p.theta;
    par.theta = -par.rho;
    par.u = p.u - gu;
    s.Pi.f[i] = par;
    s.PiPerp.f[i] = perp;
  }
  return s;
}

using BoundaryField = std::function<cplx(const BoundaryPoint&)>;

// Velocity lift (0, grad phi, 0) with grad phi . n = g on the boundary.
struct Lift {
  std::function<Vec2c(const Vec2&)> u;     // grad phi
  std::function<cplx(const Vec2&)> lap;    // Laplacian of phi
};

namespace detail {

// cosine coefficients of g along each rectangle edge (or the two slab walls)
inline std::vector<std::vector<cplx>> edge_cosine_series(const Domain& dom, const BoundaryField& g, int J) {
  std::vector<std::vector<cplx>> b(4, std::vector<cplx>(J + 1, 0.0));
  const double len[4] = {dom.Lx, dom.Ly, dom.Lx, dom.Ly};
  Rule1D r = gauss_legendre(2 * J + 20, 0.0, 1.0);
  for (int e = 0; e < 4; ++e)
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double s = r.x[i] * len[e];
      const cplx gv = g(dom.boundary_point(e, s));
      for (int j = 0; j <= J; ++j) b[e][j] += (j ? 2.0 : 1.0) * r.w[i] * gv * std::cos(j * std::numbers::pi * r.x[i]);
    }
  return b;
}

inline std::vector<std::pair<cplx, cplx>> fourier_series(const Domain& dom, const BoundaryField& g, int J) {
  const int M = 4 * J + 32;
  std::vector<std::pair<cplx, cplx>> ab(J + 1, {0.0, 0.0});
  for (int i = 0; i < M; ++i) {
    const double phi = 2 * std::numbers::pi * (i + 0.5) / M;
    const cplx gv = g(dom.boundary_point(0, phi));
    for (int m = 0; m <= J; ++m) {
      ab[m].first += (m ? 2.0 : 1.0) / M * gv * std::cos(m * phi);
      ab[m].second += 2.0 / M * gv * std::sin(m * phi);
    }
  }
  return ab;
}

}  // namespace detail

// variant 0: harmonic-type profiles; variant 1: polynomial profiles
inline Lift make_lift(const Domain& dom, const BoundaryField& g, int variant, int J = 24) {
  Lift L;
  const double pi = std::numbers::pi;
  switch (dom.kind) {
    case DomainKind::Slab: {
      const cplx g0 = g(dom.boundary_point(0, 0.5)), g1 = g(dom.boundary_point(1, 0.5));
      if (variant == 0) {
        L.u = [=](const Vec2& x) { return Vec2c(-g0 * (1 - x(0)) + g1 * x(0), 0.0); };
        L.lap = [=](const Vec2&) { return g0 + g1; };
      } else {
        L.u = [=](const Vec2& x) {
          const double s = x(0);
          return Vec2c(-g0 * (1 - s) * (1 - s) * (1 + 2 * s) + g1 * s * s * (3 - 2 * s), 0.0);
        };
        L.lap = [=](const Vec2& x) {
          const double s = x(0);
          return -g0 * (6 * s * s - 6 * s) + g1 * (6 * s - 6 * s * s);
        };
      }
      break;
    }
    case DomainKind::Rectangle: {
      auto b = detail::edge_cosine_series(dom, g, J);
      const double Lx = dom.Lx, Ly = dom.Ly;
      // profile h with h'(0) = -1, h'(W) = 0 and h'' = k^2 h (variant 0) or polynomial (variant 1)
      struct Prof {
        double h, dh, d2h;
      };
      auto prof = [variant](double k, double t, double W) -> Prof {
        if (variant == 0 && k > 0) {
          const double A = 1.0 / (k * std::sinh(k * W));
          return {A * std::cosh(k * (W - t)), -A * k * std::sinh(k * (W - t)), A * k * k * std::cosh(k * (W - t))};
        }
        if (variant == 0) return {(W - t) * (W - t) / (2 * W), -(W - t) / W, 1.0 / W};
        return {-t + t * t / (2 * W), -1 + t / W, 1.0 / W};
      };
      // edge e: tangential coordinate s, inward distance t, edge length Le, depth W
      auto eval = [=](const Vec2& x, bool want_lap) {
        Vec2c grad = Vec2c::Zero();
        cplx lap = 0;
        for (int e = 0; e < 4; ++e) {
          double s, t, Le, W;
          Vec2 ts, tn;  // d s / d x and d t / d x
          switch (e) {
            case 0: s = x(0); t = x(1); Le = Lx; W = Ly; ts = Vec2(1, 0); tn = Vec2(0, 1); break;
            case 1: s = x(1); t = Lx - x(0); Le = Ly; W = Lx; ts = Vec2(0, 1); tn = Vec2(-1, 0); break;
            case 2: s = Lx - x(0); t = Ly - x(1); Le = Lx; W = Ly; ts = Vec2(-1, 0); tn = Vec2(0, -1); break;
            default: s = Ly - x(1); t = x(0); Le = Ly; W = Lx; ts = Vec2(0, -1); tn = Vec2(1, 0); break;
          }
          for (int j = 0; j <= J; ++j) {
            if (b[e][j] == cplx(0.0)) continue;
            const double k = j * pi / Le;
            Prof p = prof(k, t, W);
            const double cs = std::cos(k * s), sn = std::sin(k * s);
            // phi_e = b cos(k s) h(t); outward normal derivative at t=0 is -dh/dt = 1
            grad += b[e][j] * ((-k * sn * p.h) * ts + (cs * p.dh) * tn).cast<cplx>();
            if (want_lap) lap += b[e][j] * cs * (p.d2h - k * k * p.h);
          }
        }
        return std::make_pair(grad, lap);
      };
      L.u = [=](const Vec2& x) { return eval(x, false).first; };
      L.lap = [=](const Vec2& x) { return eval(x, true).second; };
      break;
    }
    case DomainKind::Disk: {
      auto ab = detail::fourier_series(dom, g, J);
      const double R = dom.R;
      auto eval = [=](const Vec2& x) {
        const double r = x.norm(), phi = std::atan2(x(1), x(0));
        const Vec2 er(std::cos(phi), std::sin(phi)), ep(-std::sin(phi), std::cos(phi));
        Vec2c grad = Vec2c::Zero();
        cplx lap = 0;
        for (int m = 0; m <= J; ++m) {
          // radial profile f(r) with f'(R) = 1
          const int p = (variant == 0) ? (m == 0 ? 2 : m) : m + 2;
          const double fp = std::pow(r / R, p - 1);
          const double f_over_r = std::pow(r / R, p - 1) / p;  // f/r
          const double lapf = p == m ? 0.0 : (double(p * p) - double(m * m)) / (p * R) * std::pow(r / R, p - 2);
          const cplx a = ab[m].first, b = ab[m].second;
          const double c = std::cos(m * phi), s = std::sin(m * phi);
          const cplx ang = a * c + b * s, dang = double(m) * (-a * s + b * c);
          grad += (fp * ang) * er.cast<cplx>() + (f_over_r * dang) * ep.cast<cplx>();
          lap += lapf * ang;
        }
        return std::make_pair(grad, lap);
      };
      L.u = [=](const Vec2& x) { return eval(x).first; };
      L.lap = [=](const Vec2& x) { return eval(x).second; };
      break;
    }
  }
  return L;
}

struct ShiftedSolveOptions {
  int interior_order = 40;
  int boundary_order = 48;
  int series_terms = 24;
  double compat_tol = 1e-8;
};

// V1 = sum over modes outside the kernel of a(delta,l) U^{delta,l} + const part + null part
struct ShiftedSolution {
  cplx imu = 0;
  std::vector<std::pair<int, cplx>> compat;  // (partner index, residual)
  Eigen::MatrixXcd coef;        // 2 x K, row 0: delta=+1, row 1: delta=-1; kernel entries 0
  Eigen::MatrixXcd coef_lift[2];
  cplx const_coef = 0;          // along the normalized constant acoustic state
  FluidState null_part;         // -F_null/(i lambda)
  double lift_deviation = 0;    // max |coef(lift a) - coef(lift b)|
  double route_deviation = 0;   // max |coef(lift) - coef(direct)|
  double max_compat() const {
    double m = 0;
    for (auto& c : compat) m = std::max(m, std::abs(c.second));
    return m;
  }
};

// Solve (A - i lambda) V = i mu U + F with u.n = g, target mode index k (0-based) in modes.
inline ShiftedSolution solve_shifted_acoustic(const Domain& dom, const std::vector<NeumannMode>& modes, int k,
                                              int tau, const FluidState& F, const BoundaryField& g,
                                              const ShiftedSolveOptions& opt = {}) {
  const int D = dom.D, K = static_cast<int>(modes.size());
  if (k < 0 || k >= K) throw std::out_of_range("solve_shifted_acoustic: mode index");
  const double c = std::sqrt((D + 2.0) / (2.0 * D));
  const cplx il = I1 * double(tau) * modes[k].lambda0;
  const auto& nodes = F.nodes;
  auto bq = dom.boundary_quadrature(opt.boundary_order);
  auto in_kernel = [&](int delta, int l) { return delta == tau && modes[l].group_id == modes[k].group_id; };

  // boundary moments c int g Psi_l
  Eigen::VectorXcd gb = Eigen::VectorXcd::Zero(K);
  cplx gflux = 0;
  for (const auto& b : bq) {
    const cplx gv = g(b.p);
    gflux += b.w * gv;
    for (int l = 0; l < K; ++l) gb(l) += b.w * gv * evaluate_mode(modes[l], b.p.x).psi;
  }
  gb *= c;

  std::vector<AcousticEigenpair> pairs[2];
  for (int l = 0; l < K; ++l) {
    pairs[0].push_back(make_eigenpair(modes[l], +1, D));
    pairs[1].push_back(make_eigenpair(modes[l], -1, D));
  }
  // normalized constant state with rho + theta != 0
  FluidPoint cst;
  cst.rho = c * D / (D + 2.0) / std::sqrt(dom.volume());
  cst.theta = c * 2.0 / (D + 2.0) / std::sqrt(dom.volume());

  // projections of F
  Eigen::MatrixXcd FU = Eigen::MatrixXcd::Zero(2, K);
  cplx Fc = 0;
  std::vector<std::vector<FluidPoint>> U(2 * K);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (int d = 0; d < 2; ++d)
      for (int l = 0; l < K; ++l) {
        FluidPoint ul = pairs[d][l].at(nodes[i].x);
        U[d * K + l].push_back(ul);
        FU(d, l) += nodes[i].w * h_density(F.f[i], ul, D);
      }
    Fc += nodes[i].w * h_density(F.f[i], cst, D);
  }

  ShiftedSolution sol;
  sol.imu = gb(k) - FU(tau == 1 ? 0 : 1, k);
  for (int l = 0; l < K; ++l)
    if (l != k && in_kernel(tau, l)) sol.compat.push_back({l, gb(l) - FU(tau == 1 ? 0 : 1, l)});

  // direct route from Green's formula
  sol.coef = Eigen::MatrixXcd::Zero(2, K);
  for (int d = 0; d < 2; ++d)
    for (int l = 0; l < K; ++l) {
      const int delta = d == 0 ? 1 : -1;
      if (in_kernel(delta, l)) continue;
      sol.coef(d, l) = (FU(d, l) - gb(l)) / (pairs[d][l].il - il);
    }
  const cplx cst_flux = std::conj(cst.rho + cst.theta) * gflux;
  sol.const_coef = (Fc - cst_flux) / (-il);

  // lift routes
  for (int v = 0; v < 2; ++v) {
    Lift L = make_lift(dom, g, v, opt.series_terms);
    Eigen::MatrixXcd AL = Eigen::MatrixXcd::Zero(2, K), LU = Eigen::MatrixXcd::Zero(2, K);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      FluidPoint lift;
      lift.u = L.u(nodes[i].x);
      const cplx lap = L.lap(nodes[i].x);
      FluidPoint Alift;
      Alift.rho = lap;
      Alift.theta = (2.0 / D) * lap;
      FluidPoint rhs = F.f[i] - (Alift - il * lift);
      for (int d = 0; d < 2; ++d)
        for (int l = 0; l < K; ++l) {
          AL(d, l) += nodes[i].w * h_density(rhs, U[d * K + l][i], D);
          LU(d, l) += nodes[i].w * h_density(lift, U[d * K + l][i], D);
        }
    }
    sol.coef_lift[v] = Eigen::MatrixXcd::Zero(2, K);
    for (int d = 0; d < 2; ++d)
      for (int l = 0; l < K; ++l) {
        const int delta = d == 0 ? 1 : -1;
        if (in_kernel(delta, l)) continue;
        sol.coef_lift[v](d, l) = AL(d, l) / (pairs[d][l].il - il) + LU(d, l);
      }
  }
  sol.lift_deviation = (sol.coef_lift[0] - sol.coef_lift[1]).cwiseAbs().maxCoeff();
  sol.route_deviation = (sol.coef_lift[0] - sol.coef).cwiseAbs().maxCoeff();

  // null part: F minus its acoustic and constant components
  sol.null_part = FluidState(D, nodes);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    FluidPoint r = F.f[i] - Fc * cst;
    for (int d = 0; d < 2; ++d)
      for (int l = 0; l < K; ++l) r = r - FU(d, l) * U[d * K + l][i];
    sol.null_part.f[i] = (-1.0 / il) * r;
  }
  return sol;
}

// evaluate the solved part V1 at a point
inline FluidPoint evaluate_solution(const ShiftedSolution& s, const Domain& dom, const std::vector<NeumannMode>& modes,
                                    const Vec2& x) {
  const int D = dom.D;
  const double c = std::sqrt((D + 2.0) / (2.0 * D));
  FluidPoint out;
  for (int d = 0; d < 2; ++d)
    for (std::size_t l = 0; l < modes.size(); ++l)
      if (s.coef(d, l) != cplx(0.0)) out += s.coef(d, l) * make_eigenpair(modes[l], d == 0 ? 1 : -1, D).at(x);
  FluidPoint cst;
  cst.rho = c * D / (D + 2.0) / std::sqrt(dom.volume());
  cst.theta = c * 2.0 / (D + 2.0) / std::sqrt(dom.volume());
  out += s.const_coef * cst;
  return out;
}

}  // namespace kdamp
