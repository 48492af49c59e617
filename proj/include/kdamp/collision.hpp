#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "velocity.hpp"

namespace kdamp {

// A_ij = v_i v_j - |v|^2 delta_ij / D, B_i = (|v|^2 - D - 2) v_i / 2, C as below
struct ABC {
  int D = 2;
  std::vector<Eigen::VectorXd> A;  // D*D entries, index i*D+j
  std::vector<Eigen::VectorXd> B;  // D entries
  Eigen::VectorXd C;
  const Eigen::VectorXd& a(int i, int j) const { return A[i * D + j]; }
};

inline ABC build_ABC(const VelocityGrid& g) {
  ABC r;
  r.D = g.D;
  const int D = g.D;
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j) {
      Eigen::VectorXd a = g.V.col(i).cwiseProduct(g.V.col(j));
      if (i == j) a -= g.v2 / D;
      r.A.push_back(a);
    }
  for (int i = 0; i < D; ++i)
    r.B.push_back(0.5 * (g.v2.array() - (D + 2.0)).matrix().cwiseProduct(g.V.col(i)));
  r.C = (0.25 * g.v2.array().square() - 0.5 * (D + 2.0) * g.v2.array() + 0.25 * D * (D + 2.0)).matrix();
  return r;
}

enum class CollisionKind { BGK, MultiRate };

struct CollisionSpec {
  CollisionKind kind = CollisionKind::BGK;
  double a0 = 1.0;
  double sigma_a = 1.0, sigma_b = 1.0, sigma_0 = 1.0;
};

inline std::string to_string(CollisionKind k) { return k == CollisionKind::BGK ? "bgk" : "multirate"; }

inline CollisionKind parse_collision_kind(const std::string& s) {
  if (s == "bgk" || s == "BGK") return CollisionKind::BGK;
  if (s == "multirate" || s == "MultiRate" || s == "multi_rate") return CollisionKind::MultiRate;
  throw std::invalid_argument("unknown collision kind '" + s + "'");
}

struct TransportCoefficients {
  double nu = 0, kappa = 0;
};

struct FluxReport {
  double max_dev_A = 0;  // <A_ij Ahat_kl> identity
  double max_dev_B = 0;  // <B_i Bhat_j> identity
  double max_dev() const { return std::max(max_dev_A, max_dev_B); }
};

// Spectral relaxation operator on a fixed velocity grid.
class CollisionModel {
 public:
  CollisionSpec spec;
  VelocityGrid grid;  // own copy, keeps the model self-contained
  Eigen::MatrixXd Ea, Eb;  // orthonormal bases of span{A_ij}, span{B_i}
  ABC abc;

  double rate_A() const { return spec.kind == CollisionKind::BGK ? spec.a0 : spec.sigma_a; }
  double rate_B() const { return spec.kind == CollisionKind::BGK ? spec.a0 : spec.sigma_b; }
  double rate_0() const { return spec.kind == CollisionKind::BGK ? spec.a0 : spec.sigma_0; }

  // condition number of L on the orthogonal complement of the null space
  double condition_number() const {
    const double r[3] = {rate_A(), rate_B(), rate_0()};
    return *std::max_element(r, r + 3) / *std::min_element(r, r + 3);
  }

  // g -> f(rate) applied spectrally; fnull multiplies the hydrodynamic part
  template <class Vec, class F>
  Vec spectral(const Vec& g, F&& f, double fnull) const {
    using S = typename Vec::Scalar;
    const auto& G = grid;
    Vec wg = G.w.template cast<S>().cwiseProduct(g);
    Vec Pg = G.E.template cast<S>() * (G.E.transpose().template cast<S>() * wg);
    Vec Ag = Ea.template cast<S>() * (Ea.transpose().template cast<S>() * wg);
    Vec Bg = Eb.template cast<S>() * (Eb.transpose().template cast<S>() * wg);
    const double f0 = f(rate_0()), fa = f(rate_A()), fb = f(rate_B());
    Vec out = S(f0) * (g - Pg) + S(fa - f0) * Ag + S(fb - f0) * Bg;
    if (fnull != 0) out += S(fnull) * Pg;
    return out;
  }

  template <class Vec>
  Vec apply(const Vec& g) const {
    return spectral(g, [](double r) { return r; }, 0.0);
  }

  template <class Vec>
  Vec pseudo_inverse(const Vec& f, double tol = 1e-8) const {
    Vec Pf = grid.project_hydro(f);
    double scale = std::max(1.0, static_cast<double>(f.cwiseAbs().maxCoeff()));
    if (Pf.cwiseAbs().maxCoeff() > tol * scale)
      throw std::domain_error("pseudo_inverse: input has a hydrodynamic component");
    return spectral(f, [](double r) { return 1.0 / r; }, 0.0);
  }

  // exp(-h L) g
  template <class Vec>
  Vec relax(const Vec& g, double h) const {
    return spectral(g, [h](double r) { return std::exp(-h * r); }, 1.0);
  }

  Eigen::MatrixXd dense() const {
    const int N = grid.size();
    Eigen::MatrixXd L(N, N);
    for (int q = 0; q < N; ++q) L.col(q) = apply(Eigen::VectorXd(Eigen::VectorXd::Unit(N, q)));
    return L;
  }
};

namespace detail {
inline Eigen::MatrixXd weighted_orthonormal(const std::vector<Eigen::VectorXd>& fs, const Eigen::VectorXd& w,
                                            double drop = 1e-10) {
  std::vector<Eigen::VectorXd> out;
  for (const auto& f0 : fs) {
    Eigen::VectorXd f = f0;
    const double n0 = std::sqrt(w.cwiseProduct(f).dot(f));
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& e : out) f -= w.cwiseProduct(e).dot(f) * e;
    const double n = std::sqrt(w.cwiseProduct(f).dot(f));
    if (n > drop * std::max(1.0, n0)) out.push_back(f / n);
  }
  Eigen::MatrixXd M(w.size(), out.size());
  for (std::size_t i = 0; i < out.size(); ++i) M.col(i) = out[i];
  return M;
}
}  // namespace detail

inline CollisionModel make_collision(const VelocityGrid& g, const CollisionSpec& spec) {
  if (spec.kind == CollisionKind::BGK && !(spec.a0 > 0)) throw std::invalid_argument("collision: a0 must be > 0");
  if (spec.kind == CollisionKind::MultiRate && !(spec.sigma_a > 0 && spec.sigma_b > 0 && spec.sigma_0 > 0))
    throw std::invalid_argument("collision: rates must be > 0");
  CollisionModel m;
  m.spec = spec;
  m.grid = g;
  m.abc = build_ABC(g);
  // strip the invariant part first so the subspaces are exactly orthogonal to Null(L)
  auto perp = [&](Eigen::VectorXd f) { return Eigen::VectorXd(f - g.project_hydro(f)); };
  std::vector<Eigen::VectorXd> as, bs;
  for (int i = 0; i < g.D; ++i)
    for (int j = i; j < g.D; ++j) as.push_back(perp(m.abc.a(i, j)));
  for (int i = 0; i < g.D; ++i) bs.push_back(perp(m.abc.B[i]));
  m.Ea = detail::weighted_orthonormal(as, g.w);
  // B span made orthogonal to the A span as well
  Eigen::MatrixXd Ea = m.Ea;
  for (auto& b : bs) b -= Ea * (Ea.transpose() * g.w.cwiseProduct(b));
  m.Eb = detail::weighted_orthonormal(bs, g.w);
  return m;
}

struct HatFunctions {
  std::vector<Eigen::VectorXd> Ahat;  // D*D
  std::vector<Eigen::VectorXd> Bhat;  // D
};

inline HatFunctions hat_functions(const CollisionModel& m) {
  HatFunctions h;
  for (const auto& a : m.abc.A) h.Ahat.push_back(m.pseudo_inverse(a));
  for (const auto& b : m.abc.B) h.Bhat.push_back(m.pseudo_inverse(b));
  return h;
}

// nu = <Ahat:A>/((D-1)(D+2)),  kappa = 2<Bhat.B>/(D(D+2))
inline TransportCoefficients transport_coefficients(const CollisionModel& m) {
  const auto& g = m.grid;
  const int D = g.D;
  HatFunctions h = hat_functions(m);
  double sa = 0, sb = 0;
  for (int i = 0; i < D * D; ++i) sa += g.dot(h.Ahat[i], m.abc.A[i]);
  for (int i = 0; i < D; ++i) sb += g.dot(h.Bhat[i], m.abc.B[i]);
  return {sa / ((D - 1.0) * (D + 2.0)), 2.0 * sb / (D * (D + 2.0))};
}

// <Bhat.L Bhat>/D, kept for comparison with the normalization above
inline double kappa_unnormalized(const CollisionModel& m) {
  const auto& g = m.grid;
  HatFunctions h = hat_functions(m);
  double s = 0;
  for (int i = 0; i < g.D; ++i) s += g.dot(h.Bhat[i], m.apply(h.Bhat[i]));
  return s / g.D;
}

inline FluxReport verify_flux_identities(const CollisionModel& m) {
  const auto& g = m.grid;
  const int D = g.D;
  const TransportCoefficients tc = transport_coefficients(m);
  HatFunctions h = hat_functions(m);
  FluxReport r;
  auto dl = [](int a, int b) { return a == b ? 1.0 : 0.0; };
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j)
      for (int k = 0; k < D; ++k)
        for (int l = 0; l < D; ++l) {
          double lhs = g.dot(m.abc.a(i, j), h.Ahat[k * D + l]);
          double rhs = tc.nu * (dl(i, k) * dl(j, l) + dl(i, l) * dl(j, k) - (2.0 / D) * dl(i, j) * dl(k, l));
          r.max_dev_A = std::max(r.max_dev_A, std::abs(lhs - rhs));
        }
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j) {
      double lhs = g.dot(m.abc.B[i], h.Bhat[j]);
      double rhs = 0.5 * (D + 2.0) * tc.kappa * dl(i, j);
      r.max_dev_B = std::max(r.max_dev_B, std::abs(lhs - rhs));
    }
  return r;
}

}  // namespace kdamp
