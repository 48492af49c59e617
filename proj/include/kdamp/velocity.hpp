#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "quadrature.hpp"

namespace kdamp {

enum class VelocityRule { GaussHermite, HalfRange };

inline VelocityRule parse_velocity_rule(const std::string& s) {
  if (s == "gauss_hermite" || s == "full") return VelocityRule::GaussHermite;
  if (s == "half_range" || s == "double_half") return VelocityRule::HalfRange;
  throw std::invalid_argument("unknown velocity rule '" + s + "'");
}

// Tensor quadrature of M dv plus the discrete collision invariants.
class VelocityGrid {
 public:
  int D = 2;
  int Q = 8;
  VelocityRule rule = VelocityRule::GaussHermite;
  Eigen::MatrixXd V;  // N x D nodes
  Eigen::VectorXd w;  // N weights
  Eigen::VectorXd v2;  // |v|^2 per node
  Eigen::MatrixXd E;  // N x (D+2), orthonormal invariants under w
  std::vector<std::vector<int>> mirror;  // mirror[j][q]: node with component j flipped

  int size() const { return static_cast<int>(w.size()); }
  int n_invariants() const { return D + 2; }

  template <class Vec>
  typename Vec::Scalar bracket(const Vec& f) const {
    return (w.array().template cast<typename Vec::Scalar>() * f.array()).sum();
  }

  // sqrt(2 pi) sum w f (n.v), the signed boundary moment
  template <class Vec>
  typename Vec::Scalar boundary_average(const Eigen::VectorXd& n, const Vec& f) const {
    const Eigen::VectorXd vn = V * n;
    typename Vec::Scalar s(0);
    for (int q = 0; q < size(); ++q) s += (w(q) * vn(q)) * f(q);
    return std::sqrt(2 * std::numbers::pi) * s;
  }

  // same with |n.v|, restricted to one half: sign=+1 outgoing, -1 incoming
  template <class Vec>
  typename Vec::Scalar half_boundary_average(const Eigen::VectorXd& n, const Vec& f, int sign) const {
    const Eigen::VectorXd vn = V * n;
    typename Vec::Scalar s(0);
    for (int q = 0; q < size(); ++q)
      if (sign * vn(q) > 0) s += (w(q) * std::abs(vn(q))) * f(q);
    return std::sqrt(2 * std::numbers::pi) * s;
  }

  template <class Vec>
  Vec project_hydro(const Vec& g) const {
    using S = typename Vec::Scalar;
    Eigen::Matrix<S, Eigen::Dynamic, 1> c = E.transpose().template cast<S>() * (w.template cast<S>().cwiseProduct(g));
    return E.template cast<S>() * c;
  }

  // (rho, u, theta) with P g = rho + u.v + theta(|v|^2/2 - D/2)
  template <class Vec>
  Eigen::Matrix<typename Vec::Scalar, Eigen::Dynamic, 1> fluid_moments(const Vec& g) const {
    using S = typename Vec::Scalar;
    Eigen::Matrix<S, Eigen::Dynamic, 1> m(D + 2);
    m(0) = bracket(g);
    for (int j = 0; j < D; ++j) m(1 + j) = bracket(Vec(V.col(j).template cast<S>().cwiseProduct(g)));
    Eigen::VectorXd h = v2 / D - Eigen::VectorXd::Ones(size());
    m(D + 1) = bracket(Vec(h.template cast<S>().cwiseProduct(g)));
    return m;
  }

  template <class S>
  Eigen::Matrix<S, Eigen::Dynamic, 1> maxwellian(S rho, const Eigen::Matrix<S, Eigen::Dynamic, 1>& u, S theta) const {
    Eigen::Matrix<S, Eigen::Dynamic, 1> g(size());
    for (int q = 0; q < size(); ++q) {
      S s = rho + theta * (0.5 * v2(q) - 0.5 * D);
      for (int j = 0; j < D; ++j) s += u(j) * V(q, j);
      g(q) = s;
    }
    return g;
  }

  // weighted inner product sum w f g (bilinear, no conjugation)
  template <class A, class B>
  auto dot(const A& f, const B& g) const {
    using S = decltype(typename A::Scalar() * typename B::Scalar());
    S s(0);
    for (int q = 0; q < size(); ++q) s += w(q) * (f(q) * g(q));
    return s;
  }

  int reflect(int q, const Eigen::VectorXd& n) const {
    for (int j = 0; j < D; ++j)
      if (std::abs(std::abs(n(j)) - 1.0) < 1e-14) return mirror[j][q];
    throw std::invalid_argument("reflect: only axis-aligned normals are supported on the grid");
  }
};

inline VelocityGrid make_velocity_grid(int D, int Q, VelocityRule rule = VelocityRule::GaussHermite) {
  if (D < 2 || D > 3) throw std::invalid_argument("make_velocity_grid: D must be 2 or 3");
  if (Q < 4 || Q > 64) throw std::invalid_argument("make_velocity_grid: Q must be in [4,64]");
  if (rule == VelocityRule::HalfRange && Q % 2) throw std::invalid_argument("make_velocity_grid: half-range rule needs even Q");
  VelocityGrid g;
  g.D = D;
  g.Q = Q;
  g.rule = rule;
  Rule1D r = rule == VelocityRule::GaussHermite ? gauss_hermite(Q) : double_half_hermite(Q);
  int N = 1;
  for (int j = 0; j < D; ++j) N *= Q;
  g.V.resize(N, D);
  g.w.resize(N);
  g.mirror.assign(D, std::vector<int>(N));
  for (int q = 0; q < N; ++q) {
    int rem = q, stride = N;
    double wq = 1;
    for (int j = 0; j < D; ++j) {
      stride /= Q;
      int i = rem / stride;
      rem %= stride;
      g.V(q, j) = r.x[i];
      wq *= r.w[i];
    }
    g.w(q) = wq;
  }
  // nodes are symmetric: index i <-> Q-1-i per axis
  for (int q = 0; q < N; ++q) {
    int stride = N;
    for (int j = 0; j < D; ++j) {
      stride /= Q;
      int i = (q / stride) % Q;
      g.mirror[j][q] = q + (Q - 1 - 2 * i) * stride;
    }
  }
  g.v2 = g.V.rowwise().squaredNorm();
  // weighted Gram-Schmidt on {1, v, |v|^2}, two passes
  Eigen::MatrixXd B(N, D + 2);
  B.col(0).setOnes();
  for (int j = 0; j < D; ++j) B.col(1 + j) = g.V.col(j);
  B.col(D + 1) = g.v2;
  for (int pass = 0; pass < 2; ++pass) {
    for (int c = 0; c < D + 2; ++c) {
      for (int p = 0; p < c; ++p) B.col(c) -= (g.w.cwiseProduct(B.col(p)).dot(B.col(c))) * B.col(p);
      B.col(c) /= std::sqrt(g.w.cwiseProduct(B.col(c)).dot(B.col(c)));
    }
  }
  g.E = B;
  return g;
}

}  // namespace kdamp
