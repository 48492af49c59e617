#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace kdamp {

struct Rule1D {
  std::vector<double> x;
  std::vector<double> w;
  std::size_t size() const { return x.size(); }
};

namespace detail {

// Golub-Welsch on a symmetric tridiagonal Jacobi matrix.
inline Rule1D golub_welsch(const std::vector<long double>& a, const std::vector<long double>& b,
                           long double mu0) {
  const int n = static_cast<int>(a.size());
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) J(i, i) = static_cast<double>(a[i]);
  for (int i = 1; i < n; ++i) {
    J(i, i - 1) = J(i - 1, i) = static_cast<double>(std::sqrt(b[i]));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  Rule1D r;
  r.x.resize(n);
  r.w.resize(n);
  for (int i = 0; i < n; ++i) {
    r.x[i] = es.eigenvalues()(i);
    double v0 = es.eigenvectors()(0, i);
    r.w[i] = static_cast<double>(mu0) * v0 * v0;
  }
  return r;
}

// one Newton polish of Legendre roots, keeps nodes at machine accuracy for larger n
inline void legendre_polish(Rule1D& r) {
  const int n = static_cast<int>(r.size());
  for (int i = 0; i < n; ++i) {
    long double x = r.x[i];
    long double dp = 0;
    for (int it = 0; it < 3; ++it) {
      long double p0 = 1, p1 = x;
      for (int k = 2; k <= n; ++k) {
        long double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1;
      dp = n * (x * p1 - p0) / (x * x - 1);
      x -= p1 / dp;
    }
    r.x[i] = static_cast<double>(x);
    r.w[i] = static_cast<double>(2.0L / ((1 - x * x) * dp * dp));
  }
}

}  // namespace detail

// Gauss-Legendre on [lo, hi]
inline Rule1D gauss_legendre(int n, double lo = -1.0, double hi = 1.0) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n < 1");
  std::vector<long double> a(n, 0.0L), b(n, 0.0L);
  for (int k = 1; k < n; ++k) b[k] = static_cast<long double>(k) * k / (4.0L * k * k - 1.0L);
  Rule1D r = detail::golub_welsch(a, b, 2.0L);
  detail::legendre_polish(r);
  const double h = 0.5 * (hi - lo), c = 0.5 * (hi + lo);
  for (int i = 0; i < n; ++i) {
    r.x[i] = c + h * r.x[i];
    r.w[i] *= h;
  }
  return r;
}

// Gauss-Hermite for the probabilists' weight exp(-x^2/2)/sqrt(2 pi), total mass 1
inline Rule1D gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: n < 1");
  std::vector<long double> a(n, 0.0L), b(n, 0.0L);
  for (int k = 1; k < n; ++k) b[k] = k;
  Rule1D r = detail::golub_welsch(a, b, 1.0L);
  double s = 0;
  for (double w : r.w) s += w;
  for (double& w : r.w) w /= s;
  // exact symmetry
  for (int i = 0; i < n / 2; ++i) {
    double xm = 0.5 * (r.x[n - 1 - i] - r.x[i]);
    double wm = 0.5 * (r.w[n - 1 - i] + r.w[i]);
    r.x[i] = -xm;
    r.x[n - 1 - i] = xm;
    r.w[i] = r.w[n - 1 - i] = wm;
  }
  if (n % 2) r.x[n / 2] = 0.0;
  return r;
}

// Gauss rule for exp(-x^2/2)/sqrt(2 pi) restricted to x > 0 (mass 1/2).
// Recurrence from a discretized Stieltjes procedure in long double.
inline Rule1D half_range_hermite(int n) {
  if (n < 1) throw std::invalid_argument("half_range_hermite: n < 1");
  const int panels = 240, pts = 24;
  const long double L = 14.0L;
  Rule1D g = gauss_legendre(pts, 0.0, 1.0);
  std::vector<long double> X, W;
  X.reserve(panels * pts);
  W.reserve(panels * pts);
  const long double inv = 1.0L / std::sqrt(2.0L * std::numbers::pi_v<long double>);
  for (int p = 0; p < panels; ++p) {
    long double lo = L * p / panels, h = L / panels;
    for (int i = 0; i < pts; ++i) {
      long double x = lo + h * g.x[i];
      X.push_back(x);
      W.push_back(h * g.w[i] * std::exp(-x * x / 2) * inv);
    }
  }
  const std::size_t M = X.size();
  std::vector<long double> a(n), b(n, 0.0L), pm(M, 0.0L), pc(M, 1.0L);
  long double norm_prev = 0, mu0 = 0;
  for (std::size_t j = 0; j < M; ++j) mu0 += W[j];
  for (int k = 0; k < n; ++k) {
    long double nrm = 0, xn = 0;
    for (std::size_t j = 0; j < M; ++j) {
      nrm += W[j] * pc[j] * pc[j];
      xn += W[j] * X[j] * pc[j] * pc[j];
    }
    a[k] = xn / nrm;
    if (k > 0) b[k] = nrm / norm_prev;
    norm_prev = nrm;
    for (std::size_t j = 0; j < M; ++j) {
      long double nx = (X[j] - a[k]) * pc[j] - (k > 0 ? b[k] * pm[j] : 0.0L);
      pm[j] = pc[j];
      pc[j] = nx;
    }
  }
  Rule1D r = detail::golub_welsch(a, b, mu0);
  double s = 0;
  for (double w : r.w) s += w;
  for (double& w : r.w) w *= 0.5 / s;
  return r;
}

// symmetric full-line rule built from two half-range rules; half moments are exact
inline Rule1D double_half_hermite(int n_total) {
  if (n_total < 2 || n_total % 2) throw std::invalid_argument("double_half_hermite: need even n >= 2");
  Rule1D h = half_range_hermite(n_total / 2);
  Rule1D r;
  const int m = n_total / 2;
  for (int i = m - 1; i >= 0; --i) {
    r.x.push_back(-h.x[i]);
    r.w.push_back(h.w[i]);
  }
  for (int i = 0; i < m; ++i) {
    r.x.push_back(h.x[i]);
    r.w.push_back(h.w[i]);
  }
  return r;
}

}  // namespace kdamp
