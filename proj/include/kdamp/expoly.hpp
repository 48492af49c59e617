#pragma once

// Finite sums  sum_j c_j s^{p_j} exp(alpha_j s)  with coefficients that are
// either complex scalars or complex velocity vectors.  Closed under d/ds and
// under linear maps of the coefficients; used for interior fields in the slab
// and for every layer profile.

#include <Eigen/Dense>
#include <algorithm>
#include <complex>
#include <functional>
#include <stdexcept>
#include <vector>

namespace kdamp {

using cplx = std::complex<double>;
using VecC = Eigen::VectorXcd;

namespace detail {
template <class C>
inline C zero_like(const C& c) {
  if constexpr (std::is_same_v<C, cplx>) {
    return cplx(0.0);
  } else {
    return C::Zero(c.size());
  }
}
template <class C>
inline double mag(const C& c) {
  if constexpr (std::is_same_v<C, cplx>) {
    return std::abs(c);
  } else {
    return c.cwiseAbs().maxCoeff();
  }
}
}  // namespace detail

template <class C>
struct ExpPoly {
  struct Term {
    cplx alpha;
    int p;
    C c;
  };
  std::vector<Term> terms;

  static ExpPoly exp_term(cplx alpha, int p, const C& c) {
    ExpPoly e;
    e.terms.push_back({alpha, p, c});
    return e;
  }

  bool empty() const { return terms.empty(); }

  void add_term(cplx alpha, int p, const C& c) {
    for (auto& t : terms) {
      if (t.p == p && std::abs(t.alpha - alpha) <= 1e-13 * (1.0 + std::abs(alpha))) {
        t.c = t.c + c;
        return;
      }
    }
    terms.push_back({alpha, p, c});
  }

  ExpPoly& operator+=(const ExpPoly& o) {
    for (const auto& t : o.terms) add_term(t.alpha, t.p, t.c);
    return *this;
  }
  ExpPoly& operator-=(const ExpPoly& o) {
    for (const auto& t : o.terms) add_term(t.alpha, t.p, -t.c);
    return *this;
  }
  friend ExpPoly operator+(ExpPoly a, const ExpPoly& b) { return a += b; }
  friend ExpPoly operator-(ExpPoly a, const ExpPoly& b) { return a -= b; }
  friend ExpPoly operator*(cplx s, ExpPoly a) {
    for (auto& t : a.terms) t.c = s * t.c;
    return a;
  }

  C eval(double s) const {
    if (terms.empty()) throw std::logic_error("ExpPoly::eval on empty sum without shape");
    C acc = detail::zero_like(terms.front().c);
    for (const auto& t : terms) acc = acc + (std::pow(s, t.p) * std::exp(t.alpha * s)) * t.c;
    return acc;
  }

  C eval_or(double s, const C& zero) const { return terms.empty() ? zero : eval(s); }

  ExpPoly deriv() const {
    ExpPoly d;
    for (const auto& t : terms) {
      if (t.alpha != cplx(0.0)) d.add_term(t.alpha, t.p, t.alpha * t.c);
      if (t.p > 0) d.add_term(t.alpha, t.p - 1, double(t.p) * t.c);
    }
    return d;
  }

  ExpPoly deriv(int k) const {
    ExpPoly d = *this;
    for (int i = 0; i < k; ++i) d = d.deriv();
    return d;
  }

  // antiderivative F with F -> 0 as s -> +inf; every term must decay
  ExpPoly tail_integral() const {
    // -int_s^inf s'^p e^{a s'} ds'  is the antiderivative vanishing at infinity
    ExpPoly F;
    for (const auto& t : terms) {
      if (!(t.alpha.real() < 0)) throw std::domain_error("tail_integral: non-decaying term");
      // int s^p e^{as} = e^{as} sum_{j=0}^p (-1)^j p!/(p-j)! s^{p-j} / a^{j+1}
      double fact = 1.0;
      for (int j = 0; j <= t.p; ++j) {
        if (j > 0) fact *= double(t.p - j + 1);
        cplx coef = (j % 2 ? -1.0 : 1.0) * fact / std::pow(t.alpha, j + 1);
        F.add_term(t.alpha, t.p - j, coef * t.c);
      }
    }
    return F;
  }

  template <class F>
  auto map(F&& f) const {
    using D = std::decay_t<decltype(f(terms.front().c))>;
    ExpPoly<D> out;
    for (const auto& t : terms) out.terms.push_back({t.alpha, t.p, f(t.c)});
    return out;
  }

  void prune(double tol = 0.0) {
    terms.erase(std::remove_if(terms.begin(), terms.end(),
                               [tol](const Term& t) { return detail::mag(t.c) <= tol; }),
                terms.end());
  }

  int max_power() const {
    int p = -1;
    for (const auto& t : terms) p = std::max(p, t.p);
    return p;
  }
};

using ScalarEP = ExpPoly<cplx>;
using VectorEP = ExpPoly<VecC>;

// scalar times velocity vector
inline VectorEP outer(const ScalarEP& f, const VecC& phi) {
  VectorEP out;
  for (const auto& t : f.terms) out.add_term(t.alpha, t.p, t.c * phi);
  return out;
}

// conjugate of a scalar sum for real s
inline ScalarEP conj(const ScalarEP& f) {
  ScalarEP g;
  for (const auto& t : f.terms) g.add_term(std::conj(t.alpha), t.p, std::conj(t.c));
  return g;
}

inline ScalarEP operator*(const ScalarEP& a, const ScalarEP& b) {
  ScalarEP g;
  for (const auto& s : a.terms)
    for (const auto& t : b.terms) g.add_term(s.alpha + t.alpha, s.p + t.p, s.c * t.c);
  return g;
}

// int_a^b f(s) ds; exponents below 1e-12 in modulus are treated as zero
inline cplx integrate(const ScalarEP& f, double a, double b) {
  cplx acc = 0;
  for (const auto& t : f.terms) {
    if (std::abs(t.alpha) < 1e-12) {
      acc += t.c * (std::pow(b, t.p + 1) - std::pow(a, t.p + 1)) / double(t.p + 1);
      continue;
    }
    double fact = 1.0;
    for (int j = 0; j <= t.p; ++j) {
      if (j > 0) fact *= double(t.p - j + 1);
      const cplx coef = (j % 2 ? -1.0 : 1.0) * fact / std::pow(t.alpha, j + 1);
      const int q = t.p - j;
      acc += t.c * coef * (std::pow(b, q) * std::exp(t.alpha * b) - std::pow(a, q) * std::exp(t.alpha * a));
    }
  }
  return acc;
}

// Particular solution of  a y'' - b y = f  with f an ExpPoly; resonant
// exponentials (alpha^2 a = b) get the polynomial degree raised by one.
inline ScalarEP solve_second_order(cplx a, cplx b, const ScalarEP& f) {
  ScalarEP y;
  // group terms by exponent
  std::vector<cplx> alphas;
  for (const auto& t : f.terms) {
    bool seen = false;
    for (auto al : alphas)
      if (std::abs(al - t.alpha) <= 1e-13 * (1.0 + std::abs(al))) seen = true;
    if (!seen) alphas.push_back(t.alpha);
  }
  for (cplx al : alphas) {
    int P = -1;
    for (const auto& t : f.terms)
      if (std::abs(al - t.alpha) <= 1e-13 * (1.0 + std::abs(al))) P = std::max(P, t.p);
    std::vector<cplx> rhs(P + 1, 0.0);
    for (const auto& t : f.terms)
      if (std::abs(al - t.alpha) <= 1e-13 * (1.0 + std::abs(al))) rhs[t.p] += t.c;
    // (d/ds) on s^k e^{al s}: al s^k + k s^{k-1}
    // L[s^k e] = a(al^2 s^k + 2 al k s^{k-1} + k(k-1) s^{k-2}) - b s^k
    const cplx c0 = a * al * al - b;
    const bool resonant = std::abs(c0) <= 1e-12 * (std::abs(a * al * al) + std::abs(b));
    const int Q = resonant ? P + 1 : P;
    // unknowns q_0..q_Q ; when resonant q_0 is free (homogeneous), pin it to 0
    const int n = Q + 1;
    Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(P + 1, n);
    for (int k = 0; k <= Q; ++k) {
      if (k <= P) M(k, k) += c0;
      if (k >= 1 && k - 1 <= P) M(k - 1, k) += a * 2.0 * al * double(k);
      if (k >= 2 && k - 2 <= P) M(k - 2, k) += a * double(k) * double(k - 1);
    }
    Eigen::VectorXcd r(P + 1);
    for (int k = 0; k <= P; ++k) r(k) = rhs[k];
    Eigen::VectorXcd q = Eigen::VectorXcd::Zero(n);
    if (resonant) {
      // drop column 0
      Eigen::MatrixXcd Ms = M.rightCols(n - 1);
      q.tail(n - 1) = Ms.colPivHouseholderQr().solve(r);
      // if a*al = 0 as well (double root) the system is degenerate; not used here
    } else {
      q = M.colPivHouseholderQr().solve(r);
    }
    for (int k = 0; k < n; ++k)
      if (q(k) != cplx(0.0)) y.add_term(al, k, q(k));
  }
  return y;
}

}  // namespace kdamp
