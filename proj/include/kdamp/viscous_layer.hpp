#pragma once

#include <cmath>
#include <complex>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "acoustic.hpp"
#include "domain.hpp"
#include "expoly.hpp"
#include "neumann.hpp"

namespace kdamp {

struct LayerParams {
  double nu = 1, kappa = 1, chi = 1;
  int D = 2;
  void check() const {
    if (!(nu > 0 && kappa > 0 && chi > 0)) throw std::invalid_argument("layer parameters must be positive");
  }
  // Robin coefficient of the temperature condition
  double beta() const { return (D + 2.0) / (D + 1.0) * kappa / chi; }
  double kappa_tilde() const { return std::pow((D + 2.0) / (D + 1.0), 2) * kappa; }
};

// f(zeta) as a finite exponential sum; every rate has positive real part
struct LayerProfile {
  ScalarEP f;
  cplx eval(double z) const { return f.eval_or(z, cplx(0.0)); }
  bool decays() const {
    for (const auto& t : f.terms)
      if (!(t.alpha.real() < 0)) return false;
    return true;
  }
};

// decay rate of (coef d^2/dz^2 - i lambda0) f = 0
inline cplx layer_rate(double lambda0, int tau, double coef) {
  return cplx(1.0, double(tau)) * std::sqrt(lambda0 / (2.0 * coef));
}

// (nu f'' - i lambda0 f) = 0, f - (nu/chi) f' = -datum at 0, decay
inline LayerProfile tangential_velocity_profile(cplx datum, double lambda0, int tau, const LayerParams& p) {
  p.check();
  if (!(lambda0 > 0)) throw std::invalid_argument("lambda0 must be positive");
  const cplx r = layer_rate(lambda0, tau, p.nu);
  LayerProfile L;
  const cplx A = -datum / (1.0 + p.nu / p.chi * r);
  if (A != cplx(0.0)) L.f.add_term(-r, 0, A);
  return L;
}

inline LayerProfile temperature_profile(cplx theta_int, double lambda0, int tau, const LayerParams& p) {
  p.check();
  if (!(lambda0 > 0)) throw std::invalid_argument("lambda0 must be positive");
  const cplx r = layer_rate(lambda0, tau, p.kappa);
  LayerProfile L;
  const cplx A = -theta_int / (1.0 + p.beta() * r);
  if (A != cplx(0.0)) L.f.add_term(-r, 0, A);
  return L;
}

// General layer ODE  coef f'' - il0 f = forcing,  f(0) - robin f'(0) = datum,  decay.
inline LayerProfile solve_robin_layer(double coef, cplx il0, const ScalarEP& forcing, double robin, cplx datum) {
  const cplx r = std::sqrt(il0 / coef);  // principal root has positive real part
  LayerProfile L;
  L.f = solve_second_order(coef, il0, forcing);
  const cplx fp0 = L.f.terms.empty() ? cplx(0.0) : L.f.eval(0.0);
  const cplx dfp0 = L.f.terms.empty() ? cplx(0.0) : L.f.deriv().eval(0.0);
  // homogeneous A e^{-r z}: A (1 + robin r) = datum - (fp0 - robin dfp0)
  const cplx A = (datum - (fp0 - robin * dfp0)) / (1.0 + robin * r);
  if (A != cplx(0.0)) L.f.add_term(-r, 0, A);
  L.f.prune(0.0);
  return L;
}

// residuals by finite differences on a zeta grid, independent of the closed form
struct ProfileCheck {
  double ode = 0, robin = 0, tail = 0;
};

inline ProfileCheck check_profile(const LayerProfile& L, double coef, cplx il0, const ScalarEP& forcing, double robin,
                                  cplx datum) {
  ProfileCheck c;
  const double h = 1e-3;
  double scale = 1e-300;
  for (int i = 1; i <= 200; ++i) {
    const double z = 0.05 * i;
    const cplx f0 = L.eval(z), fp = L.eval(z + h), fm = L.eval(z - h);
    const cplx f2p = L.eval(z + 2 * h), f2m = L.eval(z - 2 * h);
    const cplx d2 = (-f2p + 16.0 * fp - 30.0 * f0 + 16.0 * fm - f2m) / (12 * h * h);
    const cplx rhs = forcing.eval_or(z, cplx(0.0));
    c.ode = std::max(c.ode, std::abs(coef * d2 - il0 * f0 - rhs));
    scale = std::max(scale, std::abs(il0 * f0) + std::abs(rhs));
  }
  c.ode /= std::max(1.0, scale);
  // one-sided derivative at the wall
  const double hh = 1e-4;
  const cplx d1 = (-25.0 * L.eval(0) + 48.0 * L.eval(hh) - 36.0 * L.eval(2 * hh) + 16.0 * L.eval(3 * hh) -
                   3.0 * L.eval(4 * hh)) /
                  (12 * hh);
  c.robin = std::abs(L.eval(0) - robin * d1 - datum);
  c.tail = std::abs(L.eval(60.0 / std::max(1e-3, std::abs(std::sqrt(il0 / coef)))));
  return c;
}

// tangential divergence of the tangential gradient, valid under the Neumann condition
inline double surface_laplacian(const NeumannMode& m, const BoundaryPoint& b) {
  ModeValue v = evaluate_mode(m, b.x);
  return b.t.dot(v.hess * b.t);
}

// Z1 = -u1^b.n at the wall = int_0^inf [div_pi u0^b + i lambda0 theta0^b] dzeta
inline cplx normal_flux_Z1(const NeumannMode& m, int tau, const LayerParams& p, const BoundaryPoint& b) {
  const int D = p.D;
  AcousticEigenpair U = make_eigenpair(m, tau, D);
  const double psi = evaluate_mode(m, b.x).psi;
  // u0^int tangential is c grad_pi Psi/(i lambda); its surface divergence:
  const cplx div_tan = U.c / U.il * surface_laplacian(m, b);
  const cplx theta_int = U.c * (2.0 / (D + 2.0)) * psi;
  LayerProfile du = tangential_velocity_profile(div_tan, m.lambda0, tau, p);
  LayerProfile th = temperature_profile(theta_int, m.lambda0, tau, p);
  ScalarEP integrand = du.f + U.il * th.f;
  if (integrand.empty()) return 0.0;
  return -integrand.tail_integral().eval(0.0);
}

// printed form of Z1 with c_chi, used only as a cross-check
inline cplx normal_flux_Z1_printed(const NeumannMode& m, int tau, const LayerParams& p, const BoundaryPoint& b) {
  const int D = p.D;
  AcousticEigenpair U = make_eigenpair(m, tau, D);
  const double lam = m.lambda0;
  const cplx cchi = -cplx(1.0, tau) / (2 * p.chi) * std::sqrt(2 * lam);
  const cplx div_tan = U.c / U.il * surface_laplacian(m, b);
  const cplx theta_int = U.c * (2.0 / (D + 2.0)) * evaluate_mode(m, b.x).psi;
  return cplx(1.0, -tau) / std::sqrt(2 * lam) *
         (div_tan * std::sqrt(p.nu) / (cchi * std::sqrt(p.nu) - 1.0) +
          I1 * double(tau) * lam * theta_int * std::sqrt(p.kappa) / (cchi * std::sqrt(p.kappa_tilde()) - 1.0));
}

struct DampingCoefficient {
  std::string domain;
  int k = 0, tau = 1;
  double lambda0 = 0;
  cplx il1 = 0;          // closed form
  cplx il1_surface = 0;  // c int Z1 Psi
  cplx Lambda1 = 0, Lambda2 = 0;
  double a = 0, b = 0, kappa_tilde = 0;
  double integral_grad = 0;  // int |grad_pi Psi|^2
  double integral_psi = 0;   // int (2/(D+2)) lambda0^2 Psi^2
};

inline DampingCoefficient damping_coefficient(const Domain& dom, const NeumannMode& m, int tau, const LayerParams& p,
                                              int boundary_order = 64) {
  p.check();
  if (tau != 1 && tau != -1) throw std::invalid_argument("tau must be +1 or -1");
  const int D = p.D;
  const double lam = m.lambda0;
  const double c2 = (D + 2.0) / (2.0 * D);
  DampingCoefficient d;
  d.domain = to_string(dom.kind);
  d.k = m.k;
  d.tau = tau;
  d.lambda0 = lam;
  d.a = std::sqrt(2 * lam * p.nu) / (2 * p.chi);
  d.b = std::sqrt(2 * lam * p.kappa) / (2 * p.chi) * (D + 2.0) / (D + 1.0);
  d.kappa_tilde = p.kappa_tilde();
  const double s3 = std::sqrt(2 * lam * lam * lam);
  d.Lambda1 = -std::sqrt(p.nu) / s3 * cplx(2 * d.a + 1, tau) / ((d.a + 1) * (d.a + 1) + d.a * d.a) * c2;
  d.Lambda2 = -std::sqrt(p.kappa) / s3 * cplx(2 * d.b + 1, tau) / ((d.b + 1) * (d.b + 1) + d.b * d.b) * c2;
  const double c = std::sqrt(c2);
  for (const auto& q : dom.boundary_quadrature(boundary_order)) {
    ModeValue v = evaluate_mode(m, q.p.x);
    d.integral_grad += q.w * tangential_gradient(v.grad, q.p).squaredNorm();
    d.integral_psi += q.w * (2.0 / (D + 2.0)) * lam * lam * v.psi * v.psi;
    d.il1_surface += q.w * c * normal_flux_Z1(m, tau, p, q.p) * v.psi;
  }
  d.il1 = d.Lambda1 * d.integral_grad + d.Lambda2 * d.integral_psi;
  if (!(d.il1.real() < 0))
    throw std::runtime_error("damping coefficient has nonnegative real part for mode " + std::to_string(m.k));
  return d;
}

inline void write_damping_csv(std::ostream& os, const std::vector<DampingCoefficient>& rows) {
  os << "domain,k,tau,lambda0,Re_il1,Im_il1,integral_grad,integral_psi\n";
  os.precision(17);
  for (const auto& r : rows)
    os << r.domain << ',' << r.k << ',' << (r.tau > 0 ? "+" : "-") << ',' << r.lambda0 << ',' << r.il1.real() << ','
       << r.il1.imag() << ',' << r.integral_grad << ',' << r.integral_psi << '\n';
}

}  // namespace kdamp
