#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/bessel_prime.hpp>
#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "domain.hpp"

namespace kdamp {

struct ModeValue {
  double psi = 0;
  Vec2 grad = Vec2::Zero();
  Eigen::Matrix2d hess = Eigen::Matrix2d::Zero();
};

struct NeumannMode {
  int k = 0;  // 1-based position in the sorted list
  double mu = 0;
  double lambda0 = 0;  // sqrt((D+2)/D mu)
  int group_id = 0;
  int degeneracy = 1;
  // shape data
  DomainKind kind = DomainKind::Slab;
  int m = 0, n = 0;  // slab: n; rectangle: (m,n); disk: angular m, radial n (1-based)
  bool sine = false;  // disk: sin(m phi) instead of cos
  double alpha = 0;   // disk radial wavenumber
  double norm = 1;
  double Lx = 1, Ly = 1, R = 1;

  std::string label() const {
    switch (kind) {
      case DomainKind::Slab: return "n=" + std::to_string(n);
      case DomainKind::Rectangle: return "(" + std::to_string(m) + "," + std::to_string(n) + ")";
      case DomainKind::Disk:
        return "m=" + std::to_string(m) + ",s=" + std::to_string(n) + (sine ? ",sin" : ",cos");
    }
    return "?";
  }
};

namespace detail {

inline double besselj(int m, double z) { return boost::math::cyl_bessel_j(m, z); }
inline double besseljp(int m, double z) { return boost::math::cyl_bessel_j_prime(m, z); }

// zeros of J'_m on (0, zmax], bracketed on a uniform grid then bisected
inline std::vector<double> bessel_prime_zeros(int m, int count) {
  std::vector<double> z;
  double h = 0.05, a = 1e-3;
  double fa = besseljp(m, a);
  while (static_cast<int>(z.size()) < count) {
    double b = a + h, fb = besseljp(m, b);
    if (fa == 0) {
      z.push_back(a);
    } else if (fa * fb < 0) {
      double lo = a, hi = b, flo = fa;
      while (hi - lo > 1e-13 * std::max(1.0, hi)) {
        double mid = 0.5 * (lo + hi), fm = besseljp(m, mid);
        if (fm == 0) {
          lo = hi = mid;
          break;
        }
        if (flo * fm < 0) {
          hi = mid;
        } else {
          lo = mid;
          flo = fm;
        }
      }
      z.push_back(0.5 * (lo + hi));
    }
    a = b;
    fa = fb;
    if (a > 1e4) throw std::runtime_error("bessel_prime_zeros: bracketing failed");
  }
  return z;
}

}  // namespace detail

inline ModeValue evaluate_mode(const NeumannMode& md, const Vec2& x) {
  ModeValue v;
  switch (md.kind) {
    case DomainKind::Slab: {
      const double q = md.n * std::numbers::pi;
      v.psi = md.norm * std::cos(q * x(0));
      v.grad = Vec2(-md.norm * q * std::sin(q * x(0)), 0.0);
      v.hess(0, 0) = -md.norm * q * q * std::cos(q * x(0));
      break;
    }
    case DomainKind::Rectangle: {
      const double a = md.m * std::numbers::pi / md.Lx, b = md.n * std::numbers::pi / md.Ly;
      const double cx = std::cos(a * x(0)), sx = std::sin(a * x(0));
      const double cy = std::cos(b * x(1)), sy = std::sin(b * x(1));
      v.psi = md.norm * cx * cy;
      v.grad = md.norm * Vec2(-a * sx * cy, -b * cx * sy);
      v.hess(0, 0) = -md.norm * a * a * cx * cy;
      v.hess(1, 1) = -md.norm * b * b * cx * cy;
      v.hess(0, 1) = v.hess(1, 0) = md.norm * a * b * sx * sy;
      break;
    }
    case DomainKind::Disk: {
      const double r = x.norm();
      const double phi = std::atan2(x(1), x(0));
      const int m = md.m;
      const double th = md.sine ? std::sin(m * phi) : std::cos(m * phi);
      const double thp = md.sine ? m * std::cos(m * phi) : -m * std::sin(m * phi);
      const double z = md.alpha * r;
      const double J = detail::besselj(m, z);
      const double Jp = detail::besseljp(m, z);
      // J_m(z)/z regular form
      double Joz;
      if (m == 0) {
        Joz = 0;  // unused
      } else {
        Joz = (detail::besselj(m - 1, z) + detail::besselj(m + 1, z)) / (2.0 * m);
      }
      v.psi = md.norm * J * th;
      const Vec2 er(std::cos(phi), std::sin(phi)), ep(-std::sin(phi), std::cos(phi));
      const double dr = md.norm * md.alpha * Jp * th;
      const double dphi_over_r = (m == 0) ? 0.0 : md.norm * md.alpha * Joz * thp;
      if (r < 1e-300) {
        // gradient at the centre: only m = 1 survives, J_1(z)/z -> 1/2
        v.grad = Vec2::Zero();
        if (m == 1) {
          double c = md.norm * md.alpha * 0.5;
          v.grad = md.sine ? Vec2(0, c) : Vec2(c, 0);
        }
      } else {
        v.grad = dr * er + dphi_over_r * ep;
      }
      if (r > 1e-6) {
        const double Jpp = -Jp / z - (1.0 - double(m * m) / (z * z)) * J;
        const double thpp = -double(m * m) * th;
        const double Prr = md.norm * md.alpha * md.alpha * Jpp * th;
        const double Pr = dr;
        const double Pp = md.norm * J * thp;
        const double Ppp = md.norm * J * thpp;
        const double Prp = md.norm * md.alpha * Jp * thp;
        const double cpp = Pr / r + Ppp / (r * r);
        const double crp = Prp / r - Pp / (r * r);
        v.hess = Prr * er * er.transpose() + cpp * ep * ep.transpose() +
                 crp * (er * ep.transpose() + ep * er.transpose());
      } else {
        // finite difference of the regular gradient near the centre
        const double h = 1e-5;
        for (int j = 0; j < 2; ++j) {
          Vec2 e = Vec2::Zero();
          e(j) = h;
          Vec2 gp = evaluate_mode(md, x + e + Vec2(2e-6, 3e-6)).grad;
          Vec2 gm = evaluate_mode(md, x - e + Vec2(2e-6, 3e-6)).grad;
          v.hess.col(j) = (gp - gm) / (2 * h);
        }
        v.hess = 0.5 * (v.hess + v.hess.transpose()).eval();
      }
      break;
    }
  }
  return v;
}

inline std::vector<NeumannMode> compute_modes(const Domain& dom, int count, double group_tol = 1e-9) {
  if (count < 1) throw std::invalid_argument("compute_modes: count < 1");
  if (!(group_tol > 0)) throw std::invalid_argument("compute_modes: group_tol <= 0");
  std::vector<NeumannMode> cand;
  const int M = count + 3;
  switch (dom.kind) {
    case DomainKind::Slab:
      for (int n = 1; n <= M; ++n) {
        NeumannMode md;
        md.kind = dom.kind;
        md.n = n;
        md.mu = n * n * std::numbers::pi * std::numbers::pi;
        md.norm = std::sqrt(2.0);
        cand.push_back(md);
      }
      break;
    case DomainKind::Rectangle:
      for (int m = 0; m <= M; ++m)
        for (int n = 0; n <= M; ++n) {
          if (m == 0 && n == 0) continue;
          NeumannMode md;
          md.kind = dom.kind;
          md.m = m;
          md.n = n;
          md.Lx = dom.Lx;
          md.Ly = dom.Ly;
          const double a = m * std::numbers::pi / dom.Lx, b = n * std::numbers::pi / dom.Ly;
          md.mu = a * a + b * b;
          md.norm = std::sqrt((m ? 2.0 : 1.0) * (n ? 2.0 : 1.0) / (dom.Lx * dom.Ly));
          cand.push_back(md);
        }
      break;
    case DomainKind::Disk:
      for (int m = 0; m <= M; ++m) {
        auto zs = detail::bessel_prime_zeros(m, M);
        for (int s = 0; s < M; ++s) {
          const double z = zs[s];
          const double alpha = z / dom.R;
          const double radial = 0.5 * dom.R * dom.R * (1.0 - double(m * m) / (z * z)) *
                                std::pow(detail::besselj(m, z), 2);
          for (int sc = 0; sc < (m == 0 ? 1 : 2); ++sc) {
            NeumannMode md;
            md.kind = dom.kind;
            md.m = m;
            md.n = s + 1;
            md.sine = sc == 1;
            md.alpha = alpha;
            md.R = dom.R;
            md.mu = alpha * alpha;
            const double ang = (m == 0) ? 2 * std::numbers::pi : std::numbers::pi;
            md.norm = 1.0 / std::sqrt(radial * ang);
            cand.push_back(md);
          }
        }
      }
      break;
  }
  std::stable_sort(cand.begin(), cand.end(), [group_tol](const NeumannMode& a, const NeumannMode& b) {
    if (std::abs(a.mu - b.mu) > group_tol * std::max(1.0, a.mu)) return a.mu < b.mu;
    if (a.m != b.m) return a.m > b.m;
    if (a.n != b.n) return a.n < b.n;
    return !a.sine && b.sine;
  });
  // grouping over the full candidate list, so truncation does not hide multiplicity
  int gid = 0;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (i > 0 && std::abs(cand[i].mu - cand[i - 1].mu) > group_tol * std::max(1.0, cand[i].mu)) ++gid;
    cand[i].group_id = gid;
  }
  for (auto& c : cand) {
    c.degeneracy = static_cast<int>(
        std::count_if(cand.begin(), cand.end(), [&](const NeumannMode& o) { return o.group_id == c.group_id; }));
  }
  cand.resize(count);
  for (int i = 0; i < count; ++i) {
    cand[i].k = i + 1;
    cand[i].lambda0 = std::sqrt((dom.D + 2.0) / dom.D * cand[i].mu);
  }
  return cand;
}

inline void write_modes_csv(std::ostream& os, const std::vector<NeumannMode>& modes) {
  os << "k,mu,lambda0,group_id,degeneracy\n";
  os.precision(17);
  for (const auto& m : modes)
    os << m.k << ',' << m.mu << ',' << m.lambda0 << ',' << m.group_id << ',' << m.degeneracy << '\n';
}

}  // namespace kdamp
