//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef TRISEC_LBFGS_HPP
#define TRISEC_LBFGS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <vector>

#include "trisec/errors.hpp"

namespace trisec {

struct LbfgsOptions {
  /// Number of correction pairs kept for the two-loop recursion.
  std::size_t history = 10;
  std::size_t max_iters = 100;
  /// Armijo sufficient-decrease parameter.
  double armijo = 1e-4;
  /// Step shrink factor during backtracking.
  double backtrack = 0.5;
  std::size_t max_line_search = 30;
  /// Stop when the projected gradient's infinity norm drops below this.
  double gradient_tol = 1e-10;
};

struct LbfgsResult {
  std::vector<double> x;
  double value = 0.0;
  std::size_t iterations = 0;
  /// Objective after every accepted step, starting with the initial point.
  std::vector<double> history;
  bool converged = false;
};

/// Box bounds; empty vectors mean unbounded.
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  double project(std::size_t i, double v) const {
    if (!lo.empty())
      v = std::max(v, lo[i]);
    if (!hi.empty())
      v = std::min(v, hi[i]);
    return v;
  }
};

/// Writes the objective's gradient into `grad` and returns its value.
using Objective =
    std::function<double(const std::vector<double> &x, std::vector<double> &grad)>;

/// Projected limited-memory BFGS.
///
/// Directions come from the standard two-loop recursion over the last
/// `history` (s, y) pairs; each trial point is projected onto the box and
/// accepted by a backtracking Armijo test measured along the projected step.
/// Falls back to steepest descent whenever the quasi-Newton direction is not
/// a descent direction.
inline LbfgsResult lbfgs_minimize(const Objective &f, std::vector<double> x0,
                                  const Box &box = {},
                                  const LbfgsOptions &opt = {}) {
  const std::size_t n = x0.size();
  if ((!box.lo.empty() && box.lo.size() != n) ||
      (!box.hi.empty() && box.hi.size() != n))
    throw ShapeError("lbfgs: bound length does not match variable length");
  if (opt.history == 0)
    throw ConfigError("lbfgs: history must be positive");

  auto dotp = [n](const std::vector<double> &a, const std::vector<double> &b) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      s += a[i] * b[i];
    return s;
  };

  LbfgsResult res;
  std::vector<double> x = std::move(x0);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = box.project(i, x[i]);
  std::vector<double> g(n);
  double fx = f(x, g);
  res.history.push_back(fx);

  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  std::vector<double> d(n), x_new(n), g_new(n), alpha(opt.history);

  for (std::size_t iter = 0; iter < opt.max_iters; ++iter) {
    double pg_norm = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      pg_norm = std::max(pg_norm, std::abs(box.project(i, x[i] - g[i]) - x[i]));
    if (pg_norm < opt.gradient_tol) {
      res.converged = true;
      break;
    }

    // Two-loop recursion: d = -H g.
    d = g;
    const std::size_t k = s_hist.size();
    for (std::size_t j = k; j-- > 0;) {
      alpha[j] = rho_hist[j] * dotp(s_hist[j], d);
      for (std::size_t i = 0; i < n; ++i)
        d[i] -= alpha[j] * y_hist[j][i];
    }
    if (k > 0) {
      const double gamma =
          dotp(s_hist.back(), y_hist.back()) / dotp(y_hist.back(), y_hist.back());
      for (auto &v : d)
        v *= gamma;
    }
    for (std::size_t j = 0; j < k; ++j) {
      const double beta = rho_hist[j] * dotp(y_hist[j], d);
      for (std::size_t i = 0; i < n; ++i)
        d[i] += (alpha[j] - beta) * s_hist[j][i];
    }
    for (auto &v : d)
      v = -v;
    if (dotp(d, g) >= 0.0) {
      for (std::size_t i = 0; i < n; ++i)
        d[i] = -g[i];
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    double step = 1.0;
    if (k == 0) {
      // Unit-length first step along steepest descent.
      const double dn = std::sqrt(dotp(d, d));
      if (dn > 0.0)
        step = std::min(1.0, 1.0 / dn);
    }

    bool accepted = false;
    double f_new = fx;
    for (std::size_t ls = 0; ls < opt.max_line_search; ++ls) {
      for (std::size_t i = 0; i < n; ++i)
        x_new[i] = box.project(i, x[i] + step * d[i]);
      double decrease = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        decrease += g[i] * (x_new[i] - x[i]);
      f_new = f(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= fx + opt.armijo * decrease &&
          decrease < 0.0) {
        accepted = true;
        break;
      }
      step *= opt.backtrack;
    }
    if (!accepted)
      break;

    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = x_new[i] - x[i];
      y[i] = g_new[i] - g[i];
    }
    const double sy = dotp(s, y);
    if (sy > 1e-12 * std::max(1.0, dotp(y, y))) {
      if (s_hist.size() == opt.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
    }

    x.swap(x_new);
    g.swap(g_new);
    fx = f_new;
    res.history.push_back(fx);
    res.iterations = iter + 1;
  }

  res.x = std::move(x);
  res.value = fx;
  return res;
}

} // namespace trisec

#endif // TRISEC_LBFGS_HPP
