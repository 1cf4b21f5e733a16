/* Copyright (c) 2026 The stylediff Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace stylediff {

struct LbfgsOptions {
  int history = 20;
  int max_evals_per_step = 25;
  double tolerance_grad = 1e-10;    // stop when max |g| falls below
  double tolerance_change = 1e-12;  // stop on negligible step or loss change
  double c1 = 1e-4;                 // sufficient decrease
  double c2 = 0.9;                  // curvature

  friend bool operator==(const LbfgsOptions&, const LbfgsOptions&) = default;
};

struct AdamOptions {
  double step = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamOptions&, const AdamOptions&) = default;
};

/// Objective: writes the gradient into `grad` and returns an evaluation
/// record whose `total` member is the scalar being minimized.
template <typename T, typename Eval>
using ObjectiveFn = std::function<Eval(std::span<const T> x, std::span<T> grad)>;

/// Called with every accepted iterate (iteration 0 is the starting point).
/// Returning false stops the run.
template <typename T, typename Eval>
using IterateFn = std::function<bool(long iteration, const std::vector<T>& x, const Eval& eval)>;

/// Optional projection applied after each update; returns true when it
/// changed x.
template <typename T>
using ProjectFn = std::function<bool(std::vector<T>& x)>;

namespace detail {

template <typename T>
double dot(const std::vector<T>& a, const std::vector<T>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

template <typename T>
double max_abs(const std::vector<T>& a) {
  double m = 0.0;
  for (T v : a) m = std::max(m, std::abs(static_cast<double>(v)));
  return m;
}

// Minimizer of the cubic through (x1, f1, g1), (x2, f2, g2), clamped to
// [lo, hi]; midpoint when the cubic has no real minimizer.
inline double cubic_interpolate(double x1, double f1, double g1, double x2, double f2, double g2, double lo,
                                double hi) {
  const double d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
  const double d2_sq = d1 * d1 - g1 * g2;
  if (d2_sq >= 0.0) {
    const double d2 = std::sqrt(d2_sq);
    double pos = x1 <= x2 ? x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
                          : x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2));
    if (std::isfinite(pos)) return std::min(std::max(pos, lo), hi);
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Limited-memory BFGS with a strong-Wolfe line search (bracketing plus
/// cubic-interpolation zoom). Accepted iterates never increase the
/// objective: a failed search returns the best point seen, or no move.
template <typename T, typename Eval>
class Lbfgs {
 public:
  explicit Lbfgs(LbfgsOptions opts = {}) : opts_(opts) {}

  struct Summary {
    long iterations = 0;
    long evaluations = 0;
  };

  Summary minimize(std::vector<T>& x, const ObjectiveFn<T, Eval>& f, long max_iterations,
                   const IterateFn<T, Eval>& on_iterate, const ProjectFn<T>& project = {}) {
    Summary sum;
    const std::size_t n = x.size();
    std::vector<T> g(n);
    Eval cur = f(x, g);
    ++sum.evaluations;
    if (!on_iterate(0, x, cur)) return sum;
    if (detail::max_abs(g) <= opts_.tolerance_grad) return sum;

    std::deque<std::vector<T>> s_hist, y_hist;
    std::deque<double> rho;
    std::vector<T> d(n), prev_g(n), trial(n), g_new(n);
    double h_diag = 1.0, t = 0.0;
    bool fresh = true;

    for (long it = 1; it <= max_iterations; ++it) {
      if (fresh) {
        for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
        s_hist.clear();
        y_hist.clear();
        rho.clear();
        h_diag = 1.0;
      } else {
        std::vector<T> y(n), s(n);
        for (std::size_t i = 0; i < n; ++i) {
          y[i] = g[i] - prev_g[i];
          s[i] = static_cast<T>(d[i] * t);
        }
        const double ys = detail::dot(y, s);
        if (ys > 1e-10) {
          if (static_cast<int>(s_hist.size()) == opts_.history) {
            s_hist.pop_front();
            y_hist.pop_front();
            rho.pop_front();
          }
          h_diag = ys / detail::dot(y, y);
          s_hist.push_back(std::move(s));
          y_hist.push_back(std::move(y));
          rho.push_back(1.0 / ys);
        }
        // two-loop recursion
        std::vector<double> alpha(s_hist.size());
        for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
        for (std::size_t k = s_hist.size(); k-- > 0;) {
          alpha[k] = detail::dot(s_hist[k], d) * rho[k];
          for (std::size_t i = 0; i < n; ++i) d[i] -= static_cast<T>(alpha[k]) * y_hist[k][i];
        }
        for (std::size_t i = 0; i < n; ++i) d[i] = static_cast<T>(d[i] * h_diag);
        for (std::size_t k = 0; k < s_hist.size(); ++k) {
          const double beta = detail::dot(y_hist[k], d) * rho[k];
          for (std::size_t i = 0; i < n; ++i) d[i] += static_cast<T>(alpha[k] - beta) * s_hist[k][i];
        }
      }
      prev_g = g;
      const double prev_total = cur.total;
      if (fresh) {
        double l1 = 0.0;
        for (T v : g) l1 += std::abs(static_cast<double>(v));
        t = std::min(1.0, 1.0 / l1);
      } else {
        t = 1.0;
      }
      const double gtd = detail::dot(g, d);
      if (gtd > -opts_.tolerance_change) {
        if (fresh) break;
        fresh = true;  // not a descent direction: restart from steepest descent
        --it;
        continue;
      }
      fresh = false;

      auto eval_at = [&](double step, std::vector<T>& grad_out) {
        for (std::size_t i = 0; i < n; ++i) trial[i] = static_cast<T>(x[i] + step * d[i]);
        ++sum.evaluations;
        return f(trial, grad_out);
      };
      Eval accepted = cur;
      const double step = line_search(eval_at, cur, g, d, t, gtd, accepted, g_new);
      t = step;
      if (step != 0.0) {
        for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<T>(x[i] + step * d[i]);
        g = g_new;
        cur = accepted;
      }
      sum.iterations = it;
      bool projected = false;
      if (step != 0.0 && project && project(x)) {
        cur = f(x, g);
        ++sum.evaluations;
        projected = true;
      }
      if (!on_iterate(it, x, cur)) break;
      if (projected) {
        fresh = true;  // curvature pairs no longer describe the path taken
        continue;
      }
      if (step == 0.0) break;
      if (detail::max_abs(g) <= opts_.tolerance_grad) break;
      if (detail::max_abs(d) * std::abs(step) <= opts_.tolerance_change) break;
      if (std::abs(cur.total - prev_total) < opts_.tolerance_change) break;
    }
    return sum;
  }

 private:
  template <typename EvalAt>
  double line_search(EvalAt& eval_at, const Eval& f0, const std::vector<T>& g0, const std::vector<T>& d,
                     double t, double gtd, Eval& out_eval, std::vector<T>& out_grad) {
    const double c1 = opts_.c1, c2 = opts_.c2;
    const int max_ls = opts_.max_evals_per_step;
    const double d_norm = detail::max_abs(d);

    struct Point {
      double t;
      Eval e;
      std::vector<T> g;
      double gtd;
    };
    std::vector<T> gn(d.size());
    Eval en = eval_at(t, gn);
    double gtd_new = detail::dot(gn, d);
    Point prev{0.0, f0, g0, gtd};
    int ls_iter = 0;
    bool done = false;
    std::vector<Point> bracket;

    while (ls_iter < max_ls) {
      if (en.total > f0.total + c1 * t * gtd || (ls_iter > 1 && en.total >= prev.e.total)) {
        bracket = {prev, Point{t, en, gn, gtd_new}};
        break;
      }
      if (std::abs(gtd_new) <= -c2 * gtd) {
        bracket = {Point{t, en, gn, gtd_new}};
        done = true;
        break;
      }
      if (gtd_new >= 0) {
        bracket = {prev, Point{t, en, gn, gtd_new}};
        break;
      }
      const double lo = t + 0.01 * (t - prev.t), hi = t * 10.0;
      const double next = detail::cubic_interpolate(prev.t, prev.e.total, prev.gtd, t, en.total, gtd_new, lo, hi);
      prev = Point{t, en, gn, gtd_new};
      t = next;
      en = eval_at(t, gn);
      gtd_new = detail::dot(gn, d);
      ++ls_iter;
    }
    if (ls_iter == max_ls) bracket = {Point{0.0, f0, g0, gtd}, Point{t, en, gn, gtd_new}};
    if (!std::isfinite(en.total) && bracket.size() == 2 && !std::isfinite(bracket[1].e.total)) {
      // propagate so the caller reports the non-finite evaluation
      out_eval = en;
      out_grad = gn;
      return t;
    }

    auto order = [&] { return bracket.size() < 2 || bracket[0].e.total <= bracket[1].e.total ? 0 : 1; };
    int low = order();
    int high = 1 - low;
    bool insufficient = false;
    while (!done && ls_iter < max_ls && bracket.size() == 2) {
      if (std::abs(bracket[1].t - bracket[0].t) * d_norm < opts_.tolerance_change) break;
      const double bmin = std::min(bracket[0].t, bracket[1].t), bmax = std::max(bracket[0].t, bracket[1].t);
      double tz = detail::cubic_interpolate(bracket[0].t, bracket[0].e.total, bracket[0].gtd, bracket[1].t,
                                            bracket[1].e.total, bracket[1].gtd, bmin, bmax);
      const double eps = 0.1 * (bmax - bmin);
      if (std::min(bmax - tz, tz - bmin) < eps) {
        if (insufficient || tz >= bmax || tz <= bmin) {
          tz = std::abs(tz - bmax) < std::abs(tz - bmin) ? bmax - eps : bmin + eps;
          insufficient = false;
        } else {
          insufficient = true;
        }
      } else {
        insufficient = false;
      }
      en = eval_at(tz, gn);
      gtd_new = detail::dot(gn, d);
      ++ls_iter;
      if (en.total > f0.total + c1 * tz * gtd || en.total >= bracket[low].e.total) {
        bracket[high] = Point{tz, en, gn, gtd_new};
        low = order();
        high = 1 - low;
      } else {
        if (std::abs(gtd_new) <= -c2 * gtd) {
          done = true;
        } else if (gtd_new * (bracket[high].t - bracket[low].t) >= 0) {
          bracket[high] = bracket[low];
        }
        bracket[low] = Point{tz, en, gn, gtd_new};
      }
    }
    const Point& best = bracket[bracket.size() == 2 ? low : 0];
    if (!(best.e.total <= f0.total)) {  // guard: never accept an increase
      out_eval = f0;
      out_grad = g0;
      return 0.0;
    }
    out_eval = best.e;
    out_grad = best.g;
    return best.t;
  }

  LbfgsOptions opts_;
};

/// Adaptive-moment gradient descent. Every step is accepted, so the trace
/// is not monotone in general.
template <typename T, typename Eval>
class Adam {
 public:
  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

  long minimize(std::vector<T>& x, const ObjectiveFn<T, Eval>& f, long max_iterations,
                const IterateFn<T, Eval>& on_iterate, const ProjectFn<T>& project = {}) {
    const std::size_t n = x.size();
    std::vector<T> g(n);
    std::vector<double> m(n, 0.0), v(n, 0.0);
    double b1t = 1.0, b2t = 1.0;
    long it = 0;
    for (;; ++it) {
      const Eval e = f(x, g);
      if (!on_iterate(it, x, e)) break;
      if (it == max_iterations) break;
      b1t *= opts_.beta1;
      b2t *= opts_.beta2;
      for (std::size_t i = 0; i < n; ++i) {
        const double gi = g[i];
        m[i] = opts_.beta1 * m[i] + (1 - opts_.beta1) * gi;
        v[i] = opts_.beta2 * v[i] + (1 - opts_.beta2) * gi * gi;
        const double mhat = m[i] / (1 - b1t), vhat = v[i] / (1 - b2t);
        x[i] = static_cast<T>(x[i] - opts_.step * mhat / (std::sqrt(vhat) + opts_.epsilon));
      }
      if (project) project(x);
    }
    return it;
  }

 private:
  AdamOptions opts_;
};

}  // namespace stylediff
