#include "gridstate/scalar_search.hpp"

#include <cmath>

#include <fmt/format.h>

#include "gridstate/errors.hpp"

namespace gridstate {

Bracket bracket_from_origin(const std::function<double(double)>& f, double t0,
                            double growth, double t_max) {
  if (!(t0 > 0.0) || !(growth > 1.0))
    throw DomainError("bracketing needs t0 > 0 and growth > 1");
  double prev = 0.0;
  double cur = t0;
  double f_cur = f(cur);
  while (true) {
    const double next = cur * growth;
    if (next > t_max)
      throw OptimizationError(fmt::format(
          "no bracket found: objective still non-increasing at t = {:.6g} "
          "(value {:.17g})",
          cur, f_cur));
    const double f_next = f(next);
    if (!std::isfinite(f_next))
      throw OptimizationError(fmt::format(
          "objective is not finite at t = {:.6g} while bracketing", next));
    if (f_next > f_cur) return {prev, next};
    prev = cur;
    cur = next;
    f_cur = f_next;
  }
}

ScalarMinimum golden_section(const std::function<double(double)>& f, double lo,
                             double hi, double abs_tol, double rel_tol) {
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double c = b - ratio * (b - a);
  double d = a + ratio * (b - a);
  double fc = f(c);
  double fd = f(d);
  int evaluations = 2;
  while (b - a > abs_tol + rel_tol * std::abs(0.5 * (a + b))) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - ratio * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + ratio * (b - a);
      fd = f(d);
    }
    ++evaluations;
    if (evaluations > 10000) break;
  }
  return fc <= fd ? ScalarMinimum{c, fc, evaluations}
                  : ScalarMinimum{d, fd, evaluations};
}

}  // namespace gridstate
