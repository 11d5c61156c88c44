#pragma once

#include <functional>

namespace gridstate {

struct Bracket {
  double lo = 0.0;
  double hi = 0.0;
};

/// Walks t0, t0·growth, t0·growth², ... until f rises, and returns an
/// interval [t_{k-1}, t_{k+1}] holding a local minimum (t_{-1} = 0). The
/// origin itself is never evaluated. Throws OptimizationError when f has not
/// risen once t exceeds `t_max`.
Bracket bracket_from_origin(const std::function<double(double)>& f, double t0,
                            double growth, double t_max);

struct ScalarMinimum {
  double t = 0.0;
  double value = 0.0;
  int evaluations = 0;
};

/// Golden-section search on [lo, hi] for a unimodal f; stops when the
/// interval is shorter than abs_tol + rel_tol·|t|. The endpoints are never
/// evaluated.
ScalarMinimum golden_section(const std::function<double(double)>& f, double lo,
                             double hi, double abs_tol, double rel_tol);

}  // namespace gridstate
