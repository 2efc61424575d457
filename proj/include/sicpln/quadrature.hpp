#pragma once

#include <functional>

namespace sicpln {

struct QuadResult {
  double value = 0.0;
  double abs_error = 0.0;  // accumulated |K15 - G7| over accepted intervals
  long evaluations = 0;
  bool converged = true;
};

// Adaptive Gauss-Kronrod 7/15 on [a, b] with recursive bisection.
// An interval is accepted when |K15 - G7| <= abs_tol (tolerance is halved at
// each split). converged=false if max_depth is reached with the estimate
// still above tolerance; the partial sum is returned either way.
QuadResult integrate_gk(const std::function<double(double)>& f, double a,
                        double b, double abs_tol, int max_depth = 60);

}  // namespace sicpln
