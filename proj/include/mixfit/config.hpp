#pragma once

namespace mixfit {

inline constexpr const char* kVersion = "0.1.0";

// Numeric guard rails used across the geometry and estimation layers.
// The defaults are the module constants; callers may pass an adjusted copy.
struct Tolerances {
  double check_tol = 1e-12;     // symmetry / sum-to-one slack in type checks
  double spd_jitter = 1e-6;     // ridge added when constructing random SPD matrices
  double weight_floor = 1e-10;  // simplex clamp applied after retraction
};

const Tolerances& default_tolerances();

// Data-parallel fan-out cap: MIXFIT_THREADS when set, hardware concurrency
// otherwise. Always at least 1.
int thread_cap();

}  // namespace mixfit
