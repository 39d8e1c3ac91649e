#pragma once

#include <cstddef>
#include <functional>
#include <optional>

#include "ileumnet/autograd.hpp"

namespace ileumnet {

// Builds a scalar ([1]-shaped) result from the input Var on a fresh tape.
using ScalarFn = std::function<Var(Tape<double>&, Var)>;

struct GradCheckOptions {
  double eps = 1e-3;
  // Compare every coordinate when unset, otherwise this many sampled ones.
  std::optional<std::size_t> samples;
  std::uint64_t seed = 0;
  // Relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-8;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Compares the tape gradient of f at x against central differences
/// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
GradCheckResult grad_check(const ScalarFn& f, const Tensor<double>& x, const GradCheckOptions& options = {});

}  // namespace ileumnet
