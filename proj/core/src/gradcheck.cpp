#include "ileumnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ileumnet {
namespace {

double evaluate(const ScalarFn& f, const Tensor<double>& x) {
  Tape<double> tape;
  const Var out = f(tape, tape.constant(x));
  const auto& v = tape.value(out);
  require(v.size() == 1, ErrorCode::kShapeMismatch, "grad_check function must return a scalar");
  require(std::isfinite(v[0]), ErrorCode::kNonFinite, "grad_check function returned a non-finite value");
  return v[0];
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, const Tensor<double>& x, const GradCheckOptions& options) {
  require(options.eps > 0.0, ErrorCode::kInvalidArgument, "grad_check eps must be positive");

  Tensor<double> analytic;
  {
    Tape<double> tape;
    const Var in = tape.variable(x);
    const Var out = f(tape, in);
    require(std::isfinite(tape.value(out)[0]), ErrorCode::kNonFinite, "grad_check function returned a non-finite value");
    tape.backward(out);
    analytic = tape.has_grad(in) ? tape.grad(in) : Tensor<double>::zeros_like(x);
  }

  std::vector<std::size_t> coords(x.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (options.samples && *options.samples < coords.size()) {
    Rng rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(*options.samples);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckResult result;
  Tensor<double> probe = x;
  for (std::size_t i : coords) {
    const double saved = probe[i];
    probe[i] = saved + options.eps;
    const double up = evaluate(f, probe);
    probe[i] = saved - options.eps;
    const double down = evaluate(f, probe);
    probe[i] = saved;
    const double numeric = (up - down) / (2.0 * options.eps);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_index = i;
    }
    ++result.checked;
  }
  return result;
}

}  // namespace ileumnet
