#pragma once

// Central-difference gradient verification. The function under test must be
// pure in the checked tensor's values: it is re-evaluated several times.

#include <cmath>
#include <sstream>
#include <string>

#include "novis/rng.hpp"
#include "novis/tensor.hpp"

namespace novis {

struct GradCheckReport {
  bool pass = false;
  double max_rel_error = 0.0;
  long long worst_index = -1;
  std::string detail;
};

template <typename S>
constexpr double default_grad_tol() {
  return sizeof(S) == 8 ? 1e-4 : 1e-2;
}

// Compares the taped gradient of f (scalar-valued) w.r.t. x against central
// differences with step 1e-3. Relative error per element is
// |a - n| / max(1, |a|, |n|). If check_elements > 0, only that many randomly
// chosen coordinates are perturbed (used for whole-model spot checks).
template <typename S, typename F>
GradCheckReport finite_difference_check(F f, TensorT<S>& x,
                                        double rel_tol = default_grad_tol<S>(),
                                        double step = 1e-3, int check_elements = -1,
                                        std::uint64_t seed = 0) {
  GradCheckReport report;

  std::vector<S> analytic;
  {
    TapeT<S> tape;
    x.zero_grad();
    x.set_requires_grad(true);
    TensorT<S> loss = f();
    if (loss.size() != 1) {
      report.detail = "function under test is not scalar-valued";
      return report;
    }
    if (!std::isfinite(static_cast<double>(loss.item()))) {
      report.detail = "non-finite loss value";
      return report;
    }
    backward(loss);
    analytic = x.grad();
  }
  for (S g : analytic) {
    if (!std::isfinite(static_cast<double>(g))) {
      report.detail = "non-finite analytic gradient";
      return report;
    }
  }

  std::vector<long long> coords;
  if (check_elements > 0 && check_elements < x.size()) {
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    for (int i = 0; i < check_elements; ++i)
      coords.push_back(rng.uniform_int(0, static_cast<int>(x.size()) - 1));
  } else {
    for (long long i = 0; i < x.size(); ++i) coords.push_back(i);
  }

  const S h = static_cast<S>(step);
  for (long long i : coords) {
    const S saved = x.data()[i];
    x.data()[i] = saved + h;
    const S hi_val = x.data()[i];
    const double f_hi = static_cast<double>(f().item());
    x.data()[i] = saved - h;
    const S lo_val = x.data()[i];
    const double f_lo = static_cast<double>(f().item());
    x.data()[i] = saved;
    if (!std::isfinite(f_hi) || !std::isfinite(f_lo)) {
      report.detail = "non-finite perturbed output at index " + std::to_string(i);
      return report;
    }
    const double denom = static_cast<double>(hi_val) - static_cast<double>(lo_val);
    const double numeric = (f_hi - f_lo) / denom;
    const double a = static_cast<double>(analytic[static_cast<std::size_t>(i)]);
    const double rel =
        std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
      std::ostringstream os;
      os << "worst coordinate " << i << ": analytic " << a << " vs numeric " << numeric;
      report.detail = os.str();
    }
  }

  report.pass = report.max_rel_error <= rel_tol;
  return report;
}

}  // namespace novis
