#pragma once

// Central finite-difference verification of recorded gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mapspell/rng.hpp"
#include "mapspell/tensor.hpp"

namespace mapspell {

struct GradCheckOptions {
  double h = 1e-5;
  std::size_t probes = 10;
  double magnitude_floor = 1e-5;  // denominators below this count as this
  std::uint64_t seed = 0;
};

struct GradProbe {
  std::size_t tensor = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckResult {
  std::vector<GradProbe> probes;
  double max_rel_error = 0.0;
};

/// Compares d loss / d wrt[k][i] from backward() against
/// (f(x+h) - f(x-h)) / 2h at random (k, i) probes. `loss` must rebuild the
/// graph on every call and be deterministic.
inline GradCheckResult grad_check(const std::function<Tensor()>& loss, std::vector<Tensor> wrt,
                                  const GradCheckOptions& opts = {}) {
  if (wrt.empty()) throw ContractError("grad_check: nothing to differentiate");
  for (auto& t : wrt) {
    if (!t.requires_grad()) throw ContractError("grad_check: probed tensor does not require grad");
    t.zero_grad();
  }
  backward(loss());

  std::size_t total = 0;
  for (const auto& t : wrt) total += t.size();
  Rng rng(opts.seed);
  GradCheckResult res;
  for (std::size_t p = 0; p < opts.probes; ++p) {
    std::size_t flat = rng.below(total), k = 0;
    while (flat >= wrt[k].size()) flat -= wrt[k++].size();
    double& x = wrt[k].data()[flat];
    const double saved = x;
    double up, down;
    {
      NoGradGuard ng;
      x = saved + opts.h;
      up = loss().item();
      x = saved - opts.h;
      down = loss().item();
    }
    x = saved;
    GradProbe probe{k, flat, wrt[k].grad()[flat], (up - down) / (2.0 * opts.h), 0.0};
    const double denom = std::max({std::abs(probe.analytic), std::abs(probe.numeric), opts.magnitude_floor});
    probe.rel_error = std::abs(probe.analytic - probe.numeric) / denom;
    res.max_rel_error = std::max(res.max_rel_error, probe.rel_error);
    res.probes.push_back(probe);
  }
  return res;
}

}  // namespace mapspell
