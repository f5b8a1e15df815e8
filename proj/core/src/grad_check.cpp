#include "rgn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace rgn {

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

namespace {

double evaluate(const LossClosure& loss, const ParamStore& params) {
  ad::Graph g(&params, ad::GradMode::kDisabled);
  return loss(g).item();
}

}  // namespace

GradCheckReport grad_check(const LossClosure& loss, ParamStore& params,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  report.tolerance = options.tolerance;

  ParamStore analytic_store = params;
  analytic_store.clear_grad();
  {
    ad::Graph g(&analytic_store);
    ad::Var l = loss(g);
    g.backward(l);
    g.flush_param_grads(analytic_store);
  }

  const double base_a = evaluate(loss, params);
  const double base_b = evaluate(loss, params);
  report.deterministic = base_a == base_b;

  // Global coordinate list, optionally subsampled with at least one
  // coordinate per parameter.
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t j = 0; j < params.value(p).size(); ++j) coords.emplace_back(p, j);
  if (options.max_coords > 0 && options.max_coords < coords.size()) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    std::vector<std::pair<std::size_t, std::size_t>> picked(coords.begin(),
                                                            coords.begin() + options.max_coords);
    std::vector<bool> seen(params.size(), false);
    for (auto [p, j] : picked) seen[p] = true;
    for (auto [p, j] : coords) {
      if (!seen[p]) {
        picked.emplace_back(p, j);
        seen[p] = true;
      }
    }
    coords = std::move(picked);
    std::sort(coords.begin(), coords.end());
  }

  report.per_param.resize(params.size());
  for (std::size_t p = 0; p < params.size(); ++p) report.per_param[p].name = params.name(p);

  for (auto [p, j] : coords) {
    double& w = params.value(p)[j];
    const double saved = w;
    w = saved + options.h;
    const double up = evaluate(loss, params);
    w = saved - options.h;
    const double down = evaluate(loss, params);
    w = saved;
    const double numeric = (up - down) / (2.0 * options.h);
    const double analytic = analytic_store.has_grad(p) ? analytic_store.grad(p)[j] : 0.0;
    const double err = relative_error(analytic, numeric);
    auto& entry = report.per_param[p];
    entry.coords_checked += 1;
    entry.max_rel_error = std::max(entry.max_rel_error, err);
    report.max_rel_error = std::max(report.max_rel_error, err);
    report.coords_checked += 1;
  }
  std::erase_if(report.per_param, [](const ParamGradCheck& c) { return c.coords_checked == 0; });
  return report;
}

}  // namespace rgn
