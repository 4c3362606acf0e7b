#include "flaming/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "flaming/errors.hpp"

namespace flaming {

namespace {

double evaluate(const std::function<Tensor()>& loss_fn) {
  NoTapeScope no_tape;
  return loss_fn().item();
}

}  // namespace

GradCheckReport finite_difference_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> params,
                                        const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw ContractError("finite_difference_check: step must be positive");
  DetachedValueCache detached;
  auto replay = [&] { return DetachedCacheScope(detached, DetachedValueCache::Mode::Replay); };
  double base = 0.0;
  {
    DetachedCacheScope record(detached, DetachedValueCache::Mode::Record);
    base = evaluate(loss_fn);
  }
  double again = 0.0;
  {
    // Fresh recomputation (no replay) so any nondeterminism shows up.
    DetachedValueCache scratch;
    DetachedCacheScope record(scratch, DetachedValueCache::Mode::Record);
    again = evaluate(loss_fn);
  }
  if (base != again) throw ContractError("finite_difference_check: loss function is not deterministic");

  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    Tape tape;
    TapeScope scope(tape);
    auto frozen = replay();
    Tensor loss = loss_fn();
    tape.backward(loss);
  }

  GradCheckReport report;
  report.tolerance = options.tolerance;
  const double h = options.step;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      double plus = 0.0;
      {
        auto frozen = replay();
        plus = evaluate(loss_fn);
      }
      values[i] = saved - h;
      double minus = 0.0;
      {
        auto frozen = replay();
        minus = evaluate(loss_fn);
      }
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double abs_err = std::fabs(analytic[i] - numeric);
      const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), options.floor});
      const double rel = abs_err / denom;
      ++report.coordinates;
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = pi;
        report.worst_index = i;
      }
    }
    p.zero_grad();
  }
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace flaming
