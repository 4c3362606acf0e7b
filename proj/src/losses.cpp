#include "flaming/losses.hpp"

#include <algorithm>
#include <numeric>

#include "flaming/errors.hpp"
#include "flaming/ops.hpp"

namespace flaming {

namespace {

// Rows of log(sum_j mask_ij exp(s_ij)) - s_ii, mask excluding the diagonal
// unless `inclusive`.
Tensor contrastive_rows(const Tensor& s, bool inclusive) {
  const std::size_t r = s.dim(0);
  if (!inclusive && r < 2) throw ContractError("contrastive loss needs at least two rows when the positive is excluded");
  Tensor e = exp(s);
  if (!inclusive) {
    Tensor mask({r, r}, 1.0);
    for (std::size_t i = 0; i < r; ++i) mask.mutable_data()[i * r + i] = 0.0;
    e = mul(e, mask);
  }
  std::vector<std::size_t> diag(r);
  std::iota(diag.begin(), diag.end(), 0);
  return sub(log(sum_axis(e, 1)), pick(s, diag));
}

Tensor similarity(const Tensor& a, const Tensor& b, double tau) {
  return scale(matmul(l2_normalize_rows(a), transpose(l2_normalize_rows(b))), 1.0 / tau);
}

void check_tau(double tau) {
  if (!(tau > 0.0)) throw ConfigError("temperature tau must be positive, got " + std::to_string(tau));
}

void check_pair(const Tensor& att, const Tensor& m, const char* op) {
  if (att.rank() != 2 || m.rank() != 2 || att.shape() != m.shape()) {
    throw ContractError(std::string(op) + ": attention " + shape_string(att.shape()) + " and flow " +
                        shape_string(m.shape()) + " must both be [R, HW]");
  }
}

Tensor frame_slice(const Tensor& w, std::size_t t) {
  return reshape(slice(w, 0, t, t + 1), {w.dim(1), w.dim(2)});
}

}  // namespace

void LossConfig::validate(std::size_t tokens) const {
  check_tau(tau);
  if (k_flm == 0 || k_flm > tokens) {
    throw ConfigError("k_flm=" + std::to_string(k_flm) + " must lie in [1, " + std::to_string(tokens) + "]");
  }
}

Tensor loss_flm_rows(const Tensor& att, const Tensor& m, double tau, bool inclusive) {
  check_tau(tau);
  check_pair(att, m, "loss_flm");
  return contrastive_rows(similarity(att, m, tau), inclusive);
}

Tensor loss_flm(const std::vector<Tensor>& att, const Tensor& m, double tau, bool inclusive) {
  if (att.empty()) throw ContractError("loss_flm: no attention blocks");
  Tensor acc;
  for (const auto& a : att) {
    const Tensor block = mean(loss_flm_rows(a, m, tau, inclusive));
    acc = acc.defined() ? add(acc, block) : block;
  }
  return scale(acc, 1.0 / static_cast<double>(att.size()));
}

Tensor loss_flm_l1_rows(const Tensor& att, const Tensor& m) {
  check_pair(att, m, "loss_flm_l1");
  return mean_axis(abs(sub(att, m)), 1);
}

Tensor loss_tco(const Tensor& w, double tau, bool inclusive) {
  check_tau(tau);
  if (w.rank() != 3 || w.dim(0) < 2) {
    throw ContractError("loss_tco needs tokens [T >= 2, M, C], got " + shape_string(w.shape()));
  }
  const std::size_t t_count = w.dim(0);
  const double inv_m = 1.0 / static_cast<double>(w.dim(1));
  Tensor acc;
  for (std::size_t t = 0; t + 1 < t_count; ++t) {
    const Tensor s = similarity(frame_slice(w, t), frame_slice(w, t + 1), tau);
    const Tensor forward = sum(contrastive_rows(s, inclusive));
    const Tensor backward = sum(contrastive_rows(transpose(s), inclusive));
    const Tensor term = scale(add(forward, backward), inv_m);
    acc = acc.defined() ? add(acc, term) : term;
  }
  return scale(acc, 1.0 / static_cast<double>(t_count - 1));
}

Tensor loss_tco_l1(const Tensor& w) {
  if (w.rank() != 3 || w.dim(0) < 2) {
    throw ContractError("loss_tco_l1 needs tokens [T >= 2, M, C], got " + shape_string(w.shape()));
  }
  Tensor acc;
  for (std::size_t t = 0; t + 1 < w.dim(0); ++t) {
    const Tensor term = mean(abs(sub(frame_slice(w, t), frame_slice(w, t + 1))));
    acc = acc.defined() ? add(acc, term) : term;
  }
  return scale(acc, 1.0 / static_cast<double>(w.dim(0) - 1));
}

Tensor tokens_by_frame(const Tensor& tokens, std::size_t clips, std::size_t frames) {
  if (tokens.rank() != 3 || tokens.dim(0) != clips * frames) {
    throw DimensionError("tokens_by_frame: expected [" + std::to_string(clips * frames) + ", K, C], got " +
                         shape_string(tokens.shape()));
  }
  const std::size_t k = tokens.dim(1), c = tokens.dim(2);
  return reshape(permute(reshape(tokens, {clips, frames, k, c}), {1, 0, 2, 3}), {frames, clips * k, c});
}

Tensor loss_gf(const Tensor& frame_logits, const std::vector<std::size_t>& labels) {
  if (labels.empty() || frame_logits.rank() != 2 || frame_logits.dim(0) % labels.size() != 0) {
    throw ContractError("loss_gf: frame logits " + shape_string(frame_logits.shape()) + " do not split over " +
                        std::to_string(labels.size()) + " clips");
  }
  const std::size_t frames = frame_logits.dim(0) / labels.size();
  std::vector<std::size_t> per_frame;
  for (auto l : labels) per_frame.insert(per_frame.end(), frames, l);
  return cross_entropy(frame_logits, per_frame);
}

std::vector<std::size_t> flm_block_indices(std::size_t blocks, FlmBlocks which) {
  std::vector<std::size_t> out;
  const std::size_t half = std::max<std::size_t>(1, blocks / 2);
  for (std::size_t l = 0; l < blocks; ++l) {
    if (which == FlmBlocks::All || (which == FlmBlocks::FirstHalf && l < half) ||
        (which == FlmBlocks::SecondHalf && l >= half)) {
      out.push_back(l);
    }
  }
  if (out.empty()) out.push_back(blocks - 1);  // single-block encoders
  return out;
}

Tensor gated_flow_term(const Tensor& flm_rows, const std::vector<double>& rho, bool batch_mean_gate) {
  const std::size_t r = flm_rows.numel();
  if (rho.empty() || flm_rows.rank() != 1 || r % rho.size() != 0) {
    throw ContractError("gated_flow_term: " + std::to_string(r) + " rows do not split over " +
                        std::to_string(rho.size()) + " clips");
  }
  const std::size_t frames = r / rho.size();
  const double batch_gate =
      1.0 - std::accumulate(rho.begin(), rho.end(), 0.0) / static_cast<double>(rho.size());
  Tensor weights({r});
  for (std::size_t i = 0; i < r; ++i) {
    const double gate = batch_mean_gate ? batch_gate : 1.0 - rho[i / frames];
    weights.mutable_data()[i] = gate / static_cast<double>(r);
  }
  return sum(mul(flm_rows, weights));
}

Tensor total_loss(const Tensor& ce, const Tensor& gated_flm, const Tensor& tco, const Tensor& gf) {
  Tensor total = ce;
  for (const Tensor* t : {&gated_flm, &tco, &gf}) {
    if (t->defined()) total = total.defined() ? add(total, *t) : *t;
  }
  if (!total.defined()) throw ContractError("total_loss: no terms");
  return total;
}

double LossBreakdown::mean_rho() const {
  if (rho.empty()) return 0.0;
  return std::accumulate(rho.begin(), rho.end(), 0.0) / static_cast<double>(rho.size());
}

LossResult compute_losses(const FlamingModel::Output& out, const Tensor& flow, const std::vector<std::size_t>& labels,
                          std::size_t frames, const LossConfig& cfg) {
  const std::size_t n = labels.size();
  const Tensor& fused = out.relation.fused;
  if (n == 0 || fused.rank() != 2 || fused.dim(0) != n) throw ContractError("compute_losses: label count mismatch");
  cfg.validate(out.encoded.tokens.dim(1));
  LossResult res;
  auto& parts = res.parts;

  const Tensor ce = cross_entropy(fused, labels);
  parts.ce = ce.item();
  Tensor gated, tco, gf;

  // rho goes through stop_gradient so no gradient reaches the gate (and a
  // finite-difference check sees it frozen).
  const Tensor probs = stop_gradient(softmax_rows(fused));
  const std::size_t classes = fused.dim(1);
  parts.rho.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = probs.data().subspan(i * classes, classes);
    parts.rho[i] = *std::max_element(row.begin(), row.end());
  }

  if (cfg.use_flm && flow.defined()) {
    const auto blocks = flm_block_indices(out.encoded.attention.size(), cfg.flm_blocks);
    std::vector<Tensor> selected;
    for (auto l : blocks) selected.push_back(out.encoded.attention[l]);
    const auto reps = representative_attention(selected, cfg.k_flm);
    Tensor rows;
    for (const auto& a : reps) {
      const Tensor r = cfg.flm_kind == AlignLoss::L1 ? loss_flm_l1_rows(a, flow)
                                                      : loss_flm_rows(a, flow, cfg.tau, cfg.inclusive_denominator);
      rows = rows.defined() ? add(rows, r) : r;
    }
    rows = scale(rows, 1.0 / static_cast<double>(reps.size()));  // [N*T]
    if (rows.numel() != n * frames) throw ContractError("compute_losses: flow rows do not match N*T");
    parts.flm = mean(rows).item();
    gated = gated_flow_term(rows, parts.rho, cfg.batch_mean_gate);
    parts.flm_gated = gated.item();
  }

  if (cfg.use_tco) {
    const Tensor w = tokens_by_frame(out.encoded.tokens, n, frames);
    tco = cfg.tco_kind == AlignLoss::L1 ? loss_tco_l1(w) : loss_tco(w, cfg.tau, cfg.inclusive_denominator);
    parts.tco = tco.item();
  }

  if (cfg.use_gf && out.relation.group.frame_logits.defined()) {
    gf = loss_gf(out.relation.group.frame_logits, labels);
    parts.gf = gf.item();
  }

  res.total = total_loss(ce, gated, tco, gf);
  parts.total = res.total.item();
  return res;
}

}  // namespace flaming
