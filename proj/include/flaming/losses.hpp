#pragma once

#include <cstddef>
#include <vector>

#include "flaming/model.hpp"
#include "flaming/tensor.hpp"

namespace flaming {

enum class AlignLoss { Contrastive, L1 };
enum class FlmBlocks { All, FirstHalf, SecondHalf };

struct LossConfig {
  double tau = 0.5;
  std::size_t k_flm = 6;
  // Keep the positive pair in the contrastive denominators (NT-Xent style).
  bool inclusive_denominator = false;
  // Gate L_flm with the batch-mean confidence instead of per sample.
  bool batch_mean_gate = false;
  FlmBlocks flm_blocks = FlmBlocks::All;
  AlignLoss flm_kind = AlignLoss::Contrastive;
  AlignLoss tco_kind = AlignLoss::Contrastive;
  bool use_flm = true;
  bool use_tco = true;
  bool use_gf = true;

  void validate(std::size_t tokens) const;
};

// Per-row flow-alignment terms for one block: att, m [R, HW] ->
// [R] with -log(h(att_i, m_i) / sum_{j != i} h(att_i, m_j)), h = exp(cos / tau).
Tensor loss_flm_rows(const Tensor& att, const Tensor& m, double tau, bool inclusive = false);
// Mean over blocks of the mean row term.
Tensor loss_flm(const std::vector<Tensor>& att, const Tensor& m, double tau, bool inclusive = false);
// Per-row mean absolute difference.
Tensor loss_flm_l1_rows(const Tensor& att, const Tensor& m);

// w [T, M, C] (M = N*K): bidirectional adjacent-frame contrastive loss,
// averaged over the T-1 transitions. Negative values are expected.
Tensor loss_tco(const Tensor& w, double tau, bool inclusive = false);
Tensor loss_tco_l1(const Tensor& w);
// [N*T, K, C] clip-major -> [T, N*K, C].
Tensor tokens_by_frame(const Tensor& tokens, std::size_t clips, std::size_t frames);

// frame_logits [N*T, classes]; each frame is scored against its clip label.
Tensor loss_gf(const Tensor& frame_logits, const std::vector<std::size_t>& labels);

// Blocks aligned to the flow map under `which` (first half = [0, L/2)).
std::vector<std::size_t> flm_block_indices(std::size_t blocks, FlmBlocks which);

// Confidence-gated flow term: flm_rows [N*T] (clip-major) weighted by
// (1 - rho_n) per clip, or by the batch mean of (1 - rho), then averaged.
// rho is a constant here.
Tensor gated_flow_term(const Tensor& flm_rows, const std::vector<double>& rho, bool batch_mean_gate);

// CE + gated flow + tco + gf; undefined terms are skipped.
Tensor total_loss(const Tensor& ce, const Tensor& gated_flm, const Tensor& tco, const Tensor& gf);

struct LossBreakdown {
  double ce = 0.0;
  double flm = 0.0;        // ungated
  double flm_gated = 0.0;  // the (1 - rho) weighted term that enters the total
  double tco = 0.0;
  double gf = 0.0;
  double total = 0.0;
  std::vector<double> rho;  // per clip

  double mean_rho() const;
};

struct LossResult {
  Tensor total;
  LossBreakdown parts;
};

// flow: [N*T, HW] guidance maps, or undefined to drop the flow term.
LossResult compute_losses(const FlamingModel::Output& out, const Tensor& flow, const std::vector<std::size_t>& labels,
                          std::size_t frames, const LossConfig& cfg);

}  // namespace flaming
