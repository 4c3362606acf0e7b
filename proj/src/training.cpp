#include "flaming/training.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "flaming/errors.hpp"
#include "flaming/rng.hpp"

namespace flaming {

void TrainConfig::validate() const {
  schedule.validate();
  adam.validate();
  if (batch == 0) throw ConfigError("batch must be positive");
  if (brightness && !(brightness_lo > 0.0 && brightness_lo <= brightness_hi)) {
    throw ConfigError("brightness range must satisfy 0 < lo <= hi");
  }
}

std::vector<FlowMap> precompute_flow(const std::vector<VideoSample>& samples, const FlowPrepConfig& cfg) {
  std::vector<FlowMap> maps;
  maps.reserve(samples.size());
  for (const auto& s : samples) maps.push_back(sample_flow_guidance(s, cfg));
  return maps;
}

void gather_flow(const FlowMap& map, const std::vector<std::size_t>& indices, bool flip, std::vector<double>& dst) {
  for (auto t : indices) {
    if (t >= map.frames) throw ContractError("gather_flow: frame index out of range");
    const auto src = map.frame(t);
    for (std::size_t y = 0; y < map.height; ++y) {
      for (std::size_t x = 0; x < map.width; ++x) {
        dst.push_back(src[y * map.width + (flip ? map.width - 1 - x : x)]);
      }
    }
  }
}

namespace {

struct Batch {
  Tensor frames;
  Tensor flow;
  std::vector<std::size_t> labels;
};

struct Draw {
  std::size_t sample;
  std::vector<std::size_t> indices;
  bool flip = false;
  double brightness = 1.0;
};

Batch assemble(const std::vector<VideoSample>& samples, const std::vector<FlowMap>* flows,
               const std::vector<Draw>& draws, std::size_t grid_cells) {
  Batch b;
  std::vector<const VideoSample*> clips;
  std::vector<std::vector<std::size_t>> indices;
  std::vector<bool> flips;
  std::vector<double> bright;
  std::vector<double> flow_rows;
  for (const auto& d : draws) {
    const auto& s = samples[d.sample];
    clips.push_back(&s);
    indices.push_back(d.indices);
    flips.push_back(d.flip);
    bright.push_back(d.brightness);
    b.labels.push_back(class_index(d.flip ? flip_class(s.label) : s.label));
    if (flows) gather_flow((*flows)[d.sample], d.indices, d.flip, flow_rows);
  }
  b.frames = pack_batch(clips, indices, flips, bright);
  if (flows) {
    const std::size_t rows = flow_rows.size() / grid_cells;
    b.flow = Tensor({rows, grid_cells}, std::move(flow_rows));
  }
  return b;
}

void check_compatible(const FlamingModel& model, const std::vector<VideoSample>& samples, const FlowPrepConfig& fc) {
  const auto& mc = model.config();
  if (mc.relation.classes != kNumClasses) {
    throw ConfigError("model predicts " + std::to_string(mc.relation.classes) + " classes, the dataset has " +
                      std::to_string(kNumClasses));
  }
  if (fc.grid_height != mc.encoder.grid_height || fc.grid_width != mc.encoder.grid_width) {
    throw ConfigError("flow grid " + std::to_string(fc.grid_height) + "x" + std::to_string(fc.grid_width) +
                      " differs from the feature grid " + std::to_string(mc.encoder.grid_height) + "x" +
                      std::to_string(mc.encoder.grid_width));
  }
  for (const auto& s : samples) {
    if (s.height != mc.backbone.in_height || s.width != mc.backbone.in_width) {
      throw ConfigError("sample " + s.id + " does not match the model input size");
    }
    if (s.frames_raw < mc.relation.frames) {
      throw ConfigError("sample " + s.id + " has fewer raw frames than T=" + std::to_string(mc.relation.frames));
    }
  }
}

std::ofstream open_csv(const std::filesystem::path& path, const char* header) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << header << '\n' << std::setprecision(17);
  return os;
}

}  // namespace

TrainResult train(FlamingModel& model, const std::vector<VideoSample>& train_set, const TrainConfig& cfg,
                  const LossConfig& loss_cfg, const FlowPrepConfig& flow_cfg, const TrainOutputs& outputs) {
  if (train_set.empty()) throw ContractError("train: empty training set");
  cfg.validate();
  flow_cfg.validate();
  loss_cfg.validate(model.config().encoder.tokens);
  check_compatible(model, train_set, flow_cfg);
  const std::size_t frames = model.config().relation.frames;
  const std::size_t cells = flow_cfg.grid_height * flow_cfg.grid_width;

  std::optional<std::vector<FlowMap>> flows;
  if (loss_cfg.use_flm) flows = precompute_flow(train_set, flow_cfg);

  std::ofstream loss_csv, metrics_csv;
  if (outputs.dir) {
    std::filesystem::create_directories(*outputs.dir);
    loss_csv = open_csv(*outputs.dir / "loss.csv", "step,L_CE,L_flm,L_tco,L_gf,mean_rho,total");
    metrics_csv = open_csv(*outputs.dir / "metrics.csv", "epoch,lr,mean_loss,val_mca,val_mpca,val_merged_mca");
  }

  const auto params = model.params().tensors();
  AdamState adam = AdamState::for_params(params);
  TrainResult result;
  std::size_t step = 0;
  std::vector<std::size_t> order(train_set.size());

  for (std::size_t epoch = 0; epoch < cfg.schedule.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg.schedule);
    Rng rng(derive_seed(cfg.seed, epoch));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t n = std::min(cfg.batch, order.size() - start);
      std::vector<Draw> draws(n);
      for (std::size_t i = 0; i < n; ++i) {
        auto& d = draws[i];
        d.sample = order[start + i];
        d.indices = segment_indices(train_set[d.sample].frames_raw, frames, cfg.sampling, rng());
        d.flip = cfg.flip && uniform(rng, 0.0, 1.0) < 0.5;
        if (cfg.brightness) d.brightness = uniform(rng, cfg.brightness_lo, cfg.brightness_hi);
      }
      const Batch b = assemble(train_set, flows ? &*flows : nullptr, draws, cells);

      StepLog log;
      log.step = step;
      log.epoch = epoch;
      log.lr = lr;
      try {
        model.params().zero_grad();
        Tape tape;
        TapeScope scope(tape);
        const auto out = model.forward(b.frames);
        auto losses = compute_losses(out, b.flow, b.labels, frames, loss_cfg);
        tape.backward(losses.total);
        log.parts = std::move(losses.parts);
      } catch (const NonFiniteError& e) {
        throw NonFiniteError("training step " + std::to_string(step) + " (epoch " + std::to_string(epoch) +
                             "): " + e.what());
      }
      adam_step(params, adam, lr, cfg.adam);

      loss_sum += log.parts.total;
      ++batches;
      if (loss_csv.is_open()) {
        const auto& p = log.parts;
        loss_csv << step << ',' << p.ce << ',' << p.flm << ',' << p.tco << ',' << p.gf << ',' << p.mean_rho() << ','
                 << p.total << '\n';
      }
      if (outputs.on_step) outputs.on_step(log);
      result.steps.push_back(std::move(log));
      ++step;
    }

    EpochLog elog;
    elog.epoch = epoch;
    elog.lr = lr;
    elog.mean_loss = loss_sum / static_cast<double>(batches);
    if (outputs.validation && !outputs.validation->empty()) {
      EvalOptions eo;
      eo.batch = cfg.batch;
      eo.localization = false;
      const auto rep = evaluate(model, *outputs.validation, eo);
      elog.val_mca = mca(rep.confusion);
      elog.val_mpca = mpca(rep.confusion);
      elog.val_merged_mca = merged_mca(rep.confusion, default_merge_map());
    }
    if (metrics_csv.is_open()) {
      metrics_csv << epoch << ',' << lr << ',' << elog.mean_loss;
      for (const auto& v : {elog.val_mca, elog.val_mpca, elog.val_merged_mca}) {
        metrics_csv << ',';
        if (v) metrics_csv << *v;
      }
      metrics_csv << '\n' << std::flush;
      loss_csv << std::flush;
    }
    if (outputs.on_epoch) outputs.on_epoch(elog);
    result.epochs.push_back(elog);
  }

  if (outputs.dir) {
    const auto ckpt = *outputs.dir / "checkpoint";
    std::filesystem::remove_all(ckpt);
    model.params().save(ckpt);
  }
  return result;
}

double dataset_loss(const FlamingModel& model, const std::vector<VideoSample>& samples, std::size_t batch,
                    const LossConfig& loss_cfg, const FlowPrepConfig& flow_cfg) {
  if (samples.empty() || batch == 0) throw ContractError("dataset_loss: empty dataset or zero batch");
  check_compatible(model, samples, flow_cfg);
  const std::size_t frames = model.config().relation.frames;
  std::optional<std::vector<FlowMap>> flows;
  if (loss_cfg.use_flm) flows = precompute_flow(samples, flow_cfg);
  NoTapeScope none;
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < samples.size(); start += batch) {
    const std::size_t n = std::min(batch, samples.size() - start);
    std::vector<Draw> draws(n);
    for (std::size_t i = 0; i < n; ++i) {
      draws[i].sample = start + i;
      draws[i].indices = segment_indices(samples[start + i].frames_raw, frames, SamplingMode::Eval, 0);
    }
    const Batch b = assemble(samples, flows ? &*flows : nullptr, draws, flow_cfg.grid_height * flow_cfg.grid_width);
    total += compute_losses(model.forward(b.frames), b.flow, b.labels, frames, loss_cfg).parts.total;
    ++batches;
  }
  return total / static_cast<double>(batches);
}

}  // namespace flaming
