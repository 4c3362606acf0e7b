// Acceptance run: one PASS/FAIL line per criterion, exit status 1 when any
// criterion fails. Usage: acceptance [criterion numbers...] (default: all).

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "contrastive_oracle.hpp"
#include "flaming/evaluation.hpp"
#include "flaming/flowproc.hpp"
#include "flaming/gradsuite.hpp"
#include "flaming/losses.hpp"
#include "flaming/metrics.hpp"
#include "flaming/run_config.hpp"
#include "flaming/training.hpp"
#include "test_support.hpp"

using namespace flaming;
using flaming::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

// ---- pinned tolerances ----
constexpr double kGradTolerance = 1e-4;
constexpr double kGradSuiteSeconds = 300.0;
constexpr std::size_t kOracleInstances = 200;
constexpr double kOracleTolerance = 1e-10;
constexpr double kClosedFormTolerance = 1e-14;
constexpr std::size_t kOffsetTrials = 100;
constexpr double kFlowQuantile = 0.85;
constexpr std::size_t kRandomMerges = 1000;
constexpr double kBenchmarkMca = 0.70;
constexpr double kBenchmarkSeconds = 1800.0;  // 30 min of 4-core wall time
constexpr double kAblationMargin = 0.02;      // 2 MCA points
constexpr std::size_t kBenchmarkClips = 400;  // 280 / 60 / 60 after the split
const std::vector<std::uint64_t> kSeeds{1, 2, 3};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

struct Verdict {
  bool pass = true;
  std::string detail;
};

// ---- 1. gradient suite ----

Verdict gradient_suite() {
  const auto t0 = Clock::now();
  GradSuiteOptions opts;
  opts.check.step = 1e-5;
  opts.check.tolerance = kGradTolerance;
  const auto entries = run_gradient_suite(opts);
  const double elapsed = seconds_since(t0);
  Verdict v;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& e : entries) {
    if (e.report.max_rel_error >= worst) {
      worst = e.report.max_rel_error;
      worst_name = e.name;
    }
    if (!e.report.passed || !(e.report.max_rel_error < kGradTolerance)) {
      v.pass = false;
      v.detail += e.name + " failed (" + fmt(e.report.max_rel_error) + "); ";
    }
  }
  if (!(elapsed < kGradSuiteSeconds)) v.pass = false;
  v.detail += std::to_string(entries.size()) + " checks, worst " + worst_name + " rel " + fmt(worst) + " < " +
              fmt(kGradTolerance) + ", " + fmt(elapsed, 3) + " s < " + fmt(kGradSuiteSeconds, 3) + " s";
  return v;
}

// ---- 2. contrastive oracles ----

Verdict contrastive_oracles() {
  using namespace flaming::oracle;
  NoTapeScope none;
  std::mt19937_64 g(2024);
  std::uniform_int_distribution<std::size_t> small(2, 6);
  std::uniform_real_distribution<double> tau_dist(0.1, 2.0);
  double worst_flm = 0.0, worst_tco = 0.0;
  for (std::size_t i = 0; i < kOracleInstances; ++i) {
    // Flow alignment: NT rows against NT flow maps, 1-3 blocks.
    const std::size_t rows = small(g), cells = small(g) + 2, blocks = 1 + i % 3;
    const double tau = tau_dist(g);
    const Tensor m = random_tensor(g, {rows, cells}, 0.0, 1.0);
    std::vector<Tensor> att;
    std::vector<Rows> att_rows;
    for (std::size_t l = 0; l < blocks; ++l) {
      att.push_back(random_tensor(g, {rows, cells}, 0.0, 1.0));
      att_rows.push_back(rows_of(att.back()));
    }
    worst_flm = std::max(worst_flm, std::abs(loss_flm(att, m, tau).item() - flm_oracle(att_rows, rows_of(m), tau)));

    // Temporal consistency: T frames of NK tokens.
    const std::size_t frames = small(g), tokens = small(g), channels = small(g);
    const Tensor w = random_tensor(g, {frames, tokens, channels});
    const double tau2 = tau_dist(g);
    worst_tco = std::max(worst_tco, std::abs(loss_tco(w, tau2).item() - tco_oracle(w, tau2)));
  }

  const double flm_eq = loss_flm({Tensor({4, 5}, 1.0)}, Tensor({4, 5}, 1.0), 0.5).item();
  const double tco_eq = loss_tco(Tensor({2, 2, 2}, {1, 0, 0, 1, 1, 0, 0, 1}), 1.0).item();
  const double flm_err = std::abs(flm_eq - std::log(3.0)), tco_err = std::abs(tco_eq + 2.0);

  Verdict v;
  v.pass = worst_flm <= kOracleTolerance && worst_tco <= kOracleTolerance && flm_err <= kClosedFormTolerance &&
           tco_err <= kClosedFormTolerance;
  v.detail = std::to_string(kOracleInstances) + " instances each, max |flm - oracle| " + fmt(worst_flm) +
             ", max |tco - oracle| " + fmt(worst_tco) + " (<= " + fmt(kOracleTolerance) + "); log 3 err " +
             fmt(flm_err) + ", -2 err " + fmt(tco_err);
  return v;
}

// ---- 3. gradient severance ----

ModelConfig tiny_model(DetachMode mode) {
  auto cfg = flaming::testing::tiny_model_config();
  cfg.relation.detach = mode;
  return cfg;
}

// Largest |gradient| of the group-path CE over backbone and encoder params.
double upstream_group_gradient(DetachMode mode) {
  FlamingModel model(tiny_model(mode));
  std::mt19937_64 g(33);
  const Tensor frames = random_tensor(g, {2 * 3, 3, 16, 24}, 0.0, 1.0);
  model.params().zero_grad();
  Tape tape;
  TapeScope scope(tape);
  const auto out = model.forward(frames);
  tape.backward(cross_entropy(out.relation.group.logits, {1, 6}));
  double worst = 0.0;
  std::size_t checked = 0;
  for (const auto& [name, t] : model.params().entries()) {
    if (name.rfind("backbone.", 0) != 0 && name.rfind("encoder.", 0) != 0) continue;
    ++checked;
    worst = std::max(worst, flaming::testing::max_abs(t.grad()));
  }
  if (checked == 0) throw std::runtime_error("no backbone or encoder parameters found");
  return worst;
}

Verdict severance() {
  const double cut = upstream_group_gradient(DetachMode::ConvInput);
  const double open = upstream_group_gradient(DetachMode::None);
  Verdict v;
  v.pass = cut == 0.0 && open > 0.0;
  v.detail = "detach on: max |grad| " + fmt(cut) + " (== 0); detach off: " + fmt(open) + " (> 0)";
  return v;
}

// ---- 4. flow preprocessing ----

Verdict flow_preprocessing() {
  // Values on a 1/256 lattice keep every subtraction exact, so the identity
  // is checked bitwise.
  std::mt19937_64 g(404);
  std::uniform_int_distribution<int> level(0, 4096);
  std::uniform_int_distribution<std::size_t> frame_side(4, 64);
  std::size_t invariant = 0, bounded = 0;
  for (std::size_t trial = 0; trial < kOffsetTrials; ++trial) {
    const std::size_t p = frame_side(g) * frame_side(g);
    std::vector<double> raw(p);
    for (auto& x : raw) x = level(g) / 256.0;
    const double offset = level(g) / 256.0;
    std::vector<double> shifted(raw);
    for (auto& x : shifted) x += offset;
    const auto a = quantile_suppress_normalize(raw, kFlowQuantile);
    if (a == quantile_suppress_normalize(shifted, kFlowQuantile)) ++invariant;
    const auto positive = static_cast<std::size_t>(std::count_if(a.begin(), a.end(), [](double x) { return x > 0; }));
    const auto keep = p - static_cast<std::size_t>(std::ceil(kFlowQuantile * static_cast<double>(p) - 1e-9));
    if (positive <= keep) ++bounded;
  }
  Verdict v;
  v.pass = invariant == kOffsetTrials && bounded == kOffsetTrials;
  v.detail = "offset invariance " + std::to_string(invariant) + "/" + std::to_string(kOffsetTrials) +
             ", positive count bound " + std::to_string(bounded) + "/" + std::to_string(kOffsetTrials);
  return v;
}

// ---- 5. weight sharing ----

struct PathOutputs {
  std::vector<double> actor, group;
};

PathOutputs path_outputs(const RelationModule& rel, const Tensor& tokens) {
  NoTapeScope none;
  const auto a = actor_path(rel, tokens);
  const auto g = group_path(rel, tokens);
  return {{a.logits.data().begin(), a.logits.data().end()}, {g.logits.data().begin(), g.logits.data().end()}};
}

Verdict weight_sharing() {
  RelationConfig cfg;
  cfg.channels = 4;
  cfg.tokens = 3;
  cfg.frames = 4;
  cfg.heads = 2;
  cfg.classes = 5;
  cfg.conv2d_layers = 1;
  std::mt19937_64 g(55);
  const Tensor tokens = random_tensor(g, {2 * 4, 3, 4});

  auto bump = [](Tensor t) {
    for (auto& x : t.mutable_data()) x += 0.3;
  };

  ParamStore shared_ps;
  Rng r1(5);
  auto shared = make_relation(shared_ps, "rel", cfg, r1);
  const auto s0 = path_outputs(shared, tokens);
  bump(shared.actor_mhsa.wv);
  const auto s1 = path_outputs(shared, tokens);
  const bool shared_couples = s0.actor != s1.actor && s0.group != s1.group;

  cfg.share_relation = false;
  ParamStore split_ps;
  Rng r2(5);
  auto split = make_relation(split_ps, "rel", cfg, r2);
  const auto u0 = path_outputs(split, tokens);
  bump(split.actor_mhsa.wv);
  const auto u1 = path_outputs(split, tokens);
  bump(split.group_mhsa.wv);
  const auto u2 = path_outputs(split, tokens);
  const bool split_decouples = u0.actor != u1.actor && u0.group == u1.group && u1.actor == u2.actor && u1.group != u2.group;

  Verdict v;
  v.pass = shared_couples && split_decouples;
  v.detail = std::string("shared: one mutation moves both paths ") + (shared_couples ? "yes" : "no") +
             "; unshared: each mutation moves only its own path " + (split_decouples ? "yes" : "no");
  return v;
}

// ---- 6 / 7. toy benchmark and ablations ----

enum class Variant { Full, NoFlow, ActorOnly, L1, GfBranchDetach };

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoFlow: return "no-flow";
    case Variant::ActorOnly: return "actor-only";
    case Variant::L1: return "l1-losses";
    case Variant::GfBranchDetach: return "detach-gf-branch";
  }
  return "?";
}

RunConfig benchmark_config(std::uint64_t seed, Variant variant) {
  RunConfig rc;
  rc.load_file(FLAMING_BENCHMARK_CONFIG);
  rc.gen.seed = seed;
  rc.model.init_seed = seed;
  rc.train.seed = seed;
  switch (variant) {
    case Variant::Full: break;
    case Variant::NoFlow: rc.loss.use_flm = false; break;
    case Variant::ActorOnly:
      rc.model.relation.use_group_path = false;
      rc.loss.use_gf = false;
      break;
    case Variant::L1:
      rc.loss.flm_kind = AlignLoss::L1;
      rc.loss.tco_kind = AlignLoss::L1;
      break;
    case Variant::GfBranchDetach: rc.model.relation.detach = DetachMode::GfBranch; break;
  }
  rc.resolve();
  return rc;
}

struct RunResult {
  Variant variant = Variant::Full;
  std::uint64_t seed = 0;
  double mca = 0.0;
  double mpca = 0.0;
  double localization = 0.0;
  double untrained_mca = 0.0;
  double seconds = 0.0;
};

struct Benchmark {
  std::vector<RunResult> runs;
  std::size_t train_clips = 0, test_clips = 0;
};

// For every seed: one dataset, every requested variant trained on its train
// split and evaluated on its test split with the flow removed. Variants of a
// seed run on parallel threads; seeds run one after another to bound memory.
Benchmark run_benchmark(const std::vector<Variant>& variants) {
  Benchmark bench;
  std::mutex mu;
  for (auto seed : kSeeds) {
    const auto rc = benchmark_config(seed, Variant::Full);
    auto split = split_dataset(generate_dataset(rc.gen, kBenchmarkClips), seed);
    split.val.clear();
    split.val.shrink_to_fit();
    drop_flow(split.test);
    bench.train_clips = split.train.size();
    bench.test_clips = split.test.size();

    std::vector<RunResult> results(variants.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < variants.size(); i = next++) {
        const auto t0 = Clock::now();
        const auto cfg = benchmark_config(seed, variants[i]);
        FlamingModel model(cfg.model);
        EvalOptions eval;
        eval.k_flm = cfg.loss.k_flm;
        RunResult r;
        r.variant = variants[i];
        r.seed = seed;
        r.untrained_mca = mca(evaluate(model, split.test, eval).confusion);
        train(model, split.train, cfg.train, cfg.loss, cfg.flow);
        const auto rep = evaluate(model, split.test, eval);
        r.mca = mca(rep.confusion);
        r.mpca = mpca(rep.confusion);
        r.localization = rep.localization.value_or(-1.0);
        r.seconds = seconds_since(t0);
        {
          std::lock_guard lock(mu);
          std::cout << "  seed " << seed << " " << variant_name(r.variant) << ": MCA " << fmt(r.mca) << ", MPCA "
                    << fmt(r.mpca) << ", localization " << fmt(r.localization) << ", untrained MCA "
                    << fmt(r.untrained_mca) << ", " << fmt(r.seconds, 3) << " s" << std::endl;
        }
        results[i] = r;
      }
    };
    const std::size_t threads = std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, variants.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    bench.runs.insert(bench.runs.end(), results.begin(), results.end());
  }
  return bench;
}

struct Summary {
  double mca = 0.0, localization = 0.0, untrained_max = 0.0, seconds = 0.0;
};

Summary summarize(const Benchmark& b, Variant v) {
  Summary s;
  double n = 0.0;
  for (const auto& r : b.runs) {
    if (r.variant != v) continue;
    s.mca += r.mca;
    s.localization += r.localization;
    s.untrained_max = std::max(s.untrained_max, r.untrained_mca);
    s.seconds += r.seconds;
    n += 1.0;
  }
  s.mca /= n;
  s.localization /= n;
  return s;
}

// Upper edge of the no-training chance band on `test_clips` clips: the larger
// of the binomial two-sigma bound around 1/8 and the best untrained model.
double chance_upper(const Summary& full, std::size_t test_clips) {
  const double p = 1.0 / static_cast<double>(kNumClasses);
  const double binomial = p + 2.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(test_clips));
  return std::max(binomial, full.untrained_max);
}

Verdict toy_benchmark(const Benchmark& b) {
  const auto full = summarize(b, Variant::Full);
  const double band = chance_upper(full, b.test_clips);
  // Per-run seconds are single-thread wall times; their sum bounds the wall
  // time of the three seeds on four cores.
  Verdict v;
  v.pass = full.mca >= kBenchmarkMca && full.mca > band && full.seconds < kBenchmarkSeconds;
  v.detail = std::to_string(b.train_clips) + "/" + std::to_string(b.test_clips) + " clips, mean test MCA " +
             fmt(full.mca) + " (>= " + fmt(kBenchmarkMca) + "), chance band upper edge " + fmt(band) +
             ", training time " + fmt(full.seconds, 4) + " s (< " + fmt(kBenchmarkSeconds, 4) + " s)";
  return v;
}

Verdict ablations(const Benchmark& b) {
  const auto full = summarize(b, Variant::Full), noflow = summarize(b, Variant::NoFlow),
             actor = summarize(b, Variant::ActorOnly), l1 = summarize(b, Variant::L1),
             gf_cut = summarize(b, Variant::GfBranchDetach);
  const bool a = full.localization > noflow.localization;
  const bool bb = full.mca >= actor.mca && full.mca >= actor.mca - kAblationMargin;
  Verdict v;
  v.pass = a && bb;
  v.detail = std::string("(a) localization with L_flm ") + fmt(full.localization) + " vs no-flow " +
             fmt(noflow.localization) + (a ? " raised" : " not raised") + "; (b) MCA full " + fmt(full.mca) +
             " vs actor-only " + fmt(actor.mca) + (bb ? " ok" : " below") + "; (c) L1 variants MCA " + fmt(l1.mca) +
             ", localization " + fmt(l1.localization) + "; detach on the L_gf branch MCA " + fmt(gf_cut.mca) +
             " (reported only)";
  return v;
}

// ---- 8. metrics ----

Verdict metrics_oracles() {
  bool ok = true;
  std::string notes;
  auto expect = [&](bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      notes += what + "; ";
    }
  };
  const auto names2 = std::vector<std::string>{"a", "b"};
  // diag(10, 5) with 5 off-diagonal: 15 / 20.
  expect(mca(ConfusionMatrix::from_counts(names2, {{10, 5}, {0, 5}})) == 0.75, "mca diag(10,5)");
  // Recalls 1.0 and 0.5.
  expect(mpca(ConfusionMatrix::from_counts(names2, {{4, 0}, {3, 3}})) == 0.75, "mpca recalls 1, 0.5");
  // Imbalanced 3x3 by hand: recalls 6/8, 1/2, 3/10 -> (0.75 + 0.5 + 0.3) / 3.
  const auto names3 = std::vector<std::string>{"a", "b", "c"};
  const auto cm3 = ConfusionMatrix::from_counts(names3, {{6, 1, 1}, {1, 1, 0}, {5, 2, 3}});
  expect(std::abs(mpca(cm3) - (0.75 + 0.5 + 0.3) / 3.0) < 1e-15, "mpca imbalanced");
  expect(std::abs(mca(cm3) - 10.0 / 20.0) < 1e-15, "mca imbalanced");
  // Folding b into a: rows/cols {a,b} -> 9 of 20 correct plus c's 3.
  MergeMap fold{{0, 0, 1}, {"ab", "c"}};
  expect(std::abs(merged_mca(cm3, fold) - 12.0 / 20.0) < 1e-15, "merged_mca fold");
  expect(merged_mca(cm3, identity_merge(3, names3)) == mca(cm3), "merged_mca identity");
  expect(merged_mca(cm3, MergeMap{{0, 0, 0}, {"all"}}) == 1.0, "merged_mca total");

  std::mt19937_64 g(808);
  std::uniform_int_distribution<std::size_t> count(0, 9), classes(2, 8);
  std::size_t holds = 0, brute_ok = 0;
  for (std::size_t trial = 0; trial < kRandomMerges; ++trial) {
    const std::size_t k = classes(g);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < k; ++i) names.push_back("c" + std::to_string(i));
    std::vector<std::vector<std::size_t>> counts(k, std::vector<std::size_t>(k));
    std::size_t total = 0;
    for (auto& row : counts) {
      for (auto& c : row) total += (c = count(g));
    }
    if (total == 0) counts[0][1] = total = 1;
    const auto cm = ConfusionMatrix::from_counts(names, counts);
    // Brute force: expand into samples and count the correct ones.
    std::size_t correct = 0, seen = 0;
    for (std::size_t t = 0; t < k; ++t) {
      for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t s = 0; s < counts[t][p]; ++s, ++seen) correct += t == p ? 1 : 0;
      }
    }
    if (mca(cm) == static_cast<double>(correct) / static_cast<double>(seen)) ++brute_ok;
    // Random surjective merge onto m classes.
    const std::size_t m = std::uniform_int_distribution<std::size_t>(1, k)(g);
    MergeMap map;
    map.target.resize(k);
    std::vector<std::size_t> order(k);
    for (std::size_t i = 0; i < k; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), g);
    for (std::size_t i = 0; i < k; ++i) {
      map.target[order[i]] = i < m ? i : std::uniform_int_distribution<std::size_t>(0, m - 1)(g);
    }
    for (std::size_t j = 0; j < m; ++j) map.merged_names.push_back("m" + std::to_string(j));
    if (merged_mca(cm, map) >= mca(cm)) ++holds;
  }
  expect(brute_ok == kRandomMerges, "mca brute force");
  expect(holds == kRandomMerges, "merged_mca >= mca");
  Verdict v;
  v.pass = ok;
  v.detail = "crafted matrices " + std::string(notes.empty() ? "match" : notes) + ", merged_mca >= mca on " +
             std::to_string(holds) + "/" + std::to_string(kRandomMerges) + " random merges, brute-force mca " +
             std::to_string(brute_ok) + "/" + std::to_string(kRandomMerges);
  return v;
}

// ---- 9. determinism and train-only flow ----

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

Verdict determinism_and_flow() {
  RunConfig rc;
  rc.set("min_actors", "4");
  rc.set("max_actors", "6");
  rc.set("backbone_widths", "2,3,4");
  rc.set("channels", "8");
  rc.set("tokens", "3");
  rc.set("blocks", "2");
  rc.set("heads", "2");
  rc.set("frames", "3");
  rc.set("conv2d_layers", "1");
  rc.set("k_flm", "2");
  rc.set("epochs", "2");
  rc.set("warmup_epochs", "1");
  rc.set("decay_start", "1");
  rc.set("batch", "2");
  rc.resolve();
  const auto split = split_dataset(generate_dataset(rc.gen, 20), 7);

  const auto root = fs::temp_directory_path() / "flaming_acceptance";
  fs::remove_all(root);
  // Two runs from one seed on parallel threads.
  std::vector<fs::path> dirs{root / "run_a", root / "run_b"};
  std::vector<std::thread> runs;
  for (const auto& dir : dirs) {
    runs.emplace_back([&, dir] {
      FlamingModel model(rc.model);
      TrainOutputs out;
      out.dir = dir;
      train(model, split.train, rc.train, rc.loss, rc.flow, out);
    });
  }
  for (auto& t : runs) t.join();
  std::size_t files = 0, identical = 0;
  for (const auto& entry : fs::directory_iterator(dirs[0] / "checkpoint")) {
    ++files;
    if (slurp(entry.path()) == slurp(dirs[1] / "checkpoint" / entry.path().filename())) ++identical;
  }
  const bool deterministic = files > 0 && files == identical;

  // The test split goes to disk without flow and is evaluated from there.
  auto test = split.test;
  drop_flow(test);
  write_dataset(test, root / "test");
  std::size_t flow_files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "test")) {
    if (entry.path().filename() == "flow.flmt") ++flow_files;
  }
  const auto reloaded = read_dataset(root / "test");
  const bool absent = flow_files == 0 && std::none_of(reloaded.begin(), reloaded.end(),
                                                      [](const VideoSample& s) { return s.has_flow(); });
  FlamingModel model(rc.model);
  model.params().load(dirs[0] / "checkpoint");
  EvalOptions eval;
  eval.k_flm = rc.loss.k_flm;
  const auto rep = evaluate(model, reloaded, eval);
  const bool evaluated = rep.confusion.total() == reloaded.size() && !reloaded.empty();
  fs::remove_all(root);

  Verdict v;
  v.pass = deterministic && absent && evaluated;
  v.detail = std::to_string(identical) + "/" + std::to_string(files) + " checkpoint files bitwise identical; " +
             std::to_string(flow_files) + " flow files in the test split, " + std::to_string(rep.confusion.total()) +
             " clips evaluated without flow";
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::stoi(argv[i]));
  auto want = [&](int c) { return wanted.empty() || wanted.count(c) > 0; };

  std::map<int, Verdict> verdicts;
  auto run = [&](int c, const std::function<Verdict()>& fn) {
    if (!want(c)) return;
    try {
      verdicts[c] = fn();
    } catch (const std::exception& e) {
      verdicts[c] = {false, std::string("threw: ") + e.what()};
    }
    std::cout << "criterion " << c << ": " << (verdicts[c].pass ? "PASS" : "FAIL") << "  " << verdicts[c].detail
              << std::endl;
  };

  run(1, gradient_suite);
  run(2, contrastive_oracles);
  run(3, severance);
  run(4, flow_preprocessing);
  run(5, weight_sharing);
  run(8, metrics_oracles);
  run(9, determinism_and_flow);
  if (want(6) || want(7)) {
    std::vector<Variant> variants{Variant::Full};
    if (want(7)) variants.insert(variants.end(), {Variant::NoFlow, Variant::ActorOnly, Variant::L1, Variant::GfBranchDetach});
    Benchmark bench;
    std::string failure;
    try {
      bench = run_benchmark(variants);
    } catch (const std::exception& e) {
      failure = std::string("threw: ") + e.what();
    }
    run(6, [&] { return failure.empty() ? toy_benchmark(bench) : Verdict{false, failure}; });
    run(7, [&] { return failure.empty() ? ablations(bench) : Verdict{false, failure}; });
  }

  std::cout << "\nsummary\n";
  bool all = true;
  for (const auto& [c, v] : verdicts) {
    std::cout << "criterion " << c << ": " << (v.pass ? "PASS" : "FAIL") << "\n";
    all = all && v.pass;
  }
  return all ? 0 : 1;
}
