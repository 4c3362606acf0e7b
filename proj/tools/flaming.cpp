// flaming: dataset generation, training, evaluation, gradient checks,
// attention export and flow preprocessing.
//
// Exit codes: 0 ok, 1 check failure, 2 config error, 3 I/O error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>

#include "flaming/attention_export.hpp"
#include "flaming/errors.hpp"
#include "flaming/evaluation.hpp"
#include "flaming/flowproc.hpp"
#include "flaming/gradsuite.hpp"
#include "flaming/run_config.hpp"
#include "flaming/tensor_io.hpp"
#include "flaming/training.hpp"

namespace fs = std::filesystem;
using namespace flaming;

namespace {

constexpr int kOk = 0, kCheckFailed = 1, kConfigError = 2, kIoError = 3;
constexpr const char* kSnapshot = "config.txt";

// --config plus one --<key> flag per RunConfig key on a subcommand.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App& cmd, const std::vector<std::string>& skip = {}) {
    cmd.add_option("--config", file, "key = value config file; flags below override it");
    auto* group = cmd.add_option_group("config keys", "Every key may also appear in the --config file");
    for (const auto& k : RunConfig::keys()) {
      if (std::find(skip.begin(), skip.end(), k.name) != skip.end()) continue;
      options[k.name] = group->add_option("--" + k.name, values[k.name], k.help);
    }
  }

  // Defaults <- base snapshot (if any) <- --config file <- flags.
  RunConfig resolve(const std::optional<fs::path>& base = std::nullopt) const {
    RunConfig rc;
    if (base) rc.load_file(*base);
    if (!file.empty()) rc.load_file(file);
    for (const auto& [name, opt] : options) {
      if (opt->count() > 0) rc.set(name, values.at(name));
    }
    rc.resolve();
    return rc;
  }
};

std::vector<VideoSample> load_split(const fs::path& data, const char* split) {
  const fs::path sub = data / split;
  return read_dataset(fs::exists(sub / "manifest.tsv") ? sub : data);
}

void load_checkpoint(FlamingModel& model, const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("checkpoint directory " + dir.string() + " does not exist");
  model.params().load(dir);
}

int cmd_generate(const ConfigFlags& flags, const fs::path& out, std::optional<std::size_t> count,
                 std::optional<std::uint64_t> seed) {
  RunConfig rc = flags.resolve();
  if (count) rc.count = *count;
  if (seed) rc.gen.seed = *seed;
  rc.resolve();
  auto split = split_dataset(generate_dataset(rc.gen, rc.count), rc.gen.seed);
  drop_flow(split.val);
  drop_flow(split.test);
  write_dataset(split.train, out / "train");
  write_dataset(split.val, out / "val");
  write_dataset(split.test, out / "test");
  rc.write_snapshot(out / kSnapshot);
  std::cout << "wrote " << split.train.size() << " train / " << split.val.size() << " val / " << split.test.size()
            << " test clips to " << out.string() << "\n";
  return kOk;
}

int cmd_train(const ConfigFlags& flags, const fs::path& data, const fs::path& out) {
  const RunConfig rc = flags.resolve();
  const auto train_set = read_dataset(data / "train");
  std::vector<VideoSample> val;
  if (fs::exists(data / "val" / "manifest.tsv")) val = read_dataset(data / "val");
  rc.write_snapshot(out / kSnapshot);

  FlamingModel model(rc.model);
  TrainOutputs outputs;
  outputs.dir = out;
  if (!val.empty()) outputs.validation = &val;
  outputs.on_epoch = [](const EpochLog& e) {
    std::cout << "epoch " << std::setw(2) << e.epoch << "  lr " << std::scientific << std::setprecision(3) << e.lr
              << std::defaultfloat << "  loss " << std::fixed << std::setprecision(4) << e.mean_loss;
    if (e.val_mca) std::cout << "  val_mca " << *e.val_mca;
    std::cout << std::defaultfloat << std::endl;
  };
  train(model, train_set, rc.train, rc.loss, rc.flow, outputs);
  rc.write_snapshot(out / "checkpoint" / kSnapshot);
  std::cout << "checkpoint written to " << (out / "checkpoint").string() << "\n";
  return kOk;
}

int cmd_eval(const ConfigFlags& flags, const fs::path& checkpoint, const fs::path& data, std::optional<fs::path> out) {
  const RunConfig rc = flags.resolve(checkpoint / kSnapshot);
  FlamingModel model(rc.model);
  load_checkpoint(model, checkpoint);
  const auto test = load_split(data, "test");
  EvalOptions eo;
  eo.batch = rc.train.batch;
  eo.k_flm = rc.loss.k_flm;
  const auto rep = evaluate(model, test, eo);
  const fs::path dir = out ? *out : checkpoint.parent_path() / "eval";
  fs::create_directories(dir);
  rc.write_snapshot(dir / kSnapshot);
  {
    std::ofstream os(dir / "confusion.txt");
    if (!os) throw IoError("cannot write " + (dir / "confusion.txt").string());
    os << rep.confusion.render();
  }
  std::cout << std::fixed << std::setprecision(4) << "clips       " << test.size() << "\n"
            << "MCA         " << mca(rep.confusion) << "\n"
            << "MPCA        " << mpca(rep.confusion) << "\n"
            << "merged MCA  " << merged_mca(rep.confusion, default_merge_map()) << "\n";
  if (rep.localization) std::cout << "localization " << *rep.localization << "\n";
  std::cout << rep.confusion.render();
  return kOk;
}

int cmd_gradcheck(const ConfigFlags& flags) {
  const RunConfig rc = flags.resolve();
  GradSuiteOptions opt;
  opt.seed = rc.train.seed;
  bool ok = true;
  double worst = 0.0;
  for (const auto& e : run_gradient_suite(opt)) {
    std::cout << (e.report.passed ? "ok   " : "FAIL ") << std::left << std::setw(34) << e.name << std::right
              << " max rel err " << std::scientific << std::setprecision(2) << e.report.max_rel_error << std::defaultfloat
              << " over " << e.report.coordinates << " coords\n";
    ok = ok && e.report.passed;
    worst = std::max(worst, e.report.max_rel_error);
  }
  std::cout << (ok ? "PASS" : "FAIL") << " gradient suite, max rel err " << std::scientific << worst << "\n";
  return ok ? kOk : kCheckFailed;
}

int cmd_export_attention(const ConfigFlags& flags, const fs::path& checkpoint, const fs::path& data,
                         const std::string& sample, const fs::path& out) {
  const RunConfig rc = flags.resolve(checkpoint / kSnapshot);
  FlamingModel model(rc.model);
  load_checkpoint(model, checkpoint);
  const auto samples = load_split(data, "test");
  const VideoSample* chosen = nullptr;
  for (const auto& s : samples) {
    if (s.id == sample) chosen = &s;
  }
  if (!chosen && !sample.empty() && sample.find_first_not_of("0123456789") == std::string::npos) {
    const auto i = std::stoul(sample);
    if (i < samples.size()) chosen = &samples[i];
  }
  if (!chosen) throw ConfigError("no sample '" + sample + "' in " + data.string());
  const auto files = export_attention(model, *chosen, rc.loss.k_flm, out);
  std::cout << "wrote " << files.size() << " maps for " << chosen->id << " (" << class_name(chosen->label) << ") to "
            << out.string() << "\n";
  return kOk;
}

int cmd_flowprep(const ConfigFlags& flags, const fs::path& in, const fs::path& out, std::optional<double> q) {
  RunConfig rc = flags.resolve();
  if (q) {
    rc.flow.quantile = *q;
    rc.flow.validate();
  }
  const auto raw = read_flmt(in);
  if (raw.shape.size() != 3) throw SchemaError(in.string() + ": expected a [T, H0, W0] flow tensor");
  const std::vector<double> values(raw.values.begin(), raw.values.end());
  const auto map = prepare_flow(values, raw.shape[0], raw.shape[1], raw.shape[2], rc.flow);
  const std::vector<float> narrowed(map.values.begin(), map.values.end());
  write_flmt(out, Shape{map.frames, map.height, map.width}, narrowed);
  std::cout << "wrote " << map.frames << " x " << map.height << " x " << map.width << " guidance to " << out.string()
            << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flow-guided actor-token group activity recognition on synthetic clips"};
  app.require_subcommand(1);

  ConfigFlags gen_flags, train_flags, eval_flags, grad_flags, export_flags, flow_flags;
  fs::path out, data, checkpoint, in;
  std::string sample;
  std::optional<std::size_t> count;
  std::optional<std::uint64_t> seed;
  std::optional<double> q;

  auto* gen = app.add_subcommand("generate", "Render a dataset split 70/15/15 into train/, val/ and test/");
  gen->add_option("--out", out, "output directory")->required();
  gen->add_option("--count", count, "clips to render (same as count)");
  gen->add_option("--seed", seed, "generation and split seed (same as data_seed)");
  gen_flags.attach(*gen, {"count"});

  auto* tr = app.add_subcommand("train", "Train a model; writes loss.csv, metrics.csv, checkpoint/");
  tr->add_option("--data", data, "dataset directory from generate")->required();
  tr->add_option("--out", out, "run directory")->required();
  train_flags.attach(*tr);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint: MCA, MPCA, merged MCA, confusion matrix");
  std::optional<fs::path> eval_out;
  ev->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  ev->add_option("--data", data, "dataset directory (its test/ split) or a split directory")->required();
  ev->add_option("--out", eval_out, "report directory (default: <checkpoint>/../eval)");
  eval_flags.attach(*ev);

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite; exit 1 on any failure");
  grad_flags.attach(*gc);

  auto* ex = app.add_subcommand("export-attention", "Write attention maps of one clip as PGM images");
  ex->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  ex->add_option("--data", data, "dataset directory (its test/ split) or a split directory")->required();
  ex->add_option("--sample", sample, "sample id or index")->required();
  ex->add_option("--out", out, "output directory")->required();
  export_flags.attach(*ex);

  auto* fp = app.add_subcommand("flowprep", "Quantile-suppress, normalise and downsample a raw flow tensor");
  fp->add_option("--in", in, "raw flow .flmt, shape [T, H0, W0]")->required();
  fp->add_option("--out", out, "output .flmt, shape [T, gh, gw]")->required();
  fp->add_option("--q", q, "suppression quantile (same as flow_quantile)");
  flow_flags.attach(*fp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*gen) return cmd_generate(gen_flags, out, count, seed);
    if (*tr) return cmd_train(train_flags, data, out);
    if (*ev) return cmd_eval(eval_flags, checkpoint, data, eval_out);
    if (*gc) return cmd_gradcheck(grad_flags);
    if (*ex) return cmd_export_attention(export_flags, checkpoint, data, sample, out);
    if (*fp) return cmd_flowprep(flow_flags, in, out, q);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCheckFailed;
  }
  return kCheckFailed;
}
