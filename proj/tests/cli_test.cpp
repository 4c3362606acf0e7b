#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sys/wait.h>

#include "flaming/attention_export.hpp"
#include "flaming/run_config.hpp"
#include "flaming/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace flaming;

namespace {

const fs::path& work() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "flaming_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct Run {
  int code;
  std::string out;
};

Run cli(const std::string& args) {
  const auto log = work() / "last_output.txt";
  const std::string cmd = std::string(FLAMING_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream is(log);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, {std::istreambuf_iterator<char>(is), {}}};
}

// Small clips and a minimal model so the whole pipeline runs in seconds.
const std::string kTiny =
    " --frames_raw 6 --min_actors 4 --max_actors 6 --backbone_widths 2,3,4 --channels 8 --tokens 3 --blocks 2"
    " --heads 2 --frames 3 --conv2d_layers 1 --k_flm 2";

std::string tree_bytes(const fs::path& dir) {
  std::string all;
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    std::ifstream is(f, std::ios::binary);
    all += fs::relative(f, dir).string() + "\n" + std::string(std::istreambuf_iterator<char>(is), {});
  }
  return all;
}

const fs::path& dataset() {
  static const fs::path d = [] {
    auto p = work() / "data";
    const auto r = cli("generate --out " + p.string() + " --count 20 --seed 3" + kTiny);
    EXPECT_EQ(r.code, 0) << r.out;
    return p;
  }();
  return d;
}

const fs::path& run_dir() {
  static const fs::path d = [] {
    auto p = work() / "run";
    const auto r = cli("train --data " + dataset().string() + " --out " + p.string() + kTiny +
                           " --epochs 2 --warmup_epochs 1 --decay_start 1 --batch 2");
    EXPECT_EQ(r.code, 0) << r.out;
    return p;
  }();
  return d;
}

}  // namespace

TEST(Cli, GenerateSplitsAndStripsEvaluationFlow) {
  const auto& d = dataset();
  const auto train = read_dataset(d / "train"), val = read_dataset(d / "val"), test = read_dataset(d / "test");
  EXPECT_EQ(train.size(), 14u);
  EXPECT_EQ(val.size(), 3u);
  EXPECT_EQ(test.size(), 3u);
  for (const auto& s : train) EXPECT_TRUE(s.has_flow());
  for (const auto& s : test) EXPECT_FALSE(s.has_flow());
  for (const auto& s : val) EXPECT_FALSE(s.has_flow());
  EXPECT_TRUE(fs::exists(d / "config.txt"));
}

TEST(Cli, GenerateIsDeterministic) {
  const auto again = work() / "data_again";
  const auto r = cli("generate --out " + again.string() + " --count 20 --seed 3" + kTiny);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(tree_bytes(dataset()), tree_bytes(again));
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(cli("generate --out " + (work() / "zero").string() + " --count 0").code, 2);
  EXPECT_EQ(cli("generate --out " + (work() / "x").string() + " --no_such_key 1").code, 2);
  EXPECT_EQ(cli("train --data " + dataset().string() + " --out " + (work() / "x").string() + " --tau abc").code, 2);
  {
    std::ofstream bad(work() / "bad.cfg");
    bad << "epochs = 3\nlearning_rate = 0.1\n";
  }
  EXPECT_EQ(cli("gradcheck --config " + (work() / "bad.cfg").string()).code, 2);
  EXPECT_EQ(cli("gradcheck --config " + (work() / "absent.cfg").string()).code, 3);
  EXPECT_EQ(cli("train --data " + (work() / "nowhere").string() + " --out " + (work() / "x").string()).code, 3);
  EXPECT_EQ(cli("eval --checkpoint " + (work() / "nowhere").string() + " --data " + dataset().string()).code, 3);
  EXPECT_EQ(cli("").code, 2);
}

TEST(Cli, HelpDocumentsEveryKeyOnEverySubcommand) {
  for (const char* sub : {"generate", "train", "eval", "gradcheck", "export-attention", "flowprep"}) {
    const auto r = cli(std::string(sub) + " --help");
    EXPECT_EQ(r.code, 0) << sub;
    for (const auto& k : RunConfig::keys()) {
      EXPECT_NE(r.out.find("--" + k.name), std::string::npos) << sub << " lacks " << k.name;
    }
  }
}

TEST(Cli, GradcheckPasses) {
  const auto r = cli("gradcheck");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("PASS gradient suite"), std::string::npos);
}

TEST(Cli, TrainWritesLogsCheckpointAndSnapshot) {
  const auto& d = run_dir();
  for (const char* f : {"loss.csv", "metrics.csv", "config.txt", "checkpoint/config.txt"}) {
    EXPECT_TRUE(fs::exists(d / f)) << f;
  }
  // The snapshot alone reproduces the run's configuration.
  RunConfig rc;
  rc.load_file(d / "config.txt");
  EXPECT_EQ(rc.train.schedule.epochs, 2u);
  EXPECT_EQ(rc.model.encoder.tokens, 3u);
}

TEST(Cli, EvalReportsMetricsAndWritesConfusion) {
  const auto r = cli("eval --checkpoint " + (run_dir() / "checkpoint").string() + " --data " + dataset().string());
  ASSERT_EQ(r.code, 0) << r.out;
  for (const char* s : {"MCA", "MPCA", "merged MCA", "columns: predicted class index"}) {
    EXPECT_NE(r.out.find(s), std::string::npos) << s;
  }
  EXPECT_TRUE(fs::exists(run_dir() / "eval" / "confusion.txt"));
}

TEST(Cli, ExportAttentionWritesOnePgmPerBlockFrameAndTokenFrame) {
  const auto out = work() / "maps";
  const auto r = cli("export-attention --checkpoint " + (run_dir() / "checkpoint").string() + " --data " +
                         dataset().string() + " --sample 0 --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.out;
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(out)) {
    const auto img = read_pgm(e.path());
    EXPECT_EQ(img.width, 12u);
    EXPECT_EQ(img.height, 8u);
    ++files;
  }
  EXPECT_EQ(files, 2u * 3u + 3u * 3u);  // L x T + 3 x T
  EXPECT_EQ(cli("export-attention --checkpoint " + (run_dir() / "checkpoint").string() + " --data " +
                    dataset().string() + " --sample nope --out " + out.string())
                .code,
            2);
}

TEST(Cli, FlowprepSuppressesAndDownsamples) {
  const auto in = work() / "raw.flmt", out = work() / "prepped.flmt";
  std::vector<float> raw(2 * 64 * 96, 1.0f);
  for (std::size_t i = 0; i < 200; ++i) raw[i] = 5.0f;  // a moving patch over a uniform background
  write_flmt(in, Shape{2, 64, 96}, raw);
  const auto r = cli("flowprep --in " + in.string() + " --out " + out.string() + " --q 0.85");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto m = read_flmt(out);
  EXPECT_EQ(m.shape, (Shape{2, 8, 12}));
  // Background at the quantile vanishes; the patch normalises to 1.
  EXPECT_EQ(*std::max_element(m.values.begin(), m.values.begin() + 96), 1.0f);
  EXPECT_EQ(m.values[95], 0.0f);
  EXPECT_EQ(*std::max_element(m.values.begin() + 96, m.values.end()), 0.0f);
}
