#include "flaming/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "flaming/errors.hpp"

namespace flaming {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || p != end) throw ConfigError(key + ": cannot parse '" + v + "' as a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

template <class T>
std::string format_number(T v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

template <class E>
struct EnumNames {
  std::vector<std::pair<E, std::string>> names;

  E parse(const std::string& key, const std::string& v) const {
    for (const auto& [e, n] : names) {
      if (n == v) return e;
    }
    std::string allowed;
    for (const auto& [e, n] : names) allowed += (allowed.empty() ? "" : "|") + n;
    throw ConfigError(key + ": expected one of " + allowed + ", got '" + v + "'");
  }
  std::string name(E e) const {
    for (const auto& [x, n] : names) {
      if (x == e) return n;
    }
    return "?";
  }
  std::string choices() const {
    std::string s;
    for (const auto& [e, n] : names) s += (s.empty() ? "" : "|") + n;
    return s;
  }
};

const EnumNames<DetachMode> kDetach{{{DetachMode::ConvInput, "conv_input"}, {DetachMode::GfBranch, "gf_branch"},
                                     {DetachMode::None, "none"}}};
const EnumNames<FuseMode> kFuse{{{FuseMode::Logits, "logits"}, {FuseMode::Probabilities, "probabilities"}}};
const EnumNames<FlmBlocks> kBlocks{{{FlmBlocks::All, "all"}, {FlmBlocks::FirstHalf, "first_half"},
                                    {FlmBlocks::SecondHalf, "second_half"}}};
const EnumNames<AlignLoss> kAlign{{{AlignLoss::Contrastive, "contrastive"}, {AlignLoss::L1, "l1"}}};
const EnumNames<SamplingMode> kSampling{{{SamplingMode::Train, "segment"}, {SamplingMode::Random, "random"},
                                         {SamplingMode::Eval, "center"}}};

struct Entry {
  RunConfig::Key key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class T, class Field>
Entry number(std::string name, std::string help, Field field) {
  Entry e{{name, std::move(help)}, {}, {}};
  e.set = [name, field](RunConfig& c, const std::string& v) { field(c) = parse_number<T>(name, v); };
  e.get = [field](const RunConfig& c) { return format_number(field(const_cast<RunConfig&>(c))); };
  return e;
}

template <class Field>
Entry size(std::string name, std::string help, Field field) {
  return number<std::size_t>(std::move(name), std::move(help), field);
}

template <class Field>
Entry real(std::string name, std::string help, Field field) {
  return number<double>(std::move(name), std::move(help), field);
}

template <class Field>
Entry flag(std::string name, std::string help, Field field) {
  Entry e{{name, std::move(help)}, {}, {}};
  e.set = [name, field](RunConfig& c, const std::string& v) { field(c) = parse_bool(name, v); };
  e.get = [field](const RunConfig& c) -> std::string { return field(const_cast<RunConfig&>(c)) ? "true" : "false"; };
  return e;
}

template <class E, class Field>
Entry choice(std::string name, std::string help, const EnumNames<E>& names, Field field) {
  Entry e{{name, std::move(help) + " (" + names.choices() + ")"}, {}, {}};
  e.set = [name, field, &names](RunConfig& c, const std::string& v) { field(c) = names.parse(name, v); };
  e.get = [field, &names](const RunConfig& c) { return names.name(field(const_cast<RunConfig&>(c))); };
  return e;
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    // data
    t.push_back(size("height", "frame height H0 in pixels", [](RunConfig& c) -> auto& { return c.gen.height; }));
    t.push_back(size("width", "frame width W0 in pixels", [](RunConfig& c) -> auto& { return c.gen.width; }));
    t.push_back(size("frames_raw", "rendered frames per clip", [](RunConfig& c) -> auto& { return c.gen.frames; }));
    t.push_back(size("min_actors", "fewest actors per clip", [](RunConfig& c) -> auto& { return c.gen.min_actors; }));
    t.push_back(size("max_actors", "most actors per clip", [](RunConfig& c) -> auto& { return c.gen.max_actors; }));
    t.push_back(real("radius", "actor disk radius in pixels", [](RunConfig& c) -> auto& { return c.gen.radius; }));
    t.push_back(real("min_speed", "slowest key-actor speed, px/frame", [](RunConfig& c) -> auto& { return c.gen.min_speed; }));
    t.push_back(real("max_speed", "fastest key-actor speed, px/frame", [](RunConfig& c) -> auto& { return c.gen.max_speed; }));
    t.push_back(real("walk_speed", "step scale of non-key random walks", [](RunConfig& c) -> auto& { return c.gen.walk_speed; }));
    t.push_back(real("jitter", "camera jitter amplitude in pixels", [](RunConfig& c) -> auto& { return c.gen.jitter; }));
    {
      Entry e{{"class_mix", "comma-separated class names cycled by generate; empty means all"}, {}, {}};
      e.set = [](RunConfig& c, const std::string& v) {
        std::vector<ActivityClass> mix;
        for (const auto& n : split_list(v)) {
          try {
            mix.push_back(parse_class(n));
          } catch (const SchemaError&) {
            throw ConfigError("class_mix: unknown class '" + n + "'");
          }
        }
        c.gen.class_mix = std::move(mix);
      };
      e.get = [](const RunConfig& c) {
        std::string s;
        for (auto k : c.gen.class_mix) s += (s.empty() ? "" : ",") + std::string(class_name(k));
        return s;
      };
      t.push_back(std::move(e));
    }
    t.push_back(number<std::uint64_t>("data_seed", "dataset generation seed (generate --seed)",
                                      [](RunConfig& c) -> auto& { return c.gen.seed; }));
    t.push_back(size("count", "clips written by generate", [](RunConfig& c) -> auto& { return c.count; }));
    // model
    {
      Entry e{{"backbone_widths", "comma-separated channel widths of the stride-2 conv stages"}, {}, {}};
      e.set = [](RunConfig& c, const std::string& v) {
        std::vector<std::size_t> w;
        for (const auto& x : split_list(v)) w.push_back(parse_number<std::size_t>("backbone_widths", x));
        c.model.backbone.widths = std::move(w);
      };
      e.get = [](const RunConfig& c) {
        std::string s;
        for (auto w : c.model.backbone.widths) s += (s.empty() ? "" : ",") + std::to_string(w);
        return s;
      };
      t.push_back(std::move(e));
    }
    t.push_back(size("channels", "token width C", [](RunConfig& c) -> auto& { return c.model.backbone.channels; }));
    t.push_back(size("tokens", "actor queries K", [](RunConfig& c) -> auto& { return c.model.encoder.tokens; }));
    t.push_back(size("blocks", "encoder blocks L", [](RunConfig& c) -> auto& { return c.model.encoder.blocks; }));
    t.push_back(size("heads", "attention heads (encoder and relation)", [](RunConfig& c) -> auto& { return c.model.encoder.heads; }));
    t.push_back(flag("feed_forward", "FFN sublayer in encoder blocks", [](RunConfig& c) -> auto& { return c.model.encoder.feed_forward; }));
    t.push_back(flag("positional", "grid positional encoding on MHCA keys", [](RunConfig& c) -> auto& { return c.model.encoder.positional; }));
    t.push_back(flag("positional_values", "positional encoding on MHCA values too",
                     [](RunConfig& c) -> auto& { return c.model.encoder.positional_values; }));
    t.push_back(real("query_init_std", "std of the initial actor queries",
                     [](RunConfig& c) -> auto& { return c.model.encoder.query_init_std; }));
    t.push_back(size("frames", "sampled frames per clip T", [](RunConfig& c) -> auto& { return c.model.relation.frames; }));
    t.push_back(size("conv1d_layers", "temporal conv layers (actor path)", [](RunConfig& c) -> auto& { return c.model.relation.conv1d_layers; }));
    t.push_back(size("conv1d_width", "temporal conv width", [](RunConfig& c) -> auto& { return c.model.relation.conv1d_width; }));
    t.push_back(size("conv1d_padding", "temporal conv padding", [](RunConfig& c) -> auto& { return c.model.relation.conv1d_padding; }));
    t.push_back(size("conv2d_layers", "spatio-temporal conv layers (group path)", [](RunConfig& c) -> auto& { return c.model.relation.conv2d_layers; }));
    t.push_back(size("conv2d_kernel_t", "group conv kernel along time", [](RunConfig& c) -> auto& { return c.model.relation.conv2d_kernel_t; }));
    t.push_back(size("conv2d_kernel_s", "group conv kernel along tokens", [](RunConfig& c) -> auto& { return c.model.relation.conv2d_kernel_s; }));
    t.push_back(size("conv2d_stride_t", "group conv stride along time", [](RunConfig& c) -> auto& { return c.model.relation.conv2d_stride_t; }));
    t.push_back(size("conv2d_stride_s", "group conv stride along tokens", [](RunConfig& c) -> auto& { return c.model.relation.conv2d_stride_s; }));
    t.push_back(flag("share_relation", "one relation MHSA for both paths", [](RunConfig& c) -> auto& { return c.model.relation.share_relation; }));
    t.push_back(flag("use_group_path", "enable the group path (off = actor path only)",
                     [](RunConfig& c) -> auto& { return c.model.relation.use_group_path; }));
    t.push_back(choice("detach", "gradient stop in the group path", kDetach, [](RunConfig& c) -> auto& { return c.model.relation.detach; }));
    t.push_back(choice("fuse", "classifier averaging", kFuse, [](RunConfig& c) -> auto& { return c.model.relation.fuse; }));
    t.push_back(number<std::uint64_t>("init_seed", "parameter initialisation seed",
                                      [](RunConfig& c) -> auto& { return c.model.init_seed; }));
    // losses
    t.push_back(real("tau", "contrastive temperature", [](RunConfig& c) -> auto& { return c.loss.tau; }));
    t.push_back(size("k_flm", "tokens averaged into the representative attention", [](RunConfig& c) -> auto& { return c.loss.k_flm; }));
    t.push_back(flag("inclusive_denominator", "keep the positive in contrastive denominators",
                     [](RunConfig& c) -> auto& { return c.loss.inclusive_denominator; }));
    t.push_back(flag("batch_mean_gate", "gate the flow loss by the batch-mean confidence",
                     [](RunConfig& c) -> auto& { return c.loss.batch_mean_gate; }));
    t.push_back(choice("flm_blocks", "encoder blocks aligned to flow", kBlocks, [](RunConfig& c) -> auto& { return c.loss.flm_blocks; }));
    t.push_back(choice("flm_kind", "flow alignment loss", kAlign, [](RunConfig& c) -> auto& { return c.loss.flm_kind; }));
    t.push_back(choice("tco_kind", "temporal consistency loss", kAlign, [](RunConfig& c) -> auto& { return c.loss.tco_kind; }));
    t.push_back(flag("use_flm", "flow alignment loss on", [](RunConfig& c) -> auto& { return c.loss.use_flm; }));
    t.push_back(flag("use_tco", "temporal consistency loss on", [](RunConfig& c) -> auto& { return c.loss.use_tco; }));
    t.push_back(flag("use_gf", "per-frame classifier loss on", [](RunConfig& c) -> auto& { return c.loss.use_gf; }));
    // flow
    t.push_back(real("flow_quantile", "flow suppression quantile", [](RunConfig& c) -> auto& { return c.flow.quantile; }));
    t.push_back(flag("flow_per_clip", "normalise flow by the clip max instead of per frame",
                     [](RunConfig& c) -> auto& { return c.flow.per_clip; }));
    // training
    t.push_back(size("epochs", "training epochs", [](RunConfig& c) -> auto& { return c.train.schedule.epochs; }));
    t.push_back(size("warmup_epochs", "linear warmup length", [](RunConfig& c) -> auto& { return c.train.schedule.warmup_epochs; }));
    t.push_back(size("decay_start", "epoch where linear decay to zero begins", [](RunConfig& c) -> auto& { return c.train.schedule.decay_start; }));
    t.push_back(real("lr_peak", "learning rate after warmup", [](RunConfig& c) -> auto& { return c.train.schedule.lr_peak; }));
    t.push_back(real("lr_min", "learning rate at epoch 0", [](RunConfig& c) -> auto& { return c.train.schedule.lr_min; }));
    t.push_back(size("batch", "clips per step N", [](RunConfig& c) -> auto& { return c.train.batch; }));
    t.push_back(number<std::uint64_t>("seed", "training shuffle and augmentation seed",
                                      [](RunConfig& c) -> auto& { return c.train.seed; }));
    t.push_back(real("beta1", "Adam beta1", [](RunConfig& c) -> auto& { return c.train.adam.beta1; }));
    t.push_back(real("beta2", "Adam beta2", [](RunConfig& c) -> auto& { return c.train.adam.beta2; }));
    t.push_back(real("adam_eps", "Adam epsilon", [](RunConfig& c) -> auto& { return c.train.adam.eps; }));
    t.push_back(real("weight_decay", "L2 weight decay", [](RunConfig& c) -> auto& { return c.train.adam.weight_decay; }));
    t.push_back(flag("decoupled_weight_decay", "AdamW-style decay instead of L2 in the gradient",
                     [](RunConfig& c) -> auto& { return c.train.adam.decoupled; }));
    t.push_back(flag("flip", "horizontal flip augmentation with label swap", [](RunConfig& c) -> auto& { return c.train.flip; }));
    t.push_back(flag("brightness", "per-clip brightness augmentation", [](RunConfig& c) -> auto& { return c.train.brightness; }));
    t.push_back(real("brightness_lo", "lowest brightness factor", [](RunConfig& c) -> auto& { return c.train.brightness_lo; }));
    t.push_back(real("brightness_hi", "highest brightness factor", [](RunConfig& c) -> auto& { return c.train.brightness_hi; }));
    t.push_back(choice("sampling", "training frame sampling", kSampling, [](RunConfig& c) -> auto& { return c.train.sampling; }));
    return t;
  }();
  return table;
}

const Entry& find(const std::string& key) {
  for (const auto& e : entries()) {
    if (e.key.name == key) return e;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

const std::vector<RunConfig::Key>& RunConfig::keys() {
  static const std::vector<Key> k = [] {
    std::vector<Key> out;
    for (const auto& e : entries()) out.push_back(e.key);
    return out;
  }();
  return k;
}

void RunConfig::set(const std::string& key, const std::string& value) { find(key).set(*this, trim(value)); }

std::string RunConfig::get(const std::string& key) const { return find(key).get(*this); }

void RunConfig::parse(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    try {
      set(key, body.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  parse(ss.str(), path.string());
}

void RunConfig::resolve() {
  gen.validate();
  if (count == 0) throw ConfigError("count must be positive");
  model.backbone.in_height = gen.height;
  model.backbone.in_width = gen.width;
  model.relation.heads = model.encoder.heads;
  model.relation.classes = kNumClasses;
  model.resolve();
  flow.grid_height = model.encoder.grid_height;
  flow.grid_width = model.encoder.grid_width;
  flow.validate();
  loss.validate(model.encoder.tokens);
  train.validate();
  if (model.relation.frames > gen.frames) {
    throw ConfigError("frames=" + std::to_string(model.relation.frames) + " exceeds frames_raw=" +
                      std::to_string(gen.frames));
  }
}

std::string RunConfig::render() const {
  std::string out;
  for (const auto& e : entries()) out += e.key.name + " = " + e.get(*this) + "\n";
  return out;
}

void RunConfig::write_snapshot(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "# resolved configuration\n" << render();
  if (!os) throw IoError("write failed for " + path.string());
}

}  // namespace flaming
