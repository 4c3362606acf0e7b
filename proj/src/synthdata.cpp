#include "flaming/synthdata.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <thread>

#include "flaming/errors.hpp"
#include "flaming/rng.hpp"
#include "flaming/tensor_io.hpp"

namespace flaming {

struct TrackAccess {
  static std::vector<ActorTrack>& tracks(VideoSample& s) { return s.tracks_; }
  static const std::vector<ActorTrack>& tracks(const VideoSample& s) { return s.tracks_; }
};

namespace {

constexpr std::array<std::string_view, kNumClasses> kNames{
    "converge-left", "converge-right", "scatter", "chase", "huddle-break", "cross-l2r", "cross-r2l", "lone-runner",
};

// Positions and jitter live on a 1/1024 px lattice, so mirroring x -> W - x
// is exact in binary floating point and survives the f32 round trip.
double quantize(double v) { return std::round(v * 1024.0) / 1024.0; }

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
double norm(Vec2 a) { return std::sqrt(a.x * a.x + a.y * a.y); }

struct DraftActor {
  std::vector<Vec2> path;
  std::array<float, 3> color{};
  bool is_key = false;
};

struct Draft {
  std::vector<DraftActor> actors;
  std::vector<Vec2> jitter;
};

struct Bounds {
  double x0, x1, y0, y1;
  Vec2 clamp(Vec2 p) const { return {std::clamp(p.x, x0, x1), std::clamp(p.y, y0, y1)}; }
};

ActivityClass canonical_class(ActivityClass c) {
  switch (c) {
    case ActivityClass::ConvergeRight:
      return ActivityClass::ConvergeLeft;
    case ActivityClass::CrossR2L:
      return ActivityClass::CrossL2R;
    default:
      return c;
  }
}

bool rendered_mirrored(ActivityClass c) { return c == ActivityClass::ConvergeRight || c == ActivityClass::CrossR2L; }

std::size_t key_count(ActivityClass canonical) {
  switch (canonical) {
    case ActivityClass::ConvergeLeft:
    case ActivityClass::Scatter:
    case ActivityClass::HuddleBreak:
      return 4;
    case ActivityClass::Chase:
      return 2;
    default:
      return 1;
  }
}

std::array<float, 3> draw_color(Rng& rng) {
  const double h = uniform(rng, 0.0, 6.0);
  const double s = uniform(rng, 0.6, 1.0);
  const double v = uniform(rng, 0.75, 1.0);
  const double c = v * s;
  const double x = c * (1.0 - std::fabs(std::fmod(h, 2.0) - 1.0));
  const double m = v - c;
  std::array<double, 3> rgb{};
  switch (static_cast<int>(h) % 6) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  return {static_cast<float>(rgb[0] + m), static_cast<float>(rgb[1] + m), static_cast<float>(rgb[2] + m)};
}

// Constant-speed walk from `from` towards `to`, stopping on arrival.
std::vector<Vec2> approach(Vec2 from, Vec2 to, double speed, std::size_t frames) {
  std::vector<Vec2> path(frames);
  const double dist = norm(to - from);
  for (std::size_t t = 0; t < frames; ++t) {
    const double f = dist > 0.0 ? std::min(1.0, speed * static_cast<double>(t) / dist) : 1.0;
    path[t] = from + f * (to - from);
  }
  return path;
}

// Straight line with velocity v, starting at `start`, released at frame t0.
std::vector<Vec2> line(Vec2 start, Vec2 v, std::size_t t0, std::size_t frames, const Bounds& b) {
  std::vector<Vec2> path(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    const double dt = t > t0 ? static_cast<double>(t - t0) : 0.0;
    path[t] = b.clamp(start + dt * v);
  }
  return path;
}

// Start point so that start and start + span stay inside the bounds; the
// span is shrunk first if it cannot fit at all.
Vec2 fit_start(Rng& rng, const Bounds& b, Vec2& span) {
  const double w = b.x1 - b.x0;
  const double h = b.y1 - b.y0;
  const double shrink = std::min({1.0, std::fabs(span.x) > 0 ? w / std::fabs(span.x) : 1.0,
                                  std::fabs(span.y) > 0 ? h / std::fabs(span.y) : 1.0});
  span = shrink * span;
  const double lo_x = b.x0 + std::max(0.0, -span.x);
  const double hi_x = b.x1 - std::max(0.0, span.x);
  const double lo_y = b.y0 + std::max(0.0, -span.y);
  const double hi_y = b.y1 - std::max(0.0, span.y);
  return {uniform(rng, lo_x, std::max(lo_x, hi_x)), uniform(rng, lo_y, std::max(lo_y, hi_y))};
}

void draw_key_actors(ActivityClass canonical, const GenConfig& cfg, const Bounds& b, Rng& rng, Draft& d) {
  const std::size_t T = cfg.frames;
  const double W = static_cast<double>(cfg.width);
  const double H = static_cast<double>(cfg.height);
  const double r = cfg.radius;
  const double last = static_cast<double>(T - 1);
  auto speed = [&] { return uniform(rng, cfg.min_speed, cfg.max_speed); };
  auto add = [&](std::vector<Vec2> path) {
    DraftActor a;
    a.path = std::move(path);
    a.is_key = true;
    d.actors.push_back(std::move(a));
  };
  switch (canonical) {
    case ActivityClass::ConvergeLeft: {
      const Vec2 target{uniform(rng, 0.15 * W, 0.25 * W), uniform(rng, 0.35 * H, 0.65 * H)};
      const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      std::vector<Vec2> starts;
      for (std::size_t i = 0; i < 4; ++i) {
        Vec2 s;
        for (int attempt = 0;; ++attempt) {
          if (attempt > 500) throw GenerationError("converge-left: cannot place key actors without overlap");
          s = {uniform(rng, std::max(b.x0, 0.55 * W), b.x1), uniform(rng, b.y0, b.y1)};
          bool ok = true;
          for (const auto& o : starts) ok = ok && norm(s - o) >= 2.0 * r + 1.0;
          if (ok) break;
        }
        starts.push_back(s);
        const double angle = phase + 0.5 * std::numbers::pi * static_cast<double>(i);
        const Vec2 end = b.clamp(target + 2.2 * r * Vec2{std::cos(angle), std::sin(angle)});
        add(approach(s, end, speed(), T));
      }
      break;
    }
    case ActivityClass::Scatter:
    case ActivityClass::HuddleBreak: {
      const Vec2 centre{uniform(rng, 0.35 * W, 0.65 * W), uniform(rng, 0.35 * H, 0.65 * H)};
      const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      const bool delayed = canonical == ActivityClass::HuddleBreak;
      const std::size_t t0 = delayed ? T / 2 : 0;
      for (std::size_t i = 0; i < 4; ++i) {
        const double angle = phase + 0.5 * std::numbers::pi * static_cast<double>(i);
        const Vec2 dir{std::cos(angle), std::sin(angle)};
        const double s = speed() * (delayed ? 1.5 : 1.0);
        add(line(b.clamp(centre + 1.9 * r * dir), s * dir, t0, T, b));
      }
      break;
    }
    case ActivityClass::Chase: {
      const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      const Vec2 dir{std::cos(angle), std::sin(angle)};
      const Vec2 gap = 3.0 * r * dir;
      Vec2 span = speed() * last * dir + gap;
      const Vec2 follower_start = fit_start(rng, b, span);
      const Vec2 v = last > 0 ? (1.0 / last) * (span - gap) : Vec2{};
      add(line(follower_start + gap, v, 0, T, b));
      add(line(follower_start, v, 0, T, b));
      break;
    }
    case ActivityClass::CrossL2R: {
      Vec2 span{1.5 * speed() * last, 0.0};
      const Vec2 start = fit_start(rng, b, span);
      add(line(start, last > 0 ? (1.0 / last) * span : Vec2{}, 0, T, b));
      break;
    }
    case ActivityClass::LoneRunner: {
      const double sign = uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
      Vec2 span{0.0, sign * speed() * last};
      const Vec2 start = fit_start(rng, b, span);
      add(line(start, last > 0 ? (1.0 / last) * span : Vec2{}, 0, T, b));
      break;
    }
    default:
      throw ContractError("draw_key_actors: not a canonical class");
  }
}

Draft draw(ActivityClass canonical, const GenConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  const double A = cfg.jitter;
  const double m = cfg.radius + A + 1.0;
  const Bounds b{m, static_cast<double>(cfg.width) - m, m, static_cast<double>(cfg.height) - m};
  if (b.x1 <= b.x0 || b.y1 <= b.y0) throw GenerationError("frame too small for actor radius and jitter");
  Draft d;
  const std::size_t keys = key_count(canonical);
  const std::size_t total = std::max(keys, uniform_index(rng, cfg.min_actors, cfg.max_actors));
  draw_key_actors(canonical, cfg, b, rng, d);
  const std::size_t T = cfg.frames;
  for (std::size_t i = keys; i < total; ++i) {
    Vec2 p;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 1000) {
        throw GenerationError("cannot place " + std::to_string(total) + " actors of radius " +
                              std::to_string(cfg.radius) + " without overlap");
      }
      p = {uniform(rng, b.x0, b.x1), uniform(rng, b.y0, b.y1)};
      bool ok = true;
      for (const auto& o : d.actors) ok = ok && norm(p - o.path[0]) >= 2.0 * cfg.radius + 1.0;
      if (ok) break;
    }
    DraftActor a;
    a.path.resize(T);
    Vec2 v{};
    std::normal_distribution<double> step(0.0, 1.0);
    for (std::size_t t = 0; t < T; ++t) {
      a.path[t] = p;
      v = 0.8 * v + cfg.walk_speed * Vec2{step(rng), step(rng)};
      p = b.clamp(p + v);
    }
    d.actors.push_back(std::move(a));
  }
  for (auto& a : d.actors) a.color = draw_color(rng);
  // Key actors are drawn first above; shuffle the paint order so "first
  // actors are key" is not something a model could pick up from occlusion.
  std::shuffle(d.actors.begin(), d.actors.end(), rng);
  d.jitter.resize(T);
  Vec2 j{uniform(rng, -A, A), uniform(rng, -A, A)};
  for (std::size_t t = 0; t < T; ++t) {
    d.jitter[t] = {quantize(j.x), quantize(j.y)};
    j = Vec2{std::clamp(j.x + uniform(rng, -0.5 * A, 0.5 * A), -A, A),
             std::clamp(j.y + uniform(rng, -0.5 * A, 0.5 * A), -A, A)};
  }
  for (auto& a : d.actors) {
    for (auto& p : a.path) p = {quantize(p.x), quantize(p.y)};
  }
  return d;
}

void mirror(Draft& d, double width) {
  for (auto& a : d.actors) {
    for (auto& p : a.path) p.x = width - p.x;
  }
  for (auto& j : d.jitter) j.x = -j.x;
}

// Static world texture seen through the camera offset; even in x about the
// frame centre so mirrored draws render mirrored pixels.
double background(std::size_t c, double a, double b) {
  static constexpr std::array<double, 3> base{0.30, 0.32, 0.28};
  static constexpr std::array<double, 3> kx{0.31, 0.19, 0.43};
  static constexpr std::array<double, 3> ky{0.23, 0.37, 0.17};
  return base[c] + 0.08 * std::cos(kx[c] * a) * std::cos(ky[c] * b + 0.5 * static_cast<double>(c)) +
         0.03 * std::cos(1.7 * a) * std::cos(1.3 * b);
}

VideoSample render(const Draft& d, ActivityClass label, const GenConfig& cfg) {
  VideoSample s;
  s.label = label;
  s.frames_raw = cfg.frames;
  s.height = cfg.height;
  s.width = cfg.width;
  const std::size_t T = cfg.frames;
  const std::size_t H = cfg.height;
  const std::size_t W = cfg.width;
  const double r = cfg.radius;
  const double half_w = static_cast<double>(W) / 2.0;
  const double half_h = static_cast<double>(H) / 2.0;
  s.frames.assign(T * H * W * 3, 0.0f);
  s.gt_flow.assign(T * H * W, 0.0f);
  auto screen = [&](const DraftActor& a, std::size_t t) { return a.path[t] + d.jitter[t]; };
  for (std::size_t t = 0; t < T; ++t) {
    const Vec2 j = d.jitter[t];
    const std::size_t ta = t + 1 < T ? t : t - 1;  // last frame repeats the previous displacement
    const double cam_flow = norm(d.jitter[ta + 1] - d.jitter[ta]);
    for (std::size_t y = 0; y < H; ++y) {
      const double py = static_cast<double>(y) + 0.5;
      for (std::size_t x = 0; x < W; ++x) {
        const double px = static_cast<double>(x) + 0.5;
        const double a = px - j.x - half_w;
        const double b = py - j.y - half_h;
        std::array<double, 3> rgb{background(0, a, b), background(1, a, b), background(2, a, b)};
        double flow = cam_flow;
        for (const auto& actor : d.actors) {
          const Vec2 c = screen(actor, t);
          const double dx = px - c.x;
          const double dy = py - c.y;
          const double dist = std::sqrt(dx * dx + dy * dy);
          const double cover = std::clamp(r + 0.5 - dist, 0.0, 1.0);
          if (cover > 0.0) {
            for (std::size_t k = 0; k < 3; ++k) rgb[k] = rgb[k] * (1.0 - cover) + actor.color[k] * cover;
          }
          if (dist <= r) flow = norm(screen(actor, ta + 1) - screen(actor, ta));
        }
        float* dst = s.frames.data() + ((t * H + y) * W + x) * 3;
        for (std::size_t k = 0; k < 3; ++k) dst[k] = static_cast<float>(std::clamp(rgb[k], 0.0, 1.0));
        s.gt_flow[(t * H + y) * W + x] = static_cast<float>(flow);
      }
    }
  }
  s.camera_jitter.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    s.camera_jitter[t] = {static_cast<float>(d.jitter[t].x), static_cast<float>(d.jitter[t].y)};
  }
  auto& tracks = TrackAccess::tracks(s);
  for (const auto& a : d.actors) {
    ActorTrack tr;
    tr.radius = static_cast<float>(r);
    tr.color = a.color;
    tr.is_key = a.is_key;
    for (const auto& p : a.path) tr.centers.push_back({static_cast<float>(p.x), static_cast<float>(p.y)});
    tracks.push_back(std::move(tr));
  }
  return s;
}

VideoSample generate(ActivityClass label, const GenConfig& cfg, std::uint64_t seed, bool mirrored) {
  cfg.validate();
  const ActivityClass canonical = canonical_class(label);
  Draft d = draw(canonical, cfg, seed);
  if (mirrored) mirror(d, static_cast<double>(cfg.width));
  return render(d, label, cfg);
}

template <typename T>
void flip_rows(std::vector<T>& v, std::size_t rows, std::size_t width, std::size_t channels) {
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = v.data() + r * width * channels;
    for (std::size_t x = 0; x < width / 2; ++x) {
      for (std::size_t c = 0; c < channels; ++c) std::swap(row[x * channels + c], row[(width - 1 - x) * channels + c]);
    }
  }
}

bool valid_id(const std::string& id) {
  if (id.empty() || id == "." || id == "..") return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
  });
}

}  // namespace

std::string_view class_name(ActivityClass c) { return kNames.at(class_index(c)); }

ActivityClass parse_class(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return static_cast<ActivityClass>(i);
  }
  throw SchemaError("unknown activity class '" + std::string(name) + "'");
}

ActivityClass class_from_index(std::size_t index) {
  if (index >= kNumClasses) throw ContractError("class index " + std::to_string(index) + " out of range");
  return static_cast<ActivityClass>(index);
}

ActivityClass flip_class(ActivityClass c) {
  switch (c) {
    case ActivityClass::ConvergeLeft: return ActivityClass::ConvergeRight;
    case ActivityClass::ConvergeRight: return ActivityClass::ConvergeLeft;
    case ActivityClass::CrossL2R: return ActivityClass::CrossR2L;
    case ActivityClass::CrossR2L: return ActivityClass::CrossL2R;
    default: return c;
  }
}

std::vector<std::string> class_names() { return {kNames.begin(), kNames.end()}; }

void GenConfig::validate() const {
  if (height == 0 || width == 0) throw ConfigError("frame extents must be positive");
  if (frames < 2) throw ConfigError("frames must be at least 2");
  if (min_actors == 0 || min_actors > max_actors) throw ConfigError("need 1 <= min_actors <= max_actors");
  if (!(radius > 0.0)) throw ConfigError("radius must be positive");
  if (min_speed < 0.0 || min_speed > max_speed) throw ConfigError("need 0 <= min_speed <= max_speed");
  if (walk_speed < 0.0) throw ConfigError("walk_speed must be non-negative");
  if (jitter < 0.0) throw ConfigError("jitter must be non-negative");
}

bool operator==(const VideoSample& a, const VideoSample& b) {
  auto same_tracks = [](const std::vector<ActorTrack>& x, const std::vector<ActorTrack>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i].centers != y[i].centers || x[i].radius != y[i].radius || x[i].color != y[i].color ||
          x[i].is_key != y[i].is_key) {
        return false;
      }
    }
    return true;
  };
  return a.id == b.id && a.label == b.label && a.frames_raw == b.frames_raw && a.height == b.height &&
         a.width == b.width && a.frames == b.frames && a.gt_flow == b.gt_flow && a.camera_jitter == b.camera_jitter &&
         same_tracks(a.tracks_, b.tracks_);
}

VideoSample generate_sample(ActivityClass label, const GenConfig& cfg, std::uint64_t seed) {
  return generate(label, cfg, seed, rendered_mirrored(label));
}

VideoSample generate_mirrored_sample(ActivityClass label, const GenConfig& cfg, std::uint64_t seed) {
  VideoSample s = generate(label, cfg, seed, !rendered_mirrored(label));
  s.label = flip_class(label);
  return s;
}

VideoSample horizontal_flip(const VideoSample& s) {
  VideoSample out = s;
  out.label = flip_class(s.label);
  flip_rows(out.frames, s.frames_raw * s.height, s.width, 3);
  if (out.has_flow()) flip_rows(out.gt_flow, s.frames_raw * s.height, s.width, 1);
  for (auto& j : out.camera_jitter) j[0] = -j[0];
  const float w = static_cast<float>(s.width);
  for (auto& tr : TrackAccess::tracks(out)) {
    for (auto& c : tr.centers) c[0] = w - c[0];
  }
  return out;
}

std::vector<VideoSample> generate_dataset(const GenConfig& cfg, std::size_t count) {
  cfg.validate();
  std::vector<ActivityClass> mix = cfg.class_mix;
  if (mix.empty()) {
    for (std::size_t i = 0; i < kNumClasses; ++i) mix.push_back(class_from_index(i));
  }
  std::vector<VideoSample> out(count);
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), count));
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](std::size_t w) {
    try {
      for (std::size_t i = w; i < count; i += workers) {
        out[i] = generate_sample(mix[i % mix.size()], cfg, derive_seed(cfg.seed, i));
        std::ostringstream id;
        id << 's' << std::setw(5) << std::setfill('0') << i;
        out[i].id = id.str();
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<std::size_t> segment_indices(std::size_t frames_raw, std::size_t frames, SamplingMode mode,
                                         std::uint64_t seed) {
  if (frames == 0 || frames > frames_raw) {
    throw ContractError("segment_indices: need 1 <= T <= T_raw, got T=" + std::to_string(frames) +
                        " T_raw=" + std::to_string(frames_raw));
  }
  std::vector<std::size_t> out(frames);
  Rng rng(seed);
  if (mode == SamplingMode::Random) {
    std::vector<std::size_t> all(frames_raw);
    for (std::size_t i = 0; i < frames_raw; ++i) all[i] = i;
    std::shuffle(all.begin(), all.end(), rng);
    std::copy_n(all.begin(), frames, out.begin());
    std::sort(out.begin(), out.end());
    return out;
  }
  for (std::size_t i = 0; i < frames; ++i) {
    const std::size_t begin = i * frames_raw / frames;
    const std::size_t end = (i + 1) * frames_raw / frames;
    const std::size_t len = end - begin;
    out[i] = mode == SamplingMode::Eval ? begin + (len - 1) / 2 : begin + uniform_index(rng, 0, len - 1);
  }
  return out;
}

#ifndef FLAMING_NO_EVAL_TRACKS
std::vector<float> key_actor_masks(const VideoSample& s) {
  std::vector<float> mask(s.frames_raw * s.pixels(), 0.0f);
  for (const auto& tr : TrackAccess::tracks(s)) {
    if (!tr.is_key) continue;
    for (std::size_t t = 0; t < s.frames_raw; ++t) {
      const double cx = static_cast<double>(tr.centers[t][0]) + s.camera_jitter[t][0];
      const double cy = static_cast<double>(tr.centers[t][1]) + s.camera_jitter[t][1];
      for (std::size_t y = 0; y < s.height; ++y) {
        for (std::size_t x = 0; x < s.width; ++x) {
          const double dx = static_cast<double>(x) + 0.5 - cx;
          const double dy = static_cast<double>(y) + 0.5 - cy;
          if (std::sqrt(dx * dx + dy * dy) <= tr.radius) mask[(t * s.height + y) * s.width + x] = 1.0f;
        }
      }
    }
  }
  return mask;
}
#endif

DatasetSplit split_dataset(std::vector<VideoSample> samples, std::uint64_t seed) {
  Rng rng(seed);
  std::shuffle(samples.begin(), samples.end(), rng);
  const std::size_t n = samples.size(), n_train = n * 70 / 100, n_val = n * 15 / 100;
  DatasetSplit out;
  auto take = [&](std::vector<VideoSample>& dst, std::size_t from, std::size_t to) {
    dst.assign(std::make_move_iterator(samples.begin() + static_cast<std::ptrdiff_t>(from)),
               std::make_move_iterator(samples.begin() + static_cast<std::ptrdiff_t>(to)));
  };
  take(out.train, 0, n_train);
  take(out.val, n_train, n_train + n_val);
  take(out.test, n_train + n_val, n);
  return out;
}

void drop_flow(std::vector<VideoSample>& samples) {
  for (auto& s : samples) {
    s.gt_flow.clear();
    s.gt_flow.shrink_to_fit();
  }
}

void write_dataset(const std::vector<VideoSample>& samples, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& s : samples) {
    if (!valid_id(s.id)) throw ContractError("write_dataset: sample id '" + s.id + "' is not a safe file name");
    const auto sub = dir / s.id;
    std::filesystem::create_directories(sub);
    const Shape frame_shape{s.frames_raw, s.height, s.width, 3};
    write_flmt(sub / "frames.flmt", frame_shape, s.frames);
    if (s.has_flow()) write_flmt(sub / "flow.flmt", Shape{s.frames_raw, s.height, s.width}, s.gt_flow);
    // Row 0: five zeros then (jx, jy) per frame. Row 1 + a: radius, is_key,
    // r, g, b, then (x, y) per frame.
    const auto& tracks = TrackAccess::tracks(s);
    const std::size_t cols = 5 + 2 * s.frames_raw;
    std::vector<float> rows((1 + tracks.size()) * cols, 0.0f);
    for (std::size_t t = 0; t < s.frames_raw; ++t) {
      rows[5 + 2 * t] = s.camera_jitter[t][0];
      rows[6 + 2 * t] = s.camera_jitter[t][1];
    }
    for (std::size_t a = 0; a < tracks.size(); ++a) {
      float* row = rows.data() + (1 + a) * cols;
      row[0] = tracks[a].radius;
      row[1] = tracks[a].is_key ? 1.0f : 0.0f;
      for (std::size_t k = 0; k < 3; ++k) row[2 + k] = tracks[a].color[k];
      for (std::size_t t = 0; t < s.frames_raw; ++t) {
        row[5 + 2 * t] = tracks[a].centers[t][0];
        row[6 + 2 * t] = tracks[a].centers[t][1];
      }
    }
    write_flmt(sub / "tracks.flmt", Shape{1 + tracks.size(), cols}, rows);
  }
  // Manifest last, so a partially written directory has no manifest.
  const auto manifest = dir / "manifest.tsv";
  std::ofstream os(manifest, std::ios::trunc);
  if (!os) throw IoError("cannot write " + manifest.string());
  for (const auto& s : samples) {
    os << s.id << '\t' << class_name(s.label) << '\t' << s.id << "/frames.flmt\t"
       << (s.has_flow() ? s.id + "/flow.flmt" : std::string("-")) << '\t' << s.id << "/tracks.flmt\n";
  }
  if (!os) throw IoError("write failed for " + manifest.string());
}

std::vector<VideoSample> read_dataset(const std::filesystem::path& dir) {
  const auto manifest = dir / "manifest.tsv";
  std::ifstream is(manifest);
  if (!is) throw IoError("missing dataset manifest " + manifest.string());
  std::vector<VideoSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string part; std::getline(ls, part, '\t');) f.push_back(part);
    if (f.size() != 5) {
      throw SchemaError(manifest.string() + ":" + std::to_string(lineno) + ": expected 5 tab-separated fields");
    }
    VideoSample s;
    s.id = f[0];
    s.label = parse_class(f[1]);
    auto frames = read_flmt(dir / f[2]);
    if (frames.shape.size() != 4 || frames.shape[3] != 3) {
      throw SchemaError("frames tensor " + (dir / f[2]).string() + " must be T x H x W x 3");
    }
    s.frames_raw = frames.shape[0];
    s.height = frames.shape[1];
    s.width = frames.shape[2];
    s.frames = std::move(frames.values);
    if (f[3] != "-") {
      auto flow = read_flmt(dir / f[3]);
      if (flow.shape != Shape{s.frames_raw, s.height, s.width}) {
        throw SchemaError("flow tensor " + (dir / f[3]).string() + " does not match its frames");
      }
      s.gt_flow = std::move(flow.values);
    }
    auto tr = read_flmt(dir / f[4]);
    const std::size_t cols = 5 + 2 * s.frames_raw;
    if (tr.shape.size() != 2 || tr.shape[1] != cols) {
      throw SchemaError("tracks tensor " + (dir / f[4]).string() + " has the wrong layout");
    }
    s.camera_jitter.resize(s.frames_raw);
    for (std::size_t t = 0; t < s.frames_raw; ++t) s.camera_jitter[t] = {tr.values[5 + 2 * t], tr.values[6 + 2 * t]};
    auto& tracks = TrackAccess::tracks(s);
    for (std::size_t a = 1; a < tr.shape[0]; ++a) {
      const float* row = tr.values.data() + a * cols;
      ActorTrack track;
      track.radius = row[0];
      track.is_key = row[1] != 0.0f;
      track.color = {row[2], row[3], row[4]};
      for (std::size_t t = 0; t < s.frames_raw; ++t) track.centers.push_back({row[5 + 2 * t], row[6 + 2 * t]});
      tracks.push_back(std::move(track));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace flaming
