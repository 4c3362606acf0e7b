#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

// GroupToy: synthetic weak-label group activity clips with exact flow.
namespace flaming {

enum class ActivityClass : std::uint8_t {
  ConvergeLeft = 0,
  ConvergeRight,
  Scatter,
  Chase,
  HuddleBreak,
  CrossL2R,
  CrossR2L,
  LoneRunner,
};

inline constexpr std::size_t kNumClasses = 8;

std::string_view class_name(ActivityClass c);
// Throws SchemaError for unknown names.
ActivityClass parse_class(std::string_view name);
ActivityClass class_from_index(std::size_t index);
inline std::size_t class_index(ActivityClass c) { return static_cast<std::size_t>(c); }
// Label seen after a horizontal flip; an involution.
ActivityClass flip_class(ActivityClass c);
std::vector<std::string> class_names();

struct ActorTrack {
  std::vector<std::array<float, 2>> centers;  // (x, y) per frame, pixel units
  float radius = 4.0f;
  std::array<float, 3> color{};
  bool is_key = false;
};

struct GenConfig {
  std::size_t height = 64;
  std::size_t width = 96;
  std::size_t frames = 24;
  std::size_t min_actors = 6;
  std::size_t max_actors = 10;
  double radius = 4.0;
  // Key-actor speed range in pixels per frame.
  double min_speed = 1.5;
  double max_speed = 2.5;
  // Per-frame step scale of the non-key random walk.
  double walk_speed = 0.3;
  double jitter = 1.0;
  // Classes drawn round-robin by generate_dataset; empty means all eight.
  std::vector<ActivityClass> class_mix;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
};

class VideoSample {
 public:
  std::string id;
  ActivityClass label = ActivityClass::ConvergeLeft;
  std::size_t frames_raw = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  // frames_raw x height x width x 3, values in [0, 1].
  std::vector<float> frames;
  // frames_raw x height x width flow magnitude; empty when absent.
  std::vector<float> gt_flow;
  // Whole-frame translation per frame, pixels.
  std::vector<std::array<float, 2>> camera_jitter;

  bool has_flow() const { return !gt_flow.empty(); }
  std::size_t pixels() const { return height * width; }

#ifndef FLAMING_NO_EVAL_TRACKS
  // Evaluation only. Training code must not depend on this; builds with
  // FLAMING_NO_EVAL_TRACKS remove it to prove that.
  const std::vector<ActorTrack>& eval_tracks() const { return tracks_; }
#endif

  friend bool operator==(const VideoSample& a, const VideoSample& b);

 private:
  std::vector<ActorTrack> tracks_;
  friend struct TrackAccess;
};

VideoSample generate_sample(ActivityClass label, const GenConfig& cfg, std::uint64_t seed);

// The sample generate_sample would produce for flip_class(label) if every
// random draw were mirrored. Equals horizontal_flip(generate_sample(label, ...)).
VideoSample generate_mirrored_sample(ActivityClass label, const GenConfig& cfg, std::uint64_t seed);

VideoSample horizontal_flip(const VideoSample& s);

// `count` samples with labels cycling through cfg.class_mix; sample i uses a
// seed derived from (cfg.seed, i). Parallel across samples, deterministic.
std::vector<VideoSample> generate_dataset(const GenConfig& cfg, std::size_t count);

struct DatasetSplit {
  std::vector<VideoSample> train, val, test;
};

// Seeded shuffle, then floor(70%) train, floor(15%) val, the rest test.
DatasetSplit split_dataset(std::vector<VideoSample> samples, std::uint64_t seed);

// Removes the flow modality (evaluation splits never carry it).
void drop_flow(std::vector<VideoSample>& samples);

enum class SamplingMode { Train, Eval, Random };

// T frame indices out of T_raw. Segment-based for Train/Eval; Random draws T
// distinct sorted indices from the whole clip.
std::vector<std::size_t> segment_indices(std::size_t frames_raw, std::size_t frames, SamplingMode mode,
                                         std::uint64_t seed);

// Per-frame binary masks (frames_raw x height x width) of pixel centers inside
// key-actor disks. Evaluation only.
std::vector<float> key_actor_masks(const VideoSample& s);

// Directory with manifest.tsv and per-sample tensor files.
void write_dataset(const std::vector<VideoSample>& samples, const std::filesystem::path& dir);
std::vector<VideoSample> read_dataset(const std::filesystem::path& dir);

}  // namespace flaming
