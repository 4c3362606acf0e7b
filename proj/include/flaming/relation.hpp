#pragma once

#include <string>
#include <vector>

#include "flaming/attention.hpp"
#include "flaming/params.hpp"
#include "flaming/tensor.hpp"

namespace flaming {

// Where the group path stops gradients.
enum class DetachMode {
  ConvInput,  // before the 2D conv stack (default)
  GfBranch,   // on the per-frame classifier input instead
  None,
};

enum class FuseMode {
  Logits,         // mean of the two logit vectors
  Probabilities,  // log of the mean of the two softmax vectors
};

struct RelationConfig {
  std::size_t channels = 32;
  std::size_t tokens = 8;
  std::size_t frames = 6;
  std::size_t heads = 4;
  std::size_t classes = 8;
  std::size_t conv1d_layers = 2;
  std::size_t conv1d_width = 3;
  std::size_t conv1d_padding = 1;
  std::size_t conv2d_layers = 2;
  std::size_t conv2d_kernel_t = 3;
  std::size_t conv2d_kernel_s = 3;
  std::size_t conv2d_stride_t = 1;
  std::size_t conv2d_stride_s = 1;
  bool share_relation = true;
  bool use_group_path = true;
  DetachMode detach = DetachMode::ConvInput;
  FuseMode fuse = FuseMode::Logits;

  // Temporal extent left after the 1D stack, and (K', T') after the 2D stack.
  std::size_t conv1d_output_frames() const;
  std::pair<std::size_t, std::size_t> conv2d_output_extent() const;
  void validate() const;
};

struct Mlp {
  Tensor w1, b1, w2, b2;
};

struct RelationModule {
  RelationConfig config;
  std::vector<Tensor> conv1d_w, conv1d_b;  // [width, C, C], [C]
  MultiHeadAttention actor_mhsa;
  // Aliases actor_mhsa's tensors when sharing is on.
  MultiHeadAttention group_mhsa;
  std::vector<Tensor> conv2d_w, conv2d_b;  // [C, C, k_s, k_t], [C]
  Mlp actor_head;
  Mlp group_head;
  Tensor frame_w, frame_b;  // per-frame linear classifier
};

RelationModule make_relation(ParamStore& params, const std::string& prefix, const RelationConfig& cfg, Rng& rng);

struct ActorPathOutput {
  Tensor f_actor;  // [N, C]
  Tensor logits;   // [N, classes]
};

struct GroupPathOutput {
  Tensor f_group;       // [N, C]
  Tensor logits;        // [N, classes]
  Tensor frame_logits;  // [N*T, classes]
};

struct RelationOutput {
  ActorPathOutput actor;
  GroupPathOutput group;  // undefined tensors when the group path is off
  Tensor fused;           // [N, classes]
};

// tokens [N*T, K, C], clip-major.
ActorPathOutput actor_path(const RelationModule& rel, const Tensor& tokens);
GroupPathOutput group_path(const RelationModule& rel, const Tensor& tokens);
Tensor fuse_and_classify(const Tensor& logits_actor, const Tensor& logits_group, FuseMode mode = FuseMode::Logits);
RelationOutput relation_forward(const RelationModule& rel, const Tensor& tokens);

Tensor apply_mlp(const Mlp& mlp, const Tensor& x);

// Row-wise argmax; ties go to the lowest index.
std::vector<std::size_t> argmax_rows(const Tensor& logits);

}  // namespace flaming
