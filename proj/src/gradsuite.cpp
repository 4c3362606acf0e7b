#include "flaming/gradsuite.hpp"

#include <functional>

#include "flaming/losses.hpp"
#include "flaming/model.hpp"
#include "flaming/ops.hpp"
#include "flaming/rng.hpp"

namespace flaming {

namespace {

using Inputs = std::vector<Tensor>;
using OpFn = std::function<Tensor(const Inputs&)>;

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = uniform(rng, lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

// Moves every parameter off zero-initialised biases so ReLU and abs kinks are
// not sitting exactly on the evaluation point.
void nudge(ParamStore& ps, Rng& rng, double amount = 0.05) {
  for (const auto& [name, t] : ps.entries()) {
    Tensor h = t;
    for (auto& v : h.mutable_data()) v += uniform(rng, -amount, amount);
  }
}

// sum(f(inputs) * R) for a fixed random projection R of f's output shape.
GradCheckReport project_and_check(Rng& rng, const OpFn& op, const Inputs& inputs, const GradCheckOptions& opt) {
  Tensor probe;
  {
    NoTapeScope none;
    probe = op(inputs);
  }
  const Tensor proj = random_tensor(rng, probe.shape());
  return finite_difference_check([&] { return sum(mul(op(inputs), proj)); }, inputs, opt);
}

void keep_worst(GradCheckReport& acc, const GradCheckReport& r) {
  if (r.max_rel_error >= acc.max_rel_error) {
    acc.max_rel_error = r.max_rel_error;
    acc.worst_param = r.worst_param;
    acc.worst_index = r.worst_index;
  }
  acc.max_abs_error = std::max(acc.max_abs_error, r.max_abs_error);
  acc.coordinates += r.coordinates;
  acc.tolerance = r.tolerance;
  acc.passed = acc.passed && r.passed;
}

std::size_t extent(Rng& rng, std::size_t lo, std::size_t hi) { return uniform_index(rng, lo, hi); }

struct OpCase {
  const char* name;
  std::function<std::pair<OpFn, Inputs>(Rng&)> make;
};

std::vector<OpCase> op_cases() {
  auto mat = [](Rng& r) { return Shape{extent(r, 1, 4), extent(r, 1, 4)}; };
  auto unary = [mat](const char* name, Tensor (*f)(const Tensor&), double lo = -1.0, double hi = 1.0) {
    return OpCase{name, [mat, f, lo, hi](Rng& r) {
                    return std::pair{OpFn([f](const Inputs& v) { return f(v[0]); }), Inputs{random_tensor(r, mat(r), lo, hi)}};
                  }};
  };
  auto binary = [mat](const char* name, Tensor (*f)(const Tensor&, const Tensor&)) {
    return OpCase{name, [mat, f](Rng& r) {
                    const Shape s = mat(r);
                    return std::pair{OpFn([f](const Inputs& v) { return f(v[0], v[1]); }),
                                     Inputs{random_tensor(r, s), random_tensor(r, s)}};
                  }};
  };
  std::vector<OpCase> cases = {
      binary("add", add),
      binary("sub", sub),
      binary("mul", mul),
      unary("relu", relu),
      unary("exp", exp),
      unary("log", log, 0.5, 2.0),
      unary("abs", abs),
      unary("softmax_rows", softmax_rows, -3.0, 3.0),
      unary("log_softmax_rows", log_softmax_rows, -3.0, 3.0),
      unary("l2_normalize_rows", l2_normalize_rows),
      {"add_bias", [](Rng& r) {
         const auto c = extent(r, 1, 4);
         return std::pair{OpFn([](const Inputs& v) { return add_bias(v[0], v[1]); }),
                          Inputs{random_tensor(r, {extent(r, 1, 3), c}), random_tensor(r, {c})}};
       }},
      {"scale", [mat](Rng& r) {
         return std::pair{OpFn([](const Inputs& v) { return add_scalar(scale(v[0], -1.7), 0.3); }),
                          Inputs{random_tensor(r, mat(r))}};
       }},
      {"sum_mean", [mat](Rng& r) {
         return std::pair{OpFn([](const Inputs& v) { return add(sum(v[0]), mean(v[0])); }), Inputs{random_tensor(r, mat(r))}};
       }},
      {"mean_axis", [](Rng& r) {
         const auto axis = extent(r, 0, 2);
         return std::pair{OpFn([axis](const Inputs& v) { return add(mean_axis(v[0], axis), sum_axis(v[0], axis)); }),
                          Inputs{random_tensor(r, {extent(r, 1, 3), extent(r, 1, 3), extent(r, 1, 3)})}};
       }},
      {"permute_reshape", [](Rng& r) {
         const Shape s{extent(r, 1, 3), extent(r, 1, 3), extent(r, 1, 3)};
         return std::pair{OpFn([s](const Inputs& v) { return reshape(permute(v[0], {2, 0, 1}), {s[2], s[0] * s[1]}); }),
                          Inputs{random_tensor(r, s)}};
       }},
      {"transpose", [mat](Rng& r) {
         return std::pair{OpFn([](const Inputs& v) { return transpose(v[0]); }), Inputs{random_tensor(r, mat(r))}};
       }},
      {"concat_slice", [](Rng& r) {
         const auto a = extent(r, 1, 3);
         return std::pair{OpFn([](const Inputs& v) { return slice(concat({v[0], v[1]}, 1), 1, 1, 4); }),
                          Inputs{random_tensor(r, {a, 2}), random_tensor(r, {a, 3})}};
       }},
      {"repeat_pick", [](Rng& r) {
         return std::pair{OpFn([](const Inputs& v) { return pick(mean_axis(repeat_leading(v[0], 2), 0), {2, 0, 0}); }),
                          Inputs{random_tensor(r, {3, 3})}};
       }},
      {"matmul", [](Rng& r) {
         const auto m = extent(r, 1, 4), k = extent(r, 1, 4), n = extent(r, 1, 4);
         return std::pair{OpFn([](const Inputs& v) { return matmul(v[0], v[1]); }),
                          Inputs{random_tensor(r, {m, k}), random_tensor(r, {k, n})}};
       }},
      {"linear", [](Rng& r) {
         const auto m = extent(r, 1, 4), k = extent(r, 1, 4), n = extent(r, 1, 4);
         return std::pair{OpFn([](const Inputs& v) { return linear(v[0], v[1], v[2]); }),
                          Inputs{random_tensor(r, {2, m, k}), random_tensor(r, {k, n}), random_tensor(r, {n})}};
       }},
      {"bmm", [](Rng& r) {
         const auto m = extent(r, 1, 3), k = extent(r, 1, 3), n = extent(r, 1, 3);
         return std::pair{OpFn([](const Inputs& v) { return add(bmm(v[0], v[1]), bmm(v[0], v[2], true)); }),
                          Inputs{random_tensor(r, {2, m, k}), random_tensor(r, {2, k, n}), random_tensor(r, {2, n, k})}};
       }},
      {"layer_norm", [](Rng& r) {
         const auto c = extent(r, 2, 5);
         return std::pair{OpFn([](const Inputs& v) { return layer_norm(v[0], v[1], v[2]); }),
                          Inputs{random_tensor(r, {extent(r, 1, 3), c}), random_tensor(r, {c}), random_tensor(r, {c})}};
       }},
      {"cosine_similarity", [](Rng& r) {
         const Shape s{extent(r, 1, 5)};
         return std::pair{OpFn([](const Inputs& v) { return cosine_similarity(v[0], v[1]); }),
                          Inputs{random_tensor(r, s), random_tensor(r, s)}};
       }},
      {"conv1d_temporal", [](Rng& r) {
         const auto t = extent(r, 3, 6), ci = extent(r, 1, 3), co = extent(r, 1, 3), w = extent(r, 1, 3);
         const auto p = extent(r, 0, 1);
         return std::pair{OpFn([p](const Inputs& v) { return conv1d_temporal(v[0], v[1], v[2], p); }),
                          Inputs{random_tensor(r, {2, t, ci}), random_tensor(r, {w, ci, co}), random_tensor(r, {co})}};
       }},
      {"conv2d", [](Rng& r) {
         const auto ci = extent(r, 1, 2), co = extent(r, 1, 2);
         const Conv2dGeometry g{extent(r, 1, 2), extent(r, 1, 2), extent(r, 0, 1), extent(r, 0, 1)};
         return std::pair{OpFn([g](const Inputs& v) { return conv2d(v[0], v[1], v[2], g); }),
                          Inputs{random_tensor(r, {2, ci, 5, 4}), random_tensor(r, {co, ci, 3, 2}), random_tensor(r, {co})}};
       }},
      {"cross_entropy", [](Rng& r) {
         const auto n = extent(r, 1, 4), c = extent(r, 2, 5);
         std::vector<std::size_t> labels(n);
         for (auto& l : labels) l = extent(r, 0, c - 1);
         return std::pair{OpFn([labels](const Inputs& v) { return cross_entropy(v[0], labels); }),
                          Inputs{random_tensor(r, {n, c}, -2.0, 2.0)}};
       }},
  };
  return cases;
}

RelationConfig tiny_relation(DetachMode detach) {
  RelationConfig cfg;
  cfg.channels = 4;
  cfg.tokens = 3;
  cfg.frames = 4;
  cfg.heads = 2;
  cfg.classes = 3;
  cfg.conv2d_layers = 1;
  cfg.detach = detach;
  return cfg;
}

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& options) {
  const auto& opt = options.check;
  Rng rng(options.seed);
  std::vector<GradSuiteEntry> out;

  for (const auto& c : op_cases()) {
    GradCheckReport worst;
    for (std::size_t trial = 0; trial < options.op_trials; ++trial) {
      auto [op, inputs] = c.make(rng);
      keep_worst(worst, project_and_check(rng, op, inputs, opt));
    }
    out.push_back({std::string("op.") + c.name, worst});
  }

  {
    ParamStore ps;
    auto mha = make_attention(ps, "mha", 4, 2, rng);
    nudge(ps, rng);
    Inputs in = ps.tensors();
    const Tensor q = random_tensor(rng, {2, 3, 4}), kv = random_tensor(rng, {2, 5, 4});
    in.push_back(q);
    in.push_back(kv);
    const Tensor pm = random_tensor(rng, {2, 3, 5});
    const OpFn f = [&](const Inputs&) {
      auto r = multi_head_attention(mha, q, kv, kv, true);
      return add(sum(r.output), sum(mul(r.maps, pm)));
    };
    out.push_back({"attention", project_and_check(rng, f, in, opt)});
  }

  {
    BackboneConfig cfg;
    cfg.in_height = 4;
    cfg.in_width = 8;
    cfg.widths = {2, 3};
    cfg.channels = 2;
    ParamStore ps;
    auto net = make_backbone(ps, "bb", cfg, rng);
    nudge(ps, rng);
    const Tensor x = random_tensor(rng, {2, 3, 4, 8}, 0.0, 1.0);
    Inputs in = ps.tensors();
    in.push_back(x);
    out.push_back({"backbone", project_and_check(rng, [&](const Inputs&) { return extract_features(net, x); }, in, opt)});
  }

  {
    // K=2, C=4, HW=6, L=1.
    EncoderConfig cfg;
    cfg.tokens = 2;
    cfg.channels = 4;
    cfg.blocks = 1;
    cfg.heads = 2;
    cfg.grid_height = 2;
    cfg.grid_width = 3;
    ParamStore ps;
    auto enc = make_encoder(ps, "enc", cfg, rng);
    nudge(ps, rng, 0.1);
    const Tensor feats = random_tensor(rng, {2, 6, 4});
    const Tensor pt = random_tensor(rng, {2, 2, 4}), pa = random_tensor(rng, {2, 2, 6});
    Inputs in = ps.tensors();
    in.push_back(feats);
    const OpFn f = [&](const Inputs&) {
      auto r = encode_video(enc, feats);
      return add(sum(mul(r.tokens, pt)), sum(mul(r.attention[0], pa)));
    };
    out.push_back({"encoder_block", project_and_check(rng, f, in, opt)});
  }

  for (auto [mode, label] : {std::pair{DetachMode::ConvInput, "conv_input"}, std::pair{DetachMode::GfBranch, "gf_branch"},
                             std::pair{DetachMode::None, "none"}}) {
    ParamStore ps;
    const auto cfg = tiny_relation(mode);
    auto rel = make_relation(ps, "rel", cfg, rng);
    nudge(ps, rng);
    const Tensor tokens = random_tensor(rng, {2 * cfg.frames, cfg.tokens, cfg.channels});
    Inputs in = ps.tensors();
    in.push_back(tokens);
    const std::vector<std::size_t> labels{0, 2};
    std::vector<std::size_t> frame_labels;
    for (auto l : labels) frame_labels.insert(frame_labels.end(), cfg.frames, l);
    if (mode == DetachMode::ConvInput) {
      const OpFn actor = [&](const Inputs&) { return actor_path(rel, tokens).logits; };
      out.push_back({"relation.actor_path", project_and_check(rng, actor, in, opt)});
    }
    const OpFn group = [&](const Inputs&) {
      auto g = group_path(rel, tokens);
      return add(cross_entropy(g.logits, labels), cross_entropy(g.frame_logits, frame_labels));
    };
    out.push_back({std::string("relation.group_path.") + label, project_and_check(rng, group, in, opt)});
  }

  {
    const Tensor att = softmax_rows(random_tensor(rng, {5, 6}, -2.0, 2.0));
    const Tensor att2 = softmax_rows(random_tensor(rng, {5, 6}, -2.0, 2.0));
    const Tensor m = random_tensor(rng, {5, 6}, 0.0, 1.0);
    const Inputs in{att, att2, m};
    out.push_back({"loss.flm", project_and_check(rng, [](const Inputs& v) { return loss_flm({v[0], v[1]}, v[2], 0.5); }, in, opt)});
    out.push_back({"loss.flm_inclusive",
                   project_and_check(rng, [](const Inputs& v) { return loss_flm({v[0], v[1]}, v[2], 0.5, true); }, in, opt)});
    out.push_back({"loss.flm_l1", project_and_check(rng, [](const Inputs& v) { return loss_flm_l1_rows(v[0], v[2]); }, in, opt)});
    const std::vector<double> rho{0.3, 0.8};
    const Tensor rows = random_tensor(rng, {6}, 0.5, 2.0);
    out.push_back({"loss.flm_gated", project_and_check(rng, [&](const Inputs& v) { return gated_flow_term(v[0], rho, false); },
                                                       Inputs{rows}, opt)});
  }
  {
    const Tensor w = random_tensor(rng, {3, 4, 5});
    out.push_back({"loss.tco", project_and_check(rng, [](const Inputs& v) { return loss_tco(v[0], 0.5); }, {w}, opt)});
    out.push_back({"loss.tco_inclusive", project_and_check(rng, [](const Inputs& v) { return loss_tco(v[0], 0.5, true); }, {w}, opt)});
    out.push_back({"loss.tco_l1", project_and_check(rng, [](const Inputs& v) { return loss_tco_l1(v[0]); }, {w}, opt)});
    const Tensor fl = random_tensor(rng, {6, 4}, -2.0, 2.0);
    out.push_back({"loss.gf", project_and_check(rng, [](const Inputs& v) { return loss_gf(v[0], {1, 3}); }, {fl}, opt)});
  }

  {
    ModelConfig cfg;
    cfg.backbone.in_height = 16;
    cfg.backbone.in_width = 24;
    cfg.backbone.widths = {3, 4};
    cfg.backbone.channels = 4;
    cfg.encoder.tokens = 3;
    cfg.encoder.blocks = 2;
    cfg.encoder.heads = 2;
    cfg.relation.frames = 3;
    cfg.relation.heads = 2;
    cfg.relation.conv2d_layers = 1;
    cfg.init_seed = options.seed;
    FlamingModel model(cfg);
    nudge(model.params(), rng);
    const Tensor frames = random_tensor(rng, {6, 3, 16, 24}, 0.0, 1.0);
    const Tensor flow = random_tensor(rng, {6, 24}, 0.0, 1.0);
    LossConfig lc;
    lc.k_flm = 2;
    const std::vector<std::size_t> labels{2, 5};
    auto loss = [&] { return compute_losses(model.forward(frames), flow, labels, 3, lc).total; };
    out.push_back({"composite", finite_difference_check(loss, model.params().tensors(), opt)});
  }
  return out;
}

}  // namespace flaming
