// Built against the FLAMING_NO_EVAL_TRACKS libraries: training and evaluation
// must compile and run with the ground-truth actor tracks removed.

#include <gtest/gtest.h>

#include "flaming/evaluation.hpp"
#include "flaming/training.hpp"

#ifndef FLAMING_NO_EVAL_TRACKS
#error "firewall test must be built with FLAMING_NO_EVAL_TRACKS"
#endif

using namespace flaming;

TEST(Firewall, TrainsAndEvaluatesWithoutActorTracks) {
  GenConfig gen;
  gen.frames = 6;
  gen.seed = 3;
  const auto data = generate_dataset(gen, 4);

  ModelConfig m;
  m.backbone.widths = {2, 3, 4};
  m.backbone.channels = 8;
  m.encoder.tokens = 3;
  m.encoder.blocks = 2;
  m.encoder.heads = 2;
  m.relation.frames = 3;
  m.relation.heads = 2;
  m.relation.conv2d_layers = 1;
  FlamingModel model(m);

  TrainConfig t;
  t.schedule.epochs = 2;
  t.schedule.warmup_epochs = 1;
  t.schedule.decay_start = 1;
  t.batch = 2;
  LossConfig loss;
  loss.k_flm = 2;
  const auto before = model.params().snapshot();
  const auto result = train(model, data, t, loss, FlowPrepConfig{});
  EXPECT_EQ(result.steps.size(), 4u);
  EXPECT_NE(model.params().snapshot(), before);

  EvalOptions eval;
  eval.k_flm = 2;
  const auto rep = evaluate(model, data, eval);
  EXPECT_EQ(rep.confusion.total(), 4u);
  EXPECT_FALSE(rep.localization.has_value());
}
