// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <map>
#include <set>

#include "scene_fixtures.hpp"
#include "splatseg/error.hpp"
#include "splatseg/synth.hpp"

using namespace splatseg;
using namespace splatseg::testing;

namespace {

LabelImage label_strip(std::vector<int> values) {
  LabelImage img(static_cast<int>(values.size()), 1);
  for (std::size_t k = 0; k < values.size(); ++k) img.data[k] = values[k];
  return img;
}

ObjectRecord moving_record(double displacement) {
  ObjectRecord r;
  r.id = 1;
  r.boxes.push_back({Vec3::Zero(), Vec3::Ones()});
  r.boxes.push_back({Vec3(displacement, 0, 0), Vec3(1.0 + displacement, 1, 1)});
  return r;
}

} // namespace

TEST(MotionOffset, PiecewiseLinearAndHeld) {
  const std::vector<MotionKey> s{{1.0, Vec3::Zero()}, {3.0, Vec3(2, 0, 0)}, {4.0, Vec3(2, 1, 0)}};
  EXPECT_EQ(motion_offset(s, 0.0), Vec3::Zero());
  EXPECT_LT((motion_offset(s, 2.0) - Vec3(1, 0, 0)).norm(), 1e-15);
  EXPECT_LT((motion_offset(s, 3.5) - Vec3(2, 0.5, 0)).norm(), 1e-15);
  EXPECT_EQ(motion_offset(s, 9.0), Vec3(2, 1, 0));
  EXPECT_EQ(motion_offset({}, 1.0), Vec3::Zero());
}

TEST(Split, TenFrames) {
  const auto s = split_seen_novel(10);
  for (int i = 0; i < 8; ++i) EXPECT_TRUE(is_seen(s[i])) << i;
  EXPECT_EQ(s[8], Split::Novel);
  EXPECT_EQ(s[9], Split::Novel);
}

TEST(Split, FiveFrames) {
  const auto s = split_seen_novel(5);
  EXPECT_EQ(std::count_if(s.begin(), s.end(), is_seen), 4);
  EXPECT_EQ(s[4], Split::Novel);
}

TEST(Split, ValidationCountByEnumeration) {
  for (std::size_t m = 5; m <= 120; ++m) {
    const auto s = split_seen_novel(m);
    const std::size_t seen = 4 * m / 5;
    std::size_t validation = 0;
    for (std::size_t i = 0; i < m; ++i) {
      EXPECT_EQ(is_seen(s[i]), i < seen);
      if (s[i] == Split::Validation) {
        EXPECT_EQ(i % 5, 0u);
        ++validation;
      }
    }
    EXPECT_EQ(validation, (seen + 4) / 5) << m;
  }
  EXPECT_THROW(split_seen_novel(4), Error);
}

TEST(StaticDynamic, TwoCentimetreBoundary) {
  EXPECT_EQ(label_static_dynamic({moving_record(0.0)}), std::vector<bool>{false});
  EXPECT_EQ(label_static_dynamic({moving_record(0.019)}), std::vector<bool>{false});
  EXPECT_EQ(label_static_dynamic({moving_record(0.021)}), std::vector<bool>{true});
}

TEST(Shuffle, IdentityKeepsObjectIds) {
  const std::vector<LabelImage> in{label_strip({0, 1, 2, 2, 5})};
  ShuffleOptions o;
  o.identity = true;
  o.background_segment = false;
  EXPECT_EQ(shuffle_mask_ids(in, 3, o), in);
  o.background_segment = true;
  EXPECT_EQ(shuffle_mask_ids(in, 3, o).front(), label_strip({6, 1, 2, 2, 5}));
}

TEST(Shuffle, PerFrameBijection) {
  std::vector<LabelImage> in;
  for (int f = 0; f < 30; ++f) in.push_back(label_strip({0, 1, 1, 2, 3, 3, 3, 7, 0, 2}));
  for (bool background : {false, true}) {
    ShuffleOptions o;
    o.background_segment = background;
    const auto out = shuffle_mask_ids(in, 11, o);
    std::set<std::vector<int>> distinct;
    for (std::size_t f = 0; f < in.size(); ++f) {
      std::map<int, int> fwd, bwd;
      for (std::size_t p = 0; p < in[f].data.size(); ++p) {
        const int a = in[f].data[p], b = out[f].data[p];
        if (a == 0 && !background) {
          EXPECT_EQ(b, 0);
          continue;
        }
        EXPECT_GT(b, 0);
        EXPECT_TRUE(fwd.emplace(a, b).first->second == b);
        EXPECT_TRUE(bwd.emplace(b, a).first->second == a);
      }
      distinct.insert(std::vector<int>(out[f].data.begin(), out[f].data.end()));
    }
    EXPECT_GT(distinct.size(), 1u) << "ids were not shuffled across frames";
  }
}

TEST(Shuffle, DropoutRate) {
  std::vector<LabelImage> in(1000, label_strip({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}));
  ShuffleOptions o;
  o.dropout = 0.3;
  o.background_segment = false;
  const auto out = shuffle_mask_ids(in, 12, o);
  double dropped = 0.0, total = 0.0;
  for (const auto &m : out)
    for (int v : m.data) {
      dropped += v == 0;
      total += 1;
    }
  EXPECT_NEAR(dropped / total, 0.3, 0.05);
}

TEST(SceneSpec, JsonRoundTripAndUnknownKeys) {
  SceneSpec s = builtin_scene("dynamic-3of8");
  s.objects = resolve_scene(s).objects;
  EXPECT_EQ(scene_spec_from_json(scene_spec_to_json(s)), s);
  EXPECT_THROW(scene_spec_from_json(R"({"seed": 1, "colour": 3})"), Error);
  EXPECT_THROW(builtin_scene("nope"), Error);
}

TEST(SceneSpec, BuiltinScenesResolve) {
  for (const auto &name : builtin_scene_names()) {
    const SceneSpec s = resolve_scene(builtin_scene(name));
    EXPECT_EQ(s.objects.size(), 8u);
    int moving = 0;
    for (const auto &o : s.objects) moving += !o.motion.empty();
    EXPECT_EQ(moving, s.dynamic_count) << name;
    EXPECT_EQ(s.camera.width, 128);
    EXPECT_EQ(s.camera.frames, 60);
  }
}

TEST(Generate, DeterministicInSeed) {
  const SynthScene a = generate(tiny_spec(7, 3, 1));
  const SynthScene b = generate(tiny_spec(7, 3, 1));
  EXPECT_EQ(a.dataset, b.dataset);
  const SynthScene c = generate(tiny_spec(8, 3, 1));
  EXPECT_NE(a.dataset.frames[0].image, c.dataset.frames[0].image);
}

TEST(Generate, SingleStaticObject) {
  SceneSpec s = tiny_spec(9, 1, 0, 10);
  const SynthScene scene = generate(s);
  ASSERT_EQ(scene.dataset.objects.size(), 1u);
  EXPECT_FALSE(scene.dataset.objects[0].dynamic);
  for (const auto &f : scene.dataset.frames) {
    for (auto v : f.truth->dynamic_mask.data) EXPECT_EQ(v, 0);
  }
}

TEST(Generate, ScriptedTranslationMovesBoxes) {
  SceneSpec s = tiny_spec(10, 1, 0, 10);
  ObjectSpec o;
  o.id = 1;
  o.shape = ShapeKind::Box;
  o.center = Vec3(-0.2, 0.0, 0.15);
  o.size = Vec3(0.3, 0.3, 0.3);
  o.gaussians = 30;
  const double end = (s.camera.frames - 1) / s.camera.fps;
  o.motion = {{0.0, Vec3::Zero()}, {end, Vec3(0.5, 0.0, 0.0)}};
  s.objects = {o};
  const SynthScene scene = generate(s);
  const ObjectRecord &rec = scene.dataset.objects[0];
  EXPECT_TRUE(rec.dynamic);
  for (std::size_t f = 0; f < rec.boxes.size(); ++f) {
    const Vec3 expected = motion_offset(o.motion, scene.dataset.frames[f].timestamp);
    EXPECT_LT((rec.boxes[f].min - rec.boxes[0].min - expected).norm(), 1e-12) << f;
  }
  EXPECT_LT((rec.boxes.back().center() - rec.boxes.front().center() - Vec3(0.5, 0, 0)).norm(), 1e-12);
}

TEST(Generate, FlagsFollowScripts) {
  const SynthScene scene = generate(tiny_spec(11, 4, 2, 10));
  for (const auto &rec : scene.dataset.objects) {
    const ObjectSpec *spec = nullptr;
    for (const auto &o : scene.spec.objects)
      if (o.id == rec.id) spec = &o;
    double moved = 0.0;
    for (const auto &f : scene.dataset.frames)
      moved = std::max(moved, (motion_offset(spec->motion, f.timestamp) - motion_offset(spec->motion, 0.0)).norm());
    EXPECT_EQ(rec.dynamic, moved > 0.02) << rec.id;
  }
}

TEST(Generate, ImagesMasksAndTruthAreConsistent) {
  const SynthScene scene = generate(tiny_spec(12, 3, 0, 10));
  const Dataset &ds = scene.dataset;
  EXPECT_FALSE(ds.seed_points.positions.empty());
  for (const Frame &f : ds.frames) {
    // Masks relate to the instance labels through a per-frame bijection.
    std::map<int, int> fwd;
    for (std::size_t p = 0; p < f.mask.data.size(); ++p) {
      const int gt = f.truth->instance_labels.data[p];
      EXPECT_EQ(fwd.emplace(gt, f.mask.data[p]).first->second, f.mask.data[p]);
      for (int c = 0; c < 3; ++c) {
        const double v = f.image.data[3 * p + c];
        EXPECT_EQ(v, std::round(v * 255.0) / 255.0);
      }
    }
  }
}

TEST(Generate, CrampedRoomIsConfigError) {
  SceneSpec s = tiny_spec(13, 8);
  s.room_extent = 0.6;
  try {
    generate(s);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
}
