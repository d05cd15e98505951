// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The romil Authors

#include <gtest/gtest.h>

#include <fstream>

#include "romil/config.hpp"
#include "test_util.hpp"

using namespace romil;
using romil::testing::TempDir;

namespace {

void dump(const std::filesystem::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST(Config, DefaultsResolve) {
  const Config c;
  EXPECT_EQ(c.str("model.arm"), "ro-abmil");
  EXPECT_EQ(c.count("train.folds"), 10u);
  EXPECT_DOUBLE_EQ(c.real("train.learning_rate"), 1e-4);
  EXPECT_EQ(c.count_list("bench.n_list"), (std::vector<std::size_t>{256, 1024, 2048, 16384}));
  const ModelConfig mc = model_config(c, 1024, 2);
  EXPECT_EQ(parameter_count(mc), 3939330u);
  EXPECT_EQ(train_config(c).effective_batch, 4u);
  EXPECT_EQ(synth_config(c).n_bags, 400u);
}

TEST(Config, FileSectionsCommentsAndOverrides) {
  TempDir tmp("cfg");
  dump(tmp / "a.cfg",
       "# experiment\nseed = 17\n\n[model]\narm = dsmil  # head\nd_model=64\nn_heads = 4\n"
       "pool_heads = 2\n[train]\nfolds = 5\n");
  Config c;
  c.load_file(tmp / "a.cfg");
  c.apply_override("train.folds=3");
  EXPECT_EQ(seed_of(c), 17u);
  EXPECT_EQ(c.str("model.arm"), "dsmil");
  EXPECT_EQ(c.count("model.d_model"), 64u);
  EXPECT_EQ(c.count("train.folds"), 3u);
  EXPECT_EQ(model_config(c, 8, 3).pool, PoolHead::dsmil);
}

TEST(Config, UnknownKeysAndBadValuesAreRejected) {
  TempDir tmp("cfg2");
  Config c;
  EXPECT_THROW(c.apply_override("model.depth=3"), ConfigError);
  EXPECT_THROW(c.apply_override("model.arm"), ConfigError);
  dump(tmp / "b.cfg", "[model]\narm = abmil\nwidth = 3\n");
  try {
    c.load_file(tmp / "b.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("b.cfg:3: unknown config key 'model.width'"), std::string::npos)
        << e.what();
  }
  c = Config();
  c.set("train.folds", "ten");
  EXPECT_THROW(c.count("train.folds"), ConfigError);
  c = Config();
  c.set("model.n_heads", "3");
  EXPECT_THROW(model_config(c, 8, 2), ConfigError);
  c = Config();
  c.set("model.d_model", "24");
  c.set("model.n_heads", "4");
  c.set("model.pool_heads", "1");
  EXPECT_THROW(model_config(c, 8, 2), ConfigError);  // RoPE head_dim 6
  c.set("model.arm", "transformer-abmil");
  EXPECT_NO_THROW(model_config(c, 8, 2));
  c = Config();
  c.set("synth.tau", "9");
  EXPECT_THROW(synth_config(c), ConfigError);
  c = Config();
  c.set("train.adam_beta1", "1");
  EXPECT_THROW(train_config(c), ConfigError);
  c = Config();
  c.set("model.kernel", "flash");
  EXPECT_THROW(model_config(c, 8, 2), ConfigError);
}

TEST(Config, RenderRoundTrips) {
  TempDir tmp("cfg3");
  Config c;
  c.apply_override("seed=5");
  c.apply_override("synth.noise_std=0.125");
  c.apply_override("bench.n_list=8, 16");
  dump(tmp / "r.cfg", c.render());
  Config d;
  d.load_file(tmp / "r.cfg");
  EXPECT_EQ(d.render(), c.render());
  EXPECT_EQ(d.str("bench.n_list"), "8, 16");
  EXPECT_NE(c.render().find("\n[synth]\n"), std::string::npos);
}

TEST(Snapshot, BitExactRoundTrip) {
  TempDir tmp("snap");
  ModelBase b;
  b.input_dim = 6;
  b.d_model = 16;
  b.n_heads = 2;
  b.pool_heads = 2;
  b.n_classes = 3;
  b.rope_base = 123.5;
  for (const std::string arm : {"ro-abmil", "ro-dsmil", "abmil-4.2M"}) {
    const ModelConfig mc = arm_config(arm, b);
    auto p = init_model<float>(mc, 9);
    tensors(p)[0]->data()[0] = 1e-40f;
    save_snapshot(tmp / "p.txt", mc, {"a", "b", "c"}, p);
    Snapshot s = load_snapshot(tmp / "p.txt");
    EXPECT_EQ(s.label_names, (std::vector<std::string>{"a", "b", "c"}));
    EXPECT_EQ(s.model.rope_base, 123.5);
    EXPECT_EQ(s.model.pool, mc.pool);
    EXPECT_EQ(s.model.hidden_layers, mc.hidden_layers);
    EXPECT_EQ(s.model.posenc, mc.posenc);
    const auto ta = tensors(p), tb = tensors(s.params);
    ASSERT_EQ(ta.size(), tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i)
      EXPECT_EQ(std::memcmp(ta[i]->data(), tb[i]->data(), ta[i]->size() * sizeof(float)), 0) << arm;
  }
}

TEST(Snapshot, CorruptFilesAreFormatErrors) {
  TempDir tmp("snap2");
  ModelBase b;
  b.input_dim = 4;
  b.d_model = 8;
  b.n_heads = 2;
  b.pool_heads = 1;
  const ModelConfig mc = arm_config("abmil", b);
  auto p = init_model<float>(mc, 1);
  save_snapshot(tmp / "p.txt", mc, {"neg", "pos"}, p);
  std::ifstream in(tmp / "p.txt");
  const std::string text{std::istreambuf_iterator<char>(in), {}};
  dump(tmp / "trunc.txt", text.substr(0, text.size() - 40));
  EXPECT_THROW(load_snapshot(tmp / "trunc.txt"), FormatError);
  dump(tmp / "extra.txt", text + "0x1p+0\n");
  EXPECT_THROW(load_snapshot(tmp / "extra.txt"), FormatError);
  dump(tmp / "head.txt", "not a snapshot\n");
  EXPECT_THROW(load_snapshot(tmp / "head.txt"), FormatError);
  std::string wrong = text;
  wrong.replace(wrong.find("width=8"), 7, "width=9");
  dump(tmp / "shape.txt", wrong);
  EXPECT_THROW(load_snapshot(tmp / "shape.txt"), FormatError);
}
