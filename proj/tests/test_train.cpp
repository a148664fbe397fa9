#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <map>

#include "ferfusion/error.hpp"
#include "ferfusion/metrics.hpp"
#include "ferfusion/synthetic.hpp"
#include "ferfusion/train.hpp"

using namespace ferfusion;

namespace {

PairedDataset small_pairs(std::size_t per_class, std::uint64_t seed, std::size_t dim = 8) {
  TwoViewSpec spec;
  spec.dim = dim;
  const auto data = generate_two_view(spec, per_class, seed);
  return pair_views(data.main, data.aux);
}

}  // namespace

TEST(Train, ZeroLearningRateKeepsInitialModel) {
  const auto paired = small_pairs(4, 1);
  TrainConfig cfg;
  cfg.iters = 1;
  cfg.lr = 0.0;
  cfg.seed = 5;
  cfg.model.n_heads = 2;
  const auto result = train_fusion(paired, cfg);
  ModelConfig mc = cfg.model;
  mc.dim = 8;
  EXPECT_EQ(serialize_checkpoint(result.model), serialize_checkpoint(FusionModel::init(mc, 5)));
  EXPECT_EQ(result.loss_history.size(), 1u);
}

TEST(Train, SameSeedReplaysBitIdentically) {
  const auto paired = small_pairs(10, 2);
  TrainConfig cfg;
  cfg.iters = 15;
  cfg.batch = 32;
  cfg.lr = 1e-2;
  cfg.seed = 77;
  const auto a = train_fusion(paired, cfg);
  const auto b = train_fusion(paired, cfg);
  EXPECT_EQ(a.loss_history, b.loss_history);
  EXPECT_EQ(serialize_checkpoint(a.model), serialize_checkpoint(b.model));
  cfg.threads = 3;
  const auto c = train_fusion(paired, cfg);
  EXPECT_EQ(a.loss_history, c.loss_history);
  cfg.seed = 78;
  EXPECT_NE(train_fusion(paired, cfg).loss_history, a.loss_history);
}

TEST(Train, LossDecreasesOnSeparableData) {
  // well separated classes in both views
  TwoViewSpec spec;
  spec.dim = 8;
  spec.mu_strong = spec.mu_weak = spec.mu_shared = 3.0;
  const auto data = generate_two_view(spec, 30, 4);
  const auto paired = pair_views(data.main, data.aux);
  TrainConfig cfg;
  cfg.lr = 1e-2;
  cfg.seed = 1;
  const auto result = train_fusion(paired, cfg);
  ASSERT_EQ(result.loss_history.size(), 100u);
  EXPECT_LT(result.loss_history.back(), 0.25 * result.loss_history.front());
  for (const auto& p : result.model.parameters()) EXPECT_TRUE(p.tensor->all_finite()) << p.name;
}

TEST(Train, BatchIsCappedAtDatasetSize) {
  const auto paired = small_pairs(2, 3);
  TrainConfig cfg;
  cfg.iters = 2;
  cfg.batch = 512;
  cfg.lr = 0;
  const auto result = train_fusion(paired, cfg);
  // the whole dataset is one batch, so both losses are the full-data loss
  EXPECT_NEAR(result.loss_history[0], result.loss_history[1], 1e-9);
  const auto logits = predict_logits(result.model, paired.main_matrix(), paired.aux_matrix());
  EXPECT_NEAR(result.loss_history[0], cross_entropy(logits, paired.labels()), 1e-9);
}

TEST(Train, EmptyDataset) {
  try {
    train_fusion(PairedDataset{}, TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyDataset);
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  for (auto s : {KeyStrategy::Mean, KeyStrategy::Concat, KeyStrategy::UpDownMean, KeyStrategy::UpDownConcat}) {
    const auto m = FusionModel::init({12, 3, s, 7}, 21);
    const auto bytes = serialize_checkpoint(m);
    const auto back = deserialize_checkpoint(bytes);
    EXPECT_EQ(serialize_checkpoint(back), bytes);
    EXPECT_EQ(back.keygen.layers().size(), keygen_layer_count(s));
    EXPECT_EQ(back.config().hidden, 7u);
    EXPECT_EQ(back.attn.n_heads, 3u);
  }
}

TEST(Checkpoint, RecordsKeygenLayerCount) {
  const auto bytes = serialize_checkpoint(FusionModel::init({4, 2, KeyStrategy::UpDownConcat, 0}, 1));
  // magic(8) version(4) d(4) heads(4) strategy(1) then the layer count
  std::uint32_t layers = 0;
  std::memcpy(&layers, bytes.data() + 21, 4);
  EXPECT_EQ(layers, 3u);
  EXPECT_EQ(static_cast<std::uint8_t>(bytes[20]), static_cast<std::uint8_t>(KeyStrategy::UpDownConcat));
}

TEST(Checkpoint, RejectsInconsistentLayerCount) {
  auto bytes = serialize_checkpoint(FusionModel::init({4, 2, KeyStrategy::Mean, 0}, 1));
  const std::uint32_t wrong = 2;
  std::memcpy(bytes.data() + 21, &wrong, 4);
  EXPECT_THROW(deserialize_checkpoint(bytes), Error);
}

TEST(Checkpoint, RejectsCorruption) {
  const auto bytes = serialize_checkpoint(FusionModel::init({4, 2, KeyStrategy::Concat, 0}, 1));
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 1)), Error);
  EXPECT_THROW(deserialize_checkpoint(bytes + "x"), Error);
  EXPECT_THROW(deserialize_checkpoint("not a checkpoint"), Error);
}

TEST(LinearBaseline, LearnsSingleViewSignal) {
  const auto tr = small_pairs(60, 5, 16);
  const auto te = small_pairs(60, 6, 16);
  const auto clf = LinearClassifier::train(tr.main_matrix(), tr.labels(), 300, 0.05, 1);
  const auto pred = argmax_rows(clf.logits(te.main_matrix()));
  const double acc = accuracy(pred, te.labels());
  EXPECT_GT(acc, 0.55);
  EXPECT_LT(acc, 0.80);  // cannot beat the single-view Bayes rate by much
}

TEST(Synthetic, BayesRates) {
  const TwoViewSpec spec;
  EXPECT_NEAR(spec.single_view_bayes_accuracy(), 0.7, 0.01);
  EXPECT_NEAR(spec.joint_bayes_accuracy(), 0.95, 0.005);
}

TEST(Synthetic, BalancedWithOrderedFrames) {
  const auto data = generate_two_view(TwoViewSpec{}, 95, 3);
  for (auto n : data.main.class_histogram()) EXPECT_EQ(n, 95u);
  std::map<std::string, std::uint64_t> last;
  for (const auto& r : data.main.records()) {
    auto it = last.find(r.video_id);
    if (it != last.end()) EXPECT_GT(r.frame_index, it->second);
    last[r.video_id] = r.frame_index;
  }
  const auto again = generate_two_view(TwoViewSpec{}, 95, 3);
  EXPECT_EQ(again.aux.records(), data.aux.records());
}
