#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ferfusion/error.hpp"
#include "ferfusion/metrics.hpp"
#include "ferfusion/rng.hpp"
#include "oracles.hpp"

using namespace ferfusion;

namespace {

PredictionSequence from_labels(const std::vector<int>& labels, const std::string& video = "v") {
  PredictionSequence seq{video, {}};
  for (std::size_t i = 0; i < labels.size(); ++i) seq.frames.push_back({i, labels[i], labels[i], std::nullopt});
  return seq;
}

std::vector<int> labels_of(const PredictionSequence& seq) {
  std::vector<int> out;
  for (const auto& f : seq.frames) out.push_back(f.pred);
  return out;
}

}  // namespace

TEST(Confusion, SmallExample) {
  const std::vector<int> pred{0, 1, 1, 2}, gt{0, 1, 2, 2};
  const auto cc = confusion_counts(pred, gt);
  EXPECT_EQ(cc.tp[1], 1u);
  EXPECT_EQ(cc.fp[1], 1u);
  EXPECT_EQ(cc.fn[2], 1u);
  EXPECT_EQ(cc.tp[2], 1u);
  EXPECT_EQ(cc.tp[0], 1u);
  EXPECT_EQ(cc.fp[5] + cc.fn[5] + cc.tp[5], 0u);
}

TEST(Confusion, MatchesTally) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(300);
    std::vector<int> pred(n), gt(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = static_cast<int>(rng.below(8));
      gt[i] = static_cast<int>(rng.below(8));
    }
    const auto cc = confusion_counts(pred, gt);
    for (int c = 0; c < 8; ++c) {
      std::size_t tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < n; ++i) {
        tp += pred[i] == c && gt[i] == c;
        fp += pred[i] == c && gt[i] != c;
        fn += pred[i] != c && gt[i] == c;
      }
      ASSERT_EQ(cc.tp[c], tp);
      ASSERT_EQ(cc.fp[c], fp);
      ASSERT_EQ(cc.fn[c], fn);
    }
  }
}

TEST(Confusion, Errors) {
  const std::vector<int> a{1, 2}, b{1};
  EXPECT_THROW(confusion_counts(a, b), Error);
  const std::vector<int> bad{8};
  EXPECT_THROW(confusion_counts(bad, bad), Error);
}

TEST(F1, Examples) {
  const std::vector<int> same{3, 3, 4};
  auto f1 = f1_per_class(confusion_counts(same, same));
  EXPECT_DOUBLE_EQ(f1[3], 1.0);
  EXPECT_DOUBLE_EQ(f1[0], 0.0);  // absent class

  const std::vector<int> pred{1, 1}, gt{2, 2};
  f1 = f1_per_class(confusion_counts(pred, gt));
  EXPECT_DOUBLE_EQ(f1[1], 0.0);
  EXPECT_DOUBLE_EQ(f1[2], 0.0);

  // tp 1, fp 1, fn 1 -> 2 / 4
  const std::vector<int> p2{5, 5, 0}, g2{5, 0, 5};
  f1 = f1_per_class(confusion_counts(p2, g2));
  EXPECT_DOUBLE_EQ(f1[5], 0.5);
}

TEST(MacroF1, ReferenceRows) {
  const std::vector<double> concat{0.622, 0.364, 0.241, 0.018, 0.538, 0.432, 0.271, 0.554};
  EXPECT_NEAR(macro_f1(concat), 0.380, 0.0005);
  const std::vector<double> not_crop{0.624, 0.295, 0.188, 0.015, 0.515, 0.448, 0.287, 0.502};
  EXPECT_NEAR(macro_f1(not_crop), 0.359, 0.0005);
}

TEST(MacroF1, NeedsEightScores) {
  const std::vector<double> seven(7, 0.5);
  EXPECT_THROW(macro_f1(seven), Error);
}

TEST(Accuracy, ExamplesAndErrors) {
  const std::vector<int> p{1, 2, 3, 4}, g{1, 2, 0, 0};
  EXPECT_DOUBLE_EQ(accuracy(p, g), 0.5);
  const std::vector<int> empty;
  try {
    accuracy(empty, empty);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyInput);
  }
}

TEST(Smooth, WindowOneIsIdentity) {
  const std::vector<int> labels{0, 7, 7, 2, 0, 1};
  EXPECT_EQ(labels_of(sliding_window_smooth(from_labels(labels), 1)), labels);
}

TEST(Smooth, ConstantIsFixedPoint) {
  const std::vector<int> labels(120, 4);
  for (std::size_t k : {1u, 2u, 3u, 50u, 500u}) {
    EXPECT_EQ(labels_of(sliding_window_smooth(from_labels(labels), k)), labels);
  }
}

TEST(Smooth, SpikeRemoved) {
  std::vector<int> labels(11, 1);
  labels[5] = 6;
  EXPECT_EQ(labels_of(sliding_window_smooth(from_labels(labels), 3)), std::vector<int>(11, 1));
}

TEST(Smooth, TieKeepsOriginal) {
  // window of 2 at i covers [i-1, i]
  EXPECT_EQ(labels_of(sliding_window_smooth(from_labels({3, 5}), 2)), (std::vector<int>{3, 5}));
}

TEST(Smooth, GroundTruthUntouched) {
  auto seq = from_labels({2, 2, 6, 2, 2});
  seq.frames[2].gt = 6;
  const auto out = sliding_window_smooth(seq, 3);
  EXPECT_EQ(out.frames[2].pred, 2);
  EXPECT_EQ(out.frames[2].gt, 6);
  EXPECT_EQ(out.frames[2].frame_index, 2u);
}

TEST(Smooth, MatchesBruteForce) {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(1000);
    const std::size_t k = std::array<std::size_t, 3>{1, 3, 50}[trial % 3];
    // runs of labels with noise, so ties and changes both happen
    std::vector<int> labels(n);
    int cur = static_cast<int>(rng.below(8));
    for (auto& l : labels) {
      if (rng.uniform() < 0.05) cur = static_cast<int>(rng.below(8));
      l = rng.uniform() < 0.3 ? static_cast<int>(rng.below(8)) : cur;
    }
    ASSERT_EQ(labels_of(sliding_window_smooth(from_labels(labels), k)), oracle::windowed_majority(labels, k))
        << "trial " << trial << " n " << n << " k " << k;
  }
}

TEST(Smooth, LogitsMean) {
  PredictionSequence seq{"v", {}};
  const double rows[3][2] = {{1.0, 0.0}, {0.0, 0.5}, {1.0, 0.0}};
  for (std::uint64_t i = 0; i < 3; ++i) {
    std::array<double, kNumClasses> l{};
    l[0] = rows[i][0];
    l[1] = rows[i][1];
    seq.frames.push_back({i, l[1] > l[0] ? 1 : 0, std::nullopt, l});
  }
  const auto out = sliding_window_smooth_logits(seq, 3);
  EXPECT_EQ(out.frames[1].pred, 0);
  EXPECT_NEAR((*out.frames[1].logits)[0], 2.0 / 3.0, 1e-15);
  seq.frames[0].logits.reset();
  EXPECT_THROW(sliding_window_smooth_logits(seq, 3), Error);
}

TEST(Smooth, UnorderedFramesRejected) {
  auto seq = from_labels({1, 2, 3});
  seq.frames[2].frame_index = 1;
  EXPECT_THROW(sliding_window_smooth(seq, 3), Error);
  EXPECT_THROW(sliding_window_smooth(from_labels({1}), 0), Error);
}

TEST(Predictions, CsvRoundTripAndGrouping) {
  const auto dir = std::filesystem::temp_directory_path() / "ferfusion_metrics_test";
  std::filesystem::create_directories(dir);
  std::vector<PredictionSequence> seqs{from_labels({1, 2, 3}, "b"), from_labels({0, 7}, "a")};
  std::array<double, kNumClasses> l{};
  l[4] = -1.25;
  seqs[0].frames[1].logits = l;
  seqs[1].frames[0].gt.reset();
  std::ofstream(dir / "p.csv") << predictions_csv(seqs);
  const auto back = read_predictions(dir / "p.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].video_id, "b");
  EXPECT_EQ(back[0].frames, seqs[0].frames);
  EXPECT_EQ(back[1].frames, seqs[1].frames);

  std::ofstream(dir / "bad.csv") << "v,0,1,1\nv,0,2,2\n";
  EXPECT_THROW(read_predictions(dir / "bad.csv"), Error);
  std::ofstream(dir / "bad2.csv") << "v,0,9,1\n";
  EXPECT_THROW(read_predictions(dir / "bad2.csv"), Error);
}

TEST(Report, ColumnsAndValues) {
  const std::vector<int> p{0, 1, 2, 3, 4, 5, 6, 7}, g{0, 1, 2, 3, 4, 5, 6, 7};
  const auto r = evaluate_labels(p, g);
  EXPECT_DOUBLE_EQ(r.macro_f1, 1.0);
  const auto csv = report_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "Accuracy,Neutral,Anger,Disgust,Fear,Happy,Sad,Surprise,Other,MacroF1");
}

TEST(Report, SequencesSkipFramesWithoutGroundTruth) {
  auto seq = from_labels({1, 1, 2});
  seq.frames[2].gt.reset();
  const auto r = evaluate_sequences({seq});
  EXPECT_EQ(r.samples, 2u);
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
}
