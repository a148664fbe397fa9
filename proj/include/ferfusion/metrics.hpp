#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ferfusion/features.hpp"

namespace ferfusion {

struct ConfusionCounts {
  std::array<std::size_t, kNumClasses> tp{};
  std::array<std::size_t, kNumClasses> fp{};
  std::array<std::size_t, kNumClasses> fn{};

  bool operator==(const ConfusionCounts&) const = default;
};

/// One-vs-rest counts. Throws LengthMismatch / InvalidArgument.
ConfusionCounts confusion_counts(std::span<const int> pred, std::span<const int> gt);

/// 2 tp / (2 tp + fp + fn), and 0 for a class that never occurs in either sequence.
std::array<double, kNumClasses> f1_per_class(const ConfusionCounts& cc);

double macro_f1(std::span<const double> f1s);

/// Throws LengthMismatch, or EmptyInput when both are empty.
double accuracy(std::span<const int> pred, std::span<const int> gt);

struct FramePrediction {
  std::uint64_t frame_index = 0;
  int pred = 0;
  std::optional<int> gt;
  std::optional<std::array<double, kNumClasses>> logits;

  bool operator==(const FramePrediction&) const = default;
};

struct PredictionSequence {
  std::string video_id;
  std::vector<FramePrediction> frames;

  /// Throws InvalidArgument unless frame indices strictly increase.
  void validate() const;
};

/// Centered majority vote. Frame i looks at the original labels in
/// [max(0, i - floor(k/2)), min(N-1, i + ceil(k/2) - 1)]. On a tie the
/// original label at i wins if it is among the leaders, otherwise the lowest
/// class index. Only labels change.
PredictionSequence sliding_window_smooth(const PredictionSequence& seq, std::size_t k = 50);

/// Same window, but averages logits and takes the argmax (lowest index on
/// ties). Every frame needs logits. The averaged logits replace the originals.
PredictionSequence sliding_window_smooth_logits(const PredictionSequence& seq, std::size_t k = 50);

// Predictions CSV: video_id,frame_index,pred,gt,logit0..logit7 where gt and the
// logits may be empty or the logit columns absent altogether.
std::vector<PredictionSequence> read_predictions(const std::filesystem::path& path);
std::string predictions_csv(const std::vector<PredictionSequence>& sequences);

struct EvalReport {
  std::size_t samples = 0;
  double accuracy = 0.0;
  std::array<double, kNumClasses> f1{};
  double macro_f1 = 0.0;
};

EvalReport evaluate_labels(std::span<const int> pred, std::span<const int> gt);
/// Scores every frame that carries a ground-truth label.
EvalReport evaluate_sequences(const std::vector<PredictionSequence>& sequences);

// Columns: Accuracy,Neutral,Anger,Disgust,Fear,Happy,Sad,Surprise,Other,MacroF1
std::string report_csv(const EvalReport& report);
std::string report_text(const EvalReport& report);

}  // namespace ferfusion
