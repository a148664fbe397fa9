#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ferfusion/image.hpp"
#include "ferfusion/tensor.hpp"

namespace ferfusion {

inline constexpr std::size_t kNumClasses = 8;

// Column order of the per-class tables: 0=Neutral ... 7=Other.
inline constexpr std::array<std::string_view, kNumClasses> kClassNames{
    "Neutral", "Anger", "Disgust", "Fear", "Happy", "Sad", "Surprise", "Other"};

struct EmbeddingRecord {
  std::string sample_id;
  std::string video_id;
  std::uint64_t frame_index = 0;
  int label = 0;
  std::vector<float> vector;

  bool operator==(const EmbeddingRecord&) const = default;
};

// Immutable collection of records sharing one vector dimension.
class EmbeddingDataset {
 public:
  EmbeddingDataset() = default;
  /// Throws DimensionMismatch on ragged vectors and InvalidArgument on labels outside 0..7.
  explicit EmbeddingDataset(std::vector<EmbeddingRecord> records);

  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<EmbeddingRecord>& records() const noexcept { return records_; }
  const EmbeddingRecord& operator[](std::size_t i) const { return records_[i]; }

  std::array<std::size_t, kNumClasses> class_histogram() const;

 private:
  std::vector<EmbeddingRecord> records_;
  std::size_t dim_ = 0;
};

// Binary layout (all integers little-endian):
//   magic "FEREMB\0\0" | u32 version=1 | u32 dim | u64 count
//   per record: u32 len + sample_id | u32 len + video_id | u64 frame_index |
//               u8 label | dim x f32
void save_embeddings(const std::filesystem::path& path, const EmbeddingDataset& ds);
void save_embeddings_csv(const std::filesystem::path& path, const EmbeddingDataset& ds);

/// Reads either layout; the binary magic decides. CSV rows are
/// `sample_id,video_id,frame_index,label,v0,...` with an optional header row.
EmbeddingDataset load_embeddings(const std::filesystem::path& path);

/// Draws exactly n_per_class records of every class without replacement,
/// then shuffles the result. Throws InsufficientClass if a class is short.
EmbeddingDataset uniform_class_sample(const EmbeddingDataset& ds, std::size_t n_per_class, std::uint64_t seed);

// Two views aligned row by row on sample_id.
struct PairedDataset {
  std::vector<EmbeddingRecord> main;
  std::vector<EmbeddingRecord> aux;
  std::size_t dropped_main = 0;  // ids only in main
  std::size_t dropped_aux = 0;   // ids only in aux

  std::size_t size() const noexcept { return main.size(); }
  std::size_t dim() const noexcept { return main.empty() ? 0 : main.front().vector.size(); }
  std::vector<int> labels() const;
  Tensor main_matrix() const;
  Tensor aux_matrix() const;
};

/// Inner join on sample_id in main-view order. Throws LabelConflict when a
/// shared id carries different labels, DimensionMismatch when the views differ in width.
PairedDataset pair_views(const EmbeddingDataset& main, const EmbeddingDataset& aux);

std::string pairing_report(const PairedDataset& paired);

// Linear stand-in for a fine-tuned feature extractor.
class ToyEncoder {
 public:
  ToyEncoder(Tensor weight, Tensor bias);
  static ToyEncoder random(std::size_t d_out, std::size_t n_inputs, std::uint64_t seed);

  std::size_t output_dim() const { return weight_.dim(0); }
  std::size_t input_dim() const { return weight_.dim(1); }
  const Tensor& weight() const noexcept { return weight_; }
  const Tensor& bias() const noexcept { return bias_; }

  /// weight * (pixels / 255) + bias over the flattened image. Throws
  /// ShapeMismatch when the image value count differs from input_dim().
  std::vector<double> encode(const ImageBuffer& img) const;

 private:
  Tensor weight_;
  Tensor bias_;
};

}  // namespace ferfusion
