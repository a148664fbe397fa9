#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ferfusion/features.hpp"
#include "ferfusion/fusion.hpp"

namespace ferfusion {

struct TrainConfig {
  ModelConfig model;  // model.dim is taken from the data
  std::size_t iters = 100;
  std::size_t batch = 512;  // capped at the dataset size
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct TrainResult {
  FusionModel model;
  std::vector<double> loss_history;  // summed batch loss before each update
};

/// Model weights come from seed, the batch order from a second stream
/// derived from seed. Batches walk a shuffled permutation that is redrawn
/// whenever it runs out. Throws EmptyDataset on an empty pairing.
TrainResult train_fusion(const PairedDataset& paired, const TrainConfig& cfg);

/// Same loop on an existing model (used when the caller built the model).
std::vector<double> train_fusion(FusionModel& model, const Tensor& main, const Tensor& aux,
                                 std::span<const int> labels, const TrainConfig& cfg);

std::vector<int> argmax_rows(const Tensor& logits);

std::string loss_history_csv(const std::vector<double>& losses);

// Checkpoint layout (little-endian):
//   magic "FERFCKPT" | u32 version=1
//   config: u32 d_model | u32 n_heads | u8 strategy | u32 keygen_layers |
//           u32 hidden | u32 classes
//   u32 param_count, then per tensor: u32 name_len + name | u32 rank |
//   rank x u64 dims | data as f64
std::string serialize_checkpoint(const FusionModel& model);
FusionModel deserialize_checkpoint(std::string_view bytes, const std::string& origin = "checkpoint");
void save_checkpoint(const std::filesystem::path& path, const FusionModel& model);
FusionModel load_checkpoint(const std::filesystem::path& path);

// Multinomial logistic regression on one view; the single-view reference point.
struct LinearClassifier {
  DenseLayer layer;

  static LinearClassifier train(const Tensor& x, std::span<const int> labels, std::size_t iters, double lr,
                                std::uint64_t seed);
  Tensor logits(const Tensor& x) const;
};

}  // namespace ferfusion
