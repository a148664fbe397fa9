#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ferfusion/features.hpp"
#include "ferfusion/rng.hpp"
#include "ferfusion/tensor.hpp"

namespace ferfusion {

// Fully connected layer: y = W x + b, W is (out x in).
struct DenseLayer {
  Tensor weight;
  Tensor bias;

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out);

  std::size_t in_dim() const { return weight.dim(1); }
  std::size_t out_dim() const { return weight.dim(0); }

  std::vector<double> forward(std::span<const double> x) const;
  /// uniform(-1/sqrt(in), 1/sqrt(in)) for weight and bias
  void init_uniform(Rng& rng);
};

enum class KeyStrategy : std::uint8_t { Mean = 0, Concat = 1, UpDownMean = 2, UpDownConcat = 3 };

std::string_view to_string(KeyStrategy s);
KeyStrategy parse_key_strategy(std::string_view text);

/// Dense layers per strategy: Mean 1, Concat 1, UpDownMean 2, UpDownConcat 3.
std::size_t keygen_layer_count(KeyStrategy s);

/// Builds the fused key from the two view features.
///
/// Mean-type strategies start from 0.5 * (main + aux) (width d), concat-type
/// strategies from [main | aux] (width 2d). UpDown variants run an expanding
/// layer to width 2d first; ReLU sits between layers, never after the last.
/// The last layer always produces width d.
class KeyGenerator {
 public:
  KeyGenerator() = default;
  /// Validates layer count and widths against the strategy.
  KeyGenerator(KeyStrategy strategy, std::vector<DenseLayer> layers);
  /// Correctly shaped, zero-filled layers.
  static KeyGenerator zeros(KeyStrategy strategy, std::size_t d);

  KeyStrategy strategy() const noexcept { return strategy_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  std::size_t dim() const { return layers_.back().out_dim(); }

  /// Input to the first dense layer.
  std::vector<double> combine(std::span<const double> f_main, std::span<const double> f_aux) const;

 private:
  KeyStrategy strategy_ = KeyStrategy::Concat;
  std::vector<DenseLayer> layers_;
};

std::vector<double> key_generate(std::span<const double> f_main, std::span<const double> f_aux,
                                 const KeyGenerator& keygen);

struct AttentionConfig {
  std::size_t d_model = 0;
  std::size_t n_heads = 1;

  std::size_t d_k() const { return d_model / n_heads; }
  void validate() const;
};

/// Numerically stable softmax (max subtracted before exponentiation).
std::vector<double> softmax(std::span<const double> x);

/// softmax(Q K^T / sqrt(d_k)) V for Q (n_q x d_k), K (n_k x d_k), V (n_k x d_v).
/// When weights_out is given it receives the (n_q x n_k) attention weights.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t d_k,
                            Tensor* weights_out = nullptr);

/// Width-3 zero-padded correlation over the feature axis:
/// y[i] = k[0] x[i-1] + k[1] x[i] + k[2] x[i+1].
std::vector<double> local_attention(std::span<const double> x, std::span<const double> kernel);

struct ModelConfig {
  std::size_t dim = 16;
  std::size_t n_heads = 2;
  KeyStrategy strategy = KeyStrategy::Concat;
  std::size_t hidden = 0;  // classifier hidden width; 0 means dim
};

struct NamedParam {
  std::string name;
  Tensor* tensor;
};

struct ConstNamedParam {
  std::string name;
  const Tensor* tensor;
};

/// All learnable state of the fusion network.
///
/// Per sample: fused = keygen(main, aux); q = Wq main, k = Wk fused,
/// v = Wv fused. q, k and v are each cut into n_heads chunks of d_k values
/// and the chunks form a token sequence that attends to itself through
/// scaled_dot_attention. The attended chunks are re-joined, projected by
/// out_proj, refined by local_attention and added to the main-view feature
/// (skip connection). A two-layer ReLU MLP maps the result to 8 logits.
struct FusionModel {
  KeyGenerator keygen;
  DenseLayer q_proj, k_proj, v_proj, out_proj;
  Tensor local_kernel{{3}};
  DenseLayer classifier_hidden, classifier_out;
  AttentionConfig attn;

  /// Zero parameters with the shapes implied by cfg.
  static FusionModel zeros(const ModelConfig& cfg);
  /// Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation.
  static FusionModel init(const ModelConfig& cfg, std::uint64_t seed);

  ModelConfig config() const;
  void validate() const;

  std::vector<NamedParam> parameters();
  std::vector<ConstNamedParam> parameters() const;
  std::size_t parameter_count() const;
};

// Everything backward needs from one sample's forward pass.
struct SampleCache {
  std::vector<double> f_main, f_aux;
  std::vector<std::vector<double>> keygen_inputs;  // input to each keygen layer
  std::vector<std::vector<double>> keygen_pre;     // pre-activation of each keygen layer
  std::vector<double> fused;
  std::vector<double> q, k, v;
  Tensor attn_weights;  // n_heads x n_heads
  std::vector<double> attended;
  std::vector<double> projected;
  std::vector<double> local;
  std::vector<double> block;
  std::vector<double> hidden_pre, hidden;
  std::vector<double> logits;
};

struct BatchForward {
  Tensor logits;  // N x 8
  std::vector<SampleCache> caches;
};

SampleCache fusion_forward(const FusionModel& model, std::span<const double> f_main, std::span<const double> f_aux);

/// Rows of main and aux are paired samples.
BatchForward fusion_forward(const FusionModel& model, const Tensor& main, const Tensor& aux);

/// Logits only; no caches retained.
Tensor predict_logits(const FusionModel& model, const Tensor& main, const Tensor& aux);

/// Sum over the batch of -log softmax(logits)[label]; log arguments are
/// floored at exp(-700).
double cross_entropy(const Tensor& logits, std::span<const int> labels);

// One tensor per FusionModel::parameters() entry, same order and shapes.
using Gradients = std::vector<Tensor>;

Gradients zero_gradients(const FusionModel& model);

/// Gradient of one sample's cross-entropy term, added into grads.
void sample_backward(const FusionModel& model, const SampleCache& cache, int label, Gradients& grads);

/// Gradient of the summed cross-entropy. Per-sample gradients may be
/// computed on several threads; they are always reduced in sample order,
/// so the result does not depend on the thread count.
Gradients fusion_backward(const FusionModel& model, const std::vector<SampleCache>& caches,
                          std::span<const int> labels, std::size_t threads = 1);

}  // namespace ferfusion
