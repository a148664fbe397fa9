#include "ferfusion/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "ferfusion/error.hpp"

namespace ferfusion {

DenseLayer::DenseLayer(std::size_t in, std::size_t out) : weight({out, in}), bias({out}) {}

std::vector<double> DenseLayer::forward(std::span<const double> x) const {
  if (x.size() != in_dim()) {
    throw Error(ErrorKind::ShapeMismatch, "dense layer expects width " + std::to_string(in_dim()) + ", got " +
                                              std::to_string(x.size()));
  }
  std::vector<double> y(out_dim());
  for (std::size_t o = 0; o < y.size(); ++o) {
    const auto w = weight.row(o);
    double acc = bias[o];
    for (std::size_t i = 0; i < x.size(); ++i) acc += w[i] * x[i];
    y[o] = acc;
  }
  return y;
}

void DenseLayer::init_uniform(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim()));
  for (auto& v : weight.values()) v = rng.uniform(-bound, bound);
  for (auto& v : bias.values()) v = rng.uniform(-bound, bound);
}

std::string_view to_string(KeyStrategy s) {
  switch (s) {
    case KeyStrategy::Mean: return "mean";
    case KeyStrategy::Concat: return "concat";
    case KeyStrategy::UpDownMean: return "updown-mean";
    case KeyStrategy::UpDownConcat: return "updown-concat";
  }
  return "?";
}

KeyStrategy parse_key_strategy(std::string_view text) {
  std::string s;
  for (char c : text) {
    if (c == '_' || c == '-' || c == ' ') continue;
    s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (s == "mean") return KeyStrategy::Mean;
  if (s == "concat") return KeyStrategy::Concat;
  if (s == "updownmean") return KeyStrategy::UpDownMean;
  if (s == "updownconcat") return KeyStrategy::UpDownConcat;
  throw Error(ErrorKind::InvalidArgument, "unknown key-generator strategy '" + std::string(text) + "'");
}

std::size_t keygen_layer_count(KeyStrategy s) {
  switch (s) {
    case KeyStrategy::Mean:
    case KeyStrategy::Concat: return 1;
    case KeyStrategy::UpDownMean: return 2;
    case KeyStrategy::UpDownConcat: return 3;
  }
  return 0;
}

namespace {

bool is_concat(KeyStrategy s) { return s == KeyStrategy::Concat || s == KeyStrategy::UpDownConcat; }

// (in, out) widths of every keygen layer for feature width d.
std::vector<std::pair<std::size_t, std::size_t>> keygen_widths(KeyStrategy s, std::size_t d) {
  switch (s) {
    case KeyStrategy::Mean: return {{d, d}};
    case KeyStrategy::Concat: return {{2 * d, d}};
    case KeyStrategy::UpDownMean: return {{d, 2 * d}, {2 * d, d}};
    case KeyStrategy::UpDownConcat: return {{2 * d, 2 * d}, {2 * d, 2 * d}, {2 * d, d}};
  }
  return {};
}

void relu_inplace(std::vector<double>& x) {
  for (auto& v : x) v = v > 0.0 ? v : 0.0;
}

}  // namespace

KeyGenerator::KeyGenerator(KeyStrategy strategy, std::vector<DenseLayer> layers)
    : strategy_(strategy), layers_(std::move(layers)) {
  const std::size_t expected = keygen_layer_count(strategy);
  if (layers_.size() != expected) {
    throw Error(ErrorKind::InvalidArgument, std::string(to_string(strategy)) + " key generator needs " +
                                                std::to_string(expected) + " dense layers, got " +
                                                std::to_string(layers_.size()));
  }
  const std::size_t d = layers_.back().out_dim();
  const auto widths = keygen_widths(strategy, d);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (layers_[i].in_dim() != widths[i].first || layers_[i].out_dim() != widths[i].second ||
        layers_[i].bias.size() != widths[i].second) {
      throw Error(ErrorKind::ShapeMismatch, std::string(to_string(strategy)) + " key generator layer " +
                                                std::to_string(i) + " has the wrong shape");
    }
  }
}

KeyGenerator KeyGenerator::zeros(KeyStrategy strategy, std::size_t d) {
  std::vector<DenseLayer> layers;
  for (const auto& [in, out] : keygen_widths(strategy, d)) layers.emplace_back(in, out);
  return KeyGenerator(strategy, std::move(layers));
}

std::vector<double> KeyGenerator::combine(std::span<const double> f_main, std::span<const double> f_aux) const {
  if (f_main.size() != f_aux.size() || f_main.size() != dim()) {
    throw Error(ErrorKind::ShapeMismatch, "key generator expects two vectors of width " + std::to_string(dim()));
  }
  std::vector<double> x;
  if (is_concat(strategy_)) {
    x.assign(f_main.begin(), f_main.end());
    x.insert(x.end(), f_aux.begin(), f_aux.end());
  } else {
    x.resize(f_main.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.5 * (f_main[i] + f_aux[i]);
  }
  return x;
}

std::vector<double> key_generate(std::span<const double> f_main, std::span<const double> f_aux,
                                 const KeyGenerator& keygen) {
  std::vector<double> x = keygen.combine(f_main, f_aux);
  const auto& layers = keygen.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    x = layers[l].forward(x);
    if (l + 1 < layers.size()) relu_inplace(x);
  }
  return x;
}

void AttentionConfig::validate() const {
  if (n_heads == 0 || d_model == 0 || d_model % n_heads != 0) {
    throw Error(ErrorKind::InvalidArgument, "n_heads (" + std::to_string(n_heads) + ") must divide d_model (" +
                                                std::to_string(d_model) + ")");
  }
}

std::vector<double> softmax(std::span<const double> x) {
  std::vector<double> out(x.size());
  if (x.empty()) return out;
  const double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t d_k,
                            Tensor* weights_out) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != d_k || k.dim(1) != d_k ||
      k.dim(0) != v.dim(0) || k.dim(0) == 0) {
    throw Error(ErrorKind::ShapeMismatch, "attention expects Q (n_q x d_k), K (n_k x d_k), V (n_k x d_v)");
  }
  const std::size_t n_q = q.dim(0), n_k = k.dim(0), d_v = v.dim(1);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_k));
  Tensor out({n_q, d_v});
  Tensor weights({n_q, n_k});
  std::vector<double> scores(n_k);
  for (std::size_t i = 0; i < n_q; ++i) {
    for (std::size_t j = 0; j < n_k; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < d_k; ++t) s += q(i, t) * k(j, t);
      scores[j] = s * scale;
    }
    const auto p = softmax(scores);
    for (std::size_t j = 0; j < n_k; ++j) {
      weights(i, j) = p[j];
      for (std::size_t t = 0; t < d_v; ++t) out(i, t) += p[j] * v(j, t);
    }
  }
  if (weights_out) *weights_out = std::move(weights);
  return out;
}

std::vector<double> local_attention(std::span<const double> x, std::span<const double> kernel) {
  if (kernel.size() != 3) throw Error(ErrorKind::ShapeMismatch, "local attention kernel must have width 3");
  const std::size_t n = x.size();
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = kernel[1] * x[i];
    if (i > 0) acc += kernel[0] * x[i - 1];
    if (i + 1 < n) acc += kernel[2] * x[i + 1];
    y[i] = acc;
  }
  return y;
}

FusionModel FusionModel::zeros(const ModelConfig& cfg) {
  FusionModel m;
  m.attn = {cfg.dim, cfg.n_heads};
  m.attn.validate();
  const std::size_t d = cfg.dim;
  const std::size_t hidden = cfg.hidden == 0 ? d : cfg.hidden;
  m.keygen = KeyGenerator::zeros(cfg.strategy, d);
  m.q_proj = DenseLayer(d, d);
  m.k_proj = DenseLayer(d, d);
  m.v_proj = DenseLayer(d, d);
  m.out_proj = DenseLayer(d, d);
  m.local_kernel = Tensor({3});
  m.classifier_hidden = DenseLayer(d, hidden);
  m.classifier_out = DenseLayer(hidden, kNumClasses);
  return m;
}

FusionModel FusionModel::init(const ModelConfig& cfg, std::uint64_t seed) {
  FusionModel m = zeros(cfg);
  Rng rng(seed);
  for (auto& layer : m.keygen.layers()) layer.init_uniform(rng);
  for (DenseLayer* layer : {&m.q_proj, &m.k_proj, &m.v_proj, &m.out_proj}) layer->init_uniform(rng);
  const double bound = 1.0 / std::sqrt(3.0);
  for (auto& v : m.local_kernel.values()) v = rng.uniform(-bound, bound);
  m.classifier_hidden.init_uniform(rng);
  m.classifier_out.init_uniform(rng);
  return m;
}

ModelConfig FusionModel::config() const {
  return {attn.d_model, attn.n_heads, keygen.strategy(), classifier_hidden.out_dim()};
}

void FusionModel::validate() const {
  attn.validate();
  const std::size_t d = attn.d_model;
  KeyGenerator check(keygen.strategy(), keygen.layers());
  if (check.dim() != d) throw Error(ErrorKind::ShapeMismatch, "key generator width differs from d_model");
  for (const DenseLayer* layer : {&q_proj, &k_proj, &v_proj, &out_proj}) {
    if (layer->in_dim() != d || layer->out_dim() != d || layer->bias.size() != d) {
      throw Error(ErrorKind::ShapeMismatch, "attention projections must be d_model x d_model");
    }
  }
  if (local_kernel.size() != 3) throw Error(ErrorKind::ShapeMismatch, "local kernel must have width 3");
  if (classifier_hidden.in_dim() != d || classifier_out.in_dim() != classifier_hidden.out_dim() ||
      classifier_out.out_dim() != kNumClasses) {
    throw Error(ErrorKind::ShapeMismatch, "classifier must map d_model to 8 classes");
  }
}

namespace {

template <typename Param, typename Model>
std::vector<Param> collect(Model& m) {
  std::vector<Param> out;
  auto dense = [&out](const std::string& name, auto& layer) {
    out.push_back({name + ".weight", &layer.weight});
    out.push_back({name + ".bias", &layer.bias});
  };
  for (std::size_t l = 0; l < m.keygen.layers().size(); ++l) dense("keygen." + std::to_string(l), m.keygen.layers()[l]);
  dense("q_proj", m.q_proj);
  dense("k_proj", m.k_proj);
  dense("v_proj", m.v_proj);
  dense("out_proj", m.out_proj);
  out.push_back({"local.kernel", &m.local_kernel});
  dense("classifier.0", m.classifier_hidden);
  dense("classifier.1", m.classifier_out);
  return out;
}

}  // namespace

std::vector<NamedParam> FusionModel::parameters() { return collect<NamedParam>(*this); }
std::vector<ConstNamedParam> FusionModel::parameters() const { return collect<ConstNamedParam>(*this); }

std::size_t FusionModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor->size();
  return n;
}

namespace {

// Splits a d-vector into an (n_heads x d_k) token matrix.
Tensor as_tokens(const std::vector<double>& x, std::size_t n_heads) {
  return Tensor({n_heads, x.size() / n_heads}, x);
}

}  // namespace

SampleCache fusion_forward(const FusionModel& model, std::span<const double> f_main, std::span<const double> f_aux) {
  const std::size_t d = model.attn.d_model;
  if (f_main.size() != d || f_aux.size() != d) {
    throw Error(ErrorKind::ShapeMismatch, "model expects features of width " + std::to_string(d) + ", got " +
                                              std::to_string(f_main.size()) + " and " + std::to_string(f_aux.size()));
  }
  SampleCache c;
  c.f_main.assign(f_main.begin(), f_main.end());
  c.f_aux.assign(f_aux.begin(), f_aux.end());

  std::vector<double> x = model.keygen.combine(f_main, f_aux);
  const auto& layers = model.keygen.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    c.keygen_inputs.push_back(x);
    x = layers[l].forward(x);
    c.keygen_pre.push_back(x);
    if (l + 1 < layers.size()) relu_inplace(x);
  }
  c.fused = std::move(x);

  c.q = model.q_proj.forward(c.f_main);
  c.k = model.k_proj.forward(c.fused);
  c.v = model.v_proj.forward(c.fused);

  const std::size_t h = model.attn.n_heads;
  const Tensor attended = scaled_dot_attention(as_tokens(c.q, h), as_tokens(c.k, h), as_tokens(c.v, h),
                                               model.attn.d_k(), &c.attn_weights);
  c.attended = attended.values();
  c.projected = model.out_proj.forward(c.attended);
  c.local = local_attention(c.projected, model.local_kernel.values());

  c.block.resize(d);
  for (std::size_t i = 0; i < d; ++i) c.block[i] = c.local[i] + c.f_main[i];

  c.hidden_pre = model.classifier_hidden.forward(c.block);
  c.hidden = c.hidden_pre;
  relu_inplace(c.hidden);
  c.logits = model.classifier_out.forward(c.hidden);
  return c;
}

namespace {

void check_batch(const FusionModel& model, const Tensor& main, const Tensor& aux) {
  if (main.rank() != 2 || aux.rank() != 2 || main.shape() != aux.shape() || main.dim(1) != model.attn.d_model) {
    throw Error(ErrorKind::ShapeMismatch, "batch inputs must both be N x " + std::to_string(model.attn.d_model));
  }
}

}  // namespace

BatchForward fusion_forward(const FusionModel& model, const Tensor& main, const Tensor& aux) {
  check_batch(model, main, aux);
  const std::size_t n = main.dim(0);
  BatchForward out{Tensor({n, kNumClasses}), {}};
  out.caches.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.caches.push_back(fusion_forward(model, main.row(i), aux.row(i)));
    std::copy(out.caches.back().logits.begin(), out.caches.back().logits.end(), out.logits.row(i).begin());
  }
  return out;
}

Tensor predict_logits(const FusionModel& model, const Tensor& main, const Tensor& aux) {
  check_batch(model, main, aux);
  const std::size_t n = main.dim(0);
  Tensor logits({n, kNumClasses});
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = fusion_forward(model, main.row(i), aux.row(i));
    std::copy(c.logits.begin(), c.logits.end(), logits.row(i).begin());
  }
  return logits;
}

double cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw Error(ErrorKind::ShapeMismatch, "cross entropy needs one label per logits row");
  }
  constexpr double kLogFloor = -700.0;
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = logits.row(i);
    const auto y = static_cast<std::size_t>(labels[i]);
    if (labels[i] < 0 || y >= row.size()) throw Error(ErrorKind::InvalidArgument, "label outside class range");
    // log softmax via log-sum-exp
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double z : row) sum += std::exp(z - mx);
    const double log_p = row[y] - mx - std::log(sum);
    loss -= std::max(log_p, kLogFloor);
  }
  return loss;
}

Gradients zero_gradients(const FusionModel& model) {
  Gradients g;
  for (const auto& p : model.parameters()) g.emplace_back(p.tensor->shape());
  return g;
}

namespace {

// Accumulates dW += dy x^T, db += dy and returns W^T dy.
std::vector<double> dense_backward(const DenseLayer& layer, std::span<const double> x, std::span<const double> dy,
                                   Tensor& dw, Tensor& db) {
  const std::size_t in = layer.in_dim();
  std::vector<double> dx(in, 0.0);
  for (std::size_t o = 0; o < dy.size(); ++o) {
    const double g = dy[o];
    db[o] += g;
    auto dw_row = dw.row(o);
    const auto w_row = layer.weight.row(o);
    for (std::size_t i = 0; i < in; ++i) {
      dw_row[i] += g * x[i];
      dx[i] += w_row[i] * g;
    }
  }
  return dx;
}

void relu_backward(std::vector<double>& grad, const std::vector<double>& pre) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(pre[i] > 0.0)) grad[i] = 0.0;
  }
}

}  // namespace

void sample_backward(const FusionModel& model, const SampleCache& c, int label, Gradients& grads) {
  const std::size_t d = model.attn.d_model;
  const std::size_t n_kg = model.keygen.layers().size();
  // index layout follows FusionModel::parameters()
  const std::size_t q_idx = 2 * n_kg, k_idx = q_idx + 2, v_idx = k_idx + 2, o_idx = v_idx + 2;
  const std::size_t kernel_idx = o_idx + 2, c0_idx = kernel_idx + 1, c1_idx = c0_idx + 2;

  // d(-log p_y)/dz = softmax(z) - onehot(y)
  std::vector<double> dlogits = softmax(c.logits);
  dlogits[static_cast<std::size_t>(label)] -= 1.0;

  std::vector<double> dhidden = dense_backward(model.classifier_out, c.hidden, dlogits, grads[c1_idx], grads[c1_idx + 1]);
  relu_backward(dhidden, c.hidden_pre);
  const std::vector<double> dblock =
      dense_backward(model.classifier_hidden, c.block, dhidden, grads[c0_idx], grads[c0_idx + 1]);

  // block = local + f_main; f_main is an input, so only the local branch carries parameters
  const std::vector<double>& dlocal = dblock;
  const auto& kernel = model.local_kernel.values();
  std::vector<double> dprojected(d, 0.0);
  Tensor& dkernel = grads[kernel_idx];
  for (std::size_t i = 0; i < d; ++i) {
    const double g = dlocal[i];
    dkernel[1] += g * c.projected[i];
    dprojected[i] += kernel[1] * g;
    if (i > 0) {
      dkernel[0] += g * c.projected[i - 1];
      dprojected[i - 1] += kernel[0] * g;
    }
    if (i + 1 < d) {
      dkernel[2] += g * c.projected[i + 1];
      dprojected[i + 1] += kernel[2] * g;
    }
  }

  const std::vector<double> dattended =
      dense_backward(model.out_proj, c.attended, dprojected, grads[o_idx], grads[o_idx + 1]);

  // attention over the n_heads chunk tokens
  const std::size_t h = model.attn.n_heads, dk = model.attn.d_k();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  const Tensor& p = c.attn_weights;
  std::vector<double> dq(d, 0.0), dkey(d, 0.0), dv(d, 0.0);
  for (std::size_t i = 0; i < h; ++i) {
    // dP_ij = dA_i . V_j, dS_ij = P_ij (dP_ij - sum_l P_il dP_il)
    std::vector<double> dp(h, 0.0);
    double weighted = 0.0;
    for (std::size_t j = 0; j < h; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < dk; ++t) {
        s += dattended[i * dk + t] * c.v[j * dk + t];
        dv[j * dk + t] += p(i, j) * dattended[i * dk + t];
      }
      dp[j] = s;
      weighted += p(i, j) * s;
    }
    for (std::size_t j = 0; j < h; ++j) {
      const double ds = p(i, j) * (dp[j] - weighted) * scale;
      for (std::size_t t = 0; t < dk; ++t) {
        dq[i * dk + t] += ds * c.k[j * dk + t];
        dkey[j * dk + t] += ds * c.q[i * dk + t];
      }
    }
  }

  dense_backward(model.q_proj, c.f_main, dq, grads[q_idx], grads[q_idx + 1]);
  std::vector<double> dfused = dense_backward(model.k_proj, c.fused, dkey, grads[k_idx], grads[k_idx + 1]);
  const std::vector<double> dfused_v = dense_backward(model.v_proj, c.fused, dv, grads[v_idx], grads[v_idx + 1]);
  for (std::size_t i = 0; i < d; ++i) dfused[i] += dfused_v[i];

  std::vector<double> dx = std::move(dfused);
  for (std::size_t l = n_kg; l-- > 0;) {
    if (l + 1 < n_kg) relu_backward(dx, c.keygen_pre[l]);
    dx = dense_backward(model.keygen.layers()[l], c.keygen_inputs[l], dx, grads[2 * l], grads[2 * l + 1]);
  }
}

namespace {

void add_into(Gradients& acc, const Gradients& g) {
  for (std::size_t p = 0; p < acc.size(); ++p) {
    auto& a = acc[p].values();
    const auto& b = g[p].values();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  }
}

}  // namespace

Gradients fusion_backward(const FusionModel& model, const std::vector<SampleCache>& caches,
                          std::span<const int> labels, std::size_t threads) {
  if (caches.size() != labels.size()) {
    throw Error(ErrorKind::LengthMismatch, "backward needs one label per cached sample");
  }
  const std::size_t n = caches.size();
  Gradients total = zero_gradients(model);
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));

  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      Gradients g = zero_gradients(model);
      sample_backward(model, caches[i], labels[i], g);
      add_into(total, g);
    }
    return total;
  }

  std::vector<Gradients> per_sample(n);
  {
    std::vector<std::jthread> workers;
    for (std::size_t t = 0; t < threads; ++t) {
      workers.emplace_back([&, t] {
        for (std::size_t i = t; i < n; i += threads) {
          per_sample[i] = zero_gradients(model);
          sample_backward(model, caches[i], labels[i], per_sample[i]);
        }
      });
    }
  }
  for (const auto& g : per_sample) add_into(total, g);
  return total;
}

}  // namespace ferfusion
