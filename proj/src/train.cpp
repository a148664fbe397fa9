#include "ferfusion/train.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "ferfusion/adam.hpp"
#include "ferfusion/error.hpp"
#include "ferfusion/io.hpp"

namespace ferfusion {

namespace {

constexpr std::uint64_t kShuffleStream = 0x9E3779B97F4A7C15ULL;

Tensor gather_rows(const Tensor& m, std::span<const std::size_t> idx) {
  Tensor out({idx.size(), m.dim(1)});
  for (std::size_t i = 0; i < idx.size(); ++i) std::ranges::copy(m.row(idx[i]), out.row(i).begin());
  return out;
}

}  // namespace

std::vector<double> train_fusion(FusionModel& model, const Tensor& main, const Tensor& aux,
                                 std::span<const int> labels, const TrainConfig& cfg) {
  const std::size_t n = labels.size();
  if (n == 0) throw Error(ErrorKind::EmptyDataset, "no paired samples to train on");
  if (main.rank() != 2 || main.dim(0) != n || aux.shape() != main.shape()) {
    throw Error(ErrorKind::ShapeMismatch, "training inputs must be N x d with N labels");
  }
  const std::size_t batch = std::clamp<std::size_t>(cfg.batch, 1, n);

  AdamState adam;
  adam.lr = cfg.lr;
  adam.beta1 = cfg.beta1;
  adam.beta2 = cfg.beta2;
  adam.eps = cfg.eps;

  std::vector<Tensor*> params;
  for (auto& p : model.parameters()) params.push_back(p.tensor);

  Rng order_rng(cfg.seed ^ kShuffleStream);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = n;  // forces a shuffle on the first batch

  std::vector<double> history;
  history.reserve(cfg.iters);
  for (std::size_t it = 0; it < cfg.iters; ++it) {
    if (cursor + batch > n) {
      order_rng.shuffle(std::span(order));
      cursor = 0;
    }
    const std::span<const std::size_t> idx(order.data() + cursor, batch);
    cursor += batch;

    const Tensor bm = gather_rows(main, idx);
    const Tensor ba = gather_rows(aux, idx);
    std::vector<int> by(batch);
    for (std::size_t i = 0; i < batch; ++i) by[i] = labels[idx[i]];

    const BatchForward fwd = fusion_forward(model, bm, ba);
    history.push_back(cross_entropy(fwd.logits, by));
    const Gradients grads = fusion_backward(model, fwd.caches, by, cfg.threads);
    adam_step(params, grads, adam);
  }
  return history;
}

TrainResult train_fusion(const PairedDataset& paired, const TrainConfig& cfg) {
  if (paired.size() == 0) throw Error(ErrorKind::EmptyDataset, "no paired samples to train on");
  ModelConfig mc = cfg.model;
  mc.dim = paired.dim();
  TrainResult result{FusionModel::init(mc, cfg.seed), {}};
  const auto labels = paired.labels();
  result.loss_history = train_fusion(result.model, paired.main_matrix(), paired.aux_matrix(), labels, cfg);
  return result;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  std::vector<int> out(logits.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto row = logits.row(i);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

std::string loss_history_csv(const std::vector<double>& losses) {
  std::ostringstream out;
  out << "iter,loss\n" << std::setprecision(17);
  for (std::size_t i = 0; i < losses.size(); ++i) out << i << ',' << losses[i] << '\n';
  return out.str();
}

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

constexpr char kCkptMagic[8] = {'F', 'E', 'R', 'F', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCkptVersion = 1;

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

struct Cursor {
  std::string_view bytes;
  std::string origin;
  std::size_t pos = 0;

  template <typename T>
  T get() {
    if (bytes.size() - pos < sizeof(T)) throw Error(ErrorKind::Parse, origin + ": truncated checkpoint");
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
};

}  // namespace

std::string serialize_checkpoint(const FusionModel& model) {
  model.validate();
  std::string out(kCkptMagic, sizeof(kCkptMagic));
  put<std::uint32_t>(out, kCkptVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.attn.d_model));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.attn.n_heads));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(model.keygen.strategy()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.keygen.layers().size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.classifier_hidden.out_dim()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.classifier_out.out_dim()));
  const auto params = model.parameters();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.tensor->rank()));
    for (std::size_t dim : p.tensor->shape()) put<std::uint64_t>(out, dim);
    for (double v : p.tensor->values()) put<double>(out, v);
  }
  return out;
}

FusionModel deserialize_checkpoint(std::string_view bytes, const std::string& origin) {
  if (bytes.size() < sizeof(kCkptMagic) || std::memcmp(bytes.data(), kCkptMagic, sizeof(kCkptMagic)) != 0) {
    throw Error(ErrorKind::Parse, origin + ": not a fusion checkpoint");
  }
  Cursor in{bytes, origin, sizeof(kCkptMagic)};
  if (in.get<std::uint32_t>() != kCkptVersion) throw Error(ErrorKind::Parse, origin + ": unsupported version");
  ModelConfig cfg;
  cfg.dim = in.get<std::uint32_t>();
  cfg.n_heads = in.get<std::uint32_t>();
  const auto strategy = in.get<std::uint8_t>();
  if (strategy > 3) throw Error(ErrorKind::Parse, origin + ": unknown key-generator strategy");
  cfg.strategy = static_cast<KeyStrategy>(strategy);
  const auto keygen_layers = in.get<std::uint32_t>();
  if (keygen_layers != keygen_layer_count(cfg.strategy)) {
    throw Error(ErrorKind::Parse, origin + ": key-generator layer count " + std::to_string(keygen_layers) +
                                      " does not match strategy " + std::string(to_string(cfg.strategy)));
  }
  cfg.hidden = in.get<std::uint32_t>();
  if (in.get<std::uint32_t>() != kNumClasses) throw Error(ErrorKind::Parse, origin + ": class count must be 8");

  FusionModel model;
  try {
    model = FusionModel::zeros(cfg);
  } catch (const Error& e) {
    throw Error(ErrorKind::Parse, origin + ": bad config block: " + e.what());
  }
  auto params = model.parameters();
  if (in.get<std::uint32_t>() != params.size()) throw Error(ErrorKind::Parse, origin + ": parameter count mismatch");
  for (auto& p : params) {
    const auto name_len = in.get<std::uint32_t>();
    if (in.bytes.size() - in.pos < name_len) throw Error(ErrorKind::Parse, origin + ": truncated checkpoint");
    const std::string name(in.bytes.substr(in.pos, name_len));
    in.pos += name_len;
    if (name != p.name) throw Error(ErrorKind::Parse, origin + ": expected tensor " + p.name + ", found " + name);
    const auto rank = in.get<std::uint32_t>();
    std::vector<std::size_t> shape(rank);
    for (auto& dim : shape) dim = static_cast<std::size_t>(in.get<std::uint64_t>());
    if (shape != p.tensor->shape()) throw Error(ErrorKind::Parse, origin + ": tensor " + name + " has the wrong shape");
    for (auto& v : p.tensor->values()) v = in.get<double>();
  }
  if (in.pos != bytes.size()) throw Error(ErrorKind::Parse, origin + ": trailing bytes after last tensor");
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const FusionModel& model) {
  write_file_atomic(path, serialize_checkpoint(model));
}

FusionModel load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path), path.string());
}

LinearClassifier LinearClassifier::train(const Tensor& x, std::span<const int> labels, std::size_t iters, double lr,
                                         std::uint64_t seed) {
  if (labels.empty()) throw Error(ErrorKind::EmptyDataset, "no samples to train on");
  if (x.rank() != 2 || x.dim(0) != labels.size()) throw Error(ErrorKind::ShapeMismatch, "need N x d inputs");
  LinearClassifier clf{DenseLayer(x.dim(1), kNumClasses)};
  Rng rng(seed);
  clf.layer.init_uniform(rng);

  AdamState adam;
  adam.lr = lr;
  std::vector<Tensor*> params{&clf.layer.weight, &clf.layer.bias};
  for (std::size_t it = 0; it < iters; ++it) {
    std::vector<Tensor> grads{Tensor(clf.layer.weight.shape()), Tensor(clf.layer.bias.shape())};
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto p = softmax(clf.layer.forward(x.row(i)));
      p[static_cast<std::size_t>(labels[i])] -= 1.0;
      for (std::size_t c = 0; c < kNumClasses; ++c) {
        grads[1][c] += p[c];
        auto row = grads[0].row(c);
        const auto xi = x.row(i);
        for (std::size_t j = 0; j < xi.size(); ++j) row[j] += p[c] * xi[j];
      }
    }
    adam_step(params, grads, adam);
  }
  return clf;
}

Tensor LinearClassifier::logits(const Tensor& x) const {
  Tensor out({x.dim(0), kNumClasses});
  for (std::size_t i = 0; i < x.dim(0); ++i) {
    const auto z = layer.forward(x.row(i));
    std::ranges::copy(z, out.row(i).begin());
  }
  return out;
}

}  // namespace ferfusion
