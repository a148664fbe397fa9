#include "ferfusion/synthetic.hpp"

#include <cmath>
#include <numbers>

#include "ferfusion/error.hpp"
#include "ferfusion/rng.hpp"
#include "ferfusion/tensor.hpp"

namespace ferfusion {

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Gram-Schmidt on a Gaussian matrix.
Tensor random_rotation(std::size_t d, Rng& rng) {
  Tensor q({d, d});
  for (auto& v : q.values()) v = rng.gaussian();
  for (std::size_t i = 0; i < d; ++i) {
    auto ri = q.row(i);
    for (std::size_t j = 0; j < i; ++j) {
      const auto rj = q.row(j);
      double dot = 0.0;
      for (std::size_t t = 0; t < d; ++t) dot += ri[t] * rj[t];
      for (std::size_t t = 0; t < d; ++t) ri[t] -= dot * rj[t];
    }
    double norm = 0.0;
    for (double v : ri) norm += v * v;
    norm = std::sqrt(norm);
    for (auto& v : ri) v /= norm;
  }
  return q;
}

}  // namespace

double TwoViewSpec::single_view_bayes_accuracy() const {
  return normal_cdf(mu_strong) * normal_cdf(mu_weak) * normal_cdf(mu_shared);
}

double TwoViewSpec::joint_bayes_accuracy() const {
  const double pair = normal_cdf(std::hypot(mu_strong, mu_weak));
  return pair * pair * normal_cdf(std::numbers::sqrt2 * mu_shared);
}

TwoViewData generate_two_view(const TwoViewSpec& spec, std::size_t n_per_class, std::uint64_t seed,
                              const std::string& id_prefix) {
  if (spec.dim < 3) throw Error(ErrorKind::InvalidArgument, "two-view generator needs dim >= 3");
  if (spec.run_length == 0 || spec.runs_per_video == 0) {
    throw Error(ErrorKind::InvalidArgument, "run_length and runs_per_video must be >= 1");
  }
  Rng basis_rng(spec.basis_seed);
  const Tensor rot_main = random_rotation(spec.dim, basis_rng);
  const Tensor rot_aux = random_rotation(spec.dim, basis_rng);
  Rng rng(seed);

  // label runs: every class contributes ceil(n / run_length) runs
  struct Run {
    int label;
    std::size_t length;
  };
  std::vector<Run> runs;
  for (int c = 0; c < static_cast<int>(kNumClasses); ++c) {
    for (std::size_t left = n_per_class; left > 0;) {
      const std::size_t len = std::min(left, spec.run_length);
      runs.push_back({c, len});
      left -= len;
    }
  }
  rng.shuffle(std::span(runs));

  auto view_vector = [&](const Tensor& rot, int label, double mu0, double mu1) {
    std::vector<double> latent(spec.dim);
    const double mus[3] = {mu0, mu1, spec.mu_shared};
    for (std::size_t b = 0; b < 3; ++b) {
      const double sign = ((label >> b) & 1) ? 1.0 : -1.0;
      latent[b] = sign * mus[b] + rng.gaussian();
    }
    for (std::size_t t = 3; t < spec.dim; ++t) latent[t] = rng.gaussian();
    std::vector<float> out(spec.dim);
    for (std::size_t i = 0; i < spec.dim; ++i) {
      double acc = 0.0;
      for (std::size_t t = 0; t < spec.dim; ++t) acc += rot(i, t) * latent[t];
      out[i] = static_cast<float>(acc);
    }
    return out;
  };

  std::vector<EmbeddingRecord> main, aux;
  std::size_t sample = 0;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const std::string video = id_prefix + "v" + std::to_string(r / spec.runs_per_video);
    std::uint64_t frame = (r % spec.runs_per_video) * spec.run_length;
    for (std::size_t i = 0; i < runs[r].length; ++i, ++frame, ++sample) {
      const int label = runs[r].label;
      EmbeddingRecord m{id_prefix + std::to_string(sample), video, frame, label, {}};
      EmbeddingRecord a = m;
      m.vector = view_vector(rot_main, label, spec.mu_strong, spec.mu_weak);
      a.vector = view_vector(rot_aux, label, spec.mu_weak, spec.mu_strong);
      main.push_back(std::move(m));
      aux.push_back(std::move(a));
    }
  }
  return {EmbeddingDataset(std::move(main)), EmbeddingDataset(std::move(aux))};
}

}  // namespace ferfusion
