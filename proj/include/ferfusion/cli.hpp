#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace ferfusion::cli {

enum ExitCode : int { kSuccess = 0, kDomainError = 1, kUsageError = 2 };

// Every key the subcommands understand. In a config file, keys live under a
// section named after the subcommand, e.g. [train-fusion] lr = 0.01.
struct RunConfig {
  std::uint64_t seed = 0;
  std::uint64_t basis_seed = 1;
  std::size_t dim = 16;
  std::size_t n_heads = 2;
  std::size_t hidden = 0;
  std::string strategy = "concat";
  double lr = 1e-4;
  std::size_t iters = 100;
  std::size_t batch = 512;
  std::size_t window = 50;
  std::string smooth_mode = "majority";
  std::size_t threads = 1;
  std::size_t n_per_class = 0;
  std::size_t input_size = 32;
  std::string regions = "eye,mouth";

  std::string manifest;
  std::string pairs;
  std::string out_dir;
  std::string embeddings;
  std::string main_embeddings;
  std::string aux_embeddings;
  std::string out;
  std::string out_main;
  std::string out_aux;
  std::string checkpoint;
  std::string loss_csv;
  std::string predictions;
  std::string report;
  std::string report_csv;
};

/// Parses argv and runs one subcommand. Returns an ExitCode.
int run(int argc, const char* const* argv);

}  // namespace ferfusion::cli
