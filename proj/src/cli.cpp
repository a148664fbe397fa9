#include "ferfusion/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <unordered_map>

#include <CLI11.hpp>

#include "ferfusion/error.hpp"
#include "ferfusion/features.hpp"
#include "ferfusion/fusion.hpp"
#include "ferfusion/io.hpp"
#include "ferfusion/metrics.hpp"
#include "ferfusion/region.hpp"
#include "ferfusion/synthetic.hpp"
#include "ferfusion/train.hpp"

namespace ferfusion::cli {

namespace fs = std::filesystem;

namespace {

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw Error(ErrorKind::InvalidArgument, what + " path is required");
  if (!fs::is_regular_file(path)) throw Error(ErrorKind::Io, what + " not found: " + path);
}

void require_output(const std::string& path, const std::string& what) {
  if (path.empty()) throw Error(ErrorKind::InvalidArgument, what + " path is required");
}

ViewComposition parse_regions(const std::string& text) {
  std::vector<RegionSpec> specs;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) specs.push_back(RegionSpec::for_name(parse_region_name(item)));
  }
  return ViewComposition(std::move(specs));
}

int cmd_synthesize(const RunConfig& cfg) {
  require_file(cfg.manifest, "keypoint manifest");
  require_output(cfg.out_dir, "output directory");
  const ViewComposition comp = parse_regions(cfg.regions);
  const auto records = read_keypoint_manifest(cfg.manifest);
  const fs::path pairs_out = cfg.pairs.empty() ? fs::path(cfg.out_dir) / "pairs.csv" : fs::path(cfg.pairs);
  const auto stats = synthesize_views(records, comp, cfg.out_dir, pairs_out);
  for (const auto& line : stats.log) std::cerr << line << '\n';
  std::cout << "records " << stats.total << "\nwritten " << stats.written << "\nfiltered_keypoints "
            << stats.filtered_keypoints << "\nfailed_decode " << stats.failed_decode << "\npairs " << pairs_out.string()
            << '\n';
  return kSuccess;
}

int cmd_encode(const RunConfig& cfg) {
  require_file(cfg.pairs, "pairs manifest");
  require_output(cfg.out_main, "main embedding output");
  require_output(cfg.out_aux, "auxiliary embedding output");
  std::vector<EmbeddingRecord> main, aux;
  std::optional<ToyEncoder> enc_main, enc_aux;
  std::istringstream lines(read_file(cfg.pairs));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_csv_line(line);
    if (line_no == 1 && f.front() == "sample_id") continue;
    if (f.size() != 6) throw Error(ErrorKind::Parse, cfg.pairs + ":" + std::to_string(line_no) + ": expected 6 fields");
    const ImageBuffer m = resize_bilinear(read_pnm(f[3]), cfg.input_size, cfg.input_size);
    const ImageBuffer a = resize_bilinear(read_pnm(f[4]), cfg.input_size, cfg.input_size);
    if (!enc_main) {
      enc_main = ToyEncoder::random(cfg.dim, m.data().size(), cfg.seed);
      enc_aux = ToyEncoder::random(cfg.dim, a.data().size(), cfg.seed + 1);
    }
    auto to_float = [](const std::vector<double>& v) { return std::vector<float>(v.begin(), v.end()); };
    EmbeddingRecord rec{f[0], f[1], std::stoull(f[2]), std::stoi(f[5]), {}};
    EmbeddingRecord rec_aux = rec;
    rec.vector = to_float(enc_main->encode(m));
    rec_aux.vector = to_float(enc_aux->encode(a));
    main.push_back(std::move(rec));
    aux.push_back(std::move(rec_aux));
  }
  const std::size_t n = main.size();
  save_embeddings(cfg.out_main, EmbeddingDataset(std::move(main)));
  save_embeddings(cfg.out_aux, EmbeddingDataset(std::move(aux)));
  std::cout << "encoded " << n << '\n';
  return kSuccess;
}

int cmd_generate(const RunConfig& cfg) {
  require_output(cfg.out_main, "main embedding output");
  require_output(cfg.out_aux, "auxiliary embedding output");
  TwoViewSpec spec;
  spec.dim = cfg.dim;
  spec.basis_seed = cfg.basis_seed;
  const auto data = generate_two_view(spec, cfg.n_per_class, cfg.seed);
  save_embeddings(cfg.out_main, data.main);
  save_embeddings(cfg.out_aux, data.aux);
  std::cout << "samples " << data.main.size() << "\nsingle_view_bayes " << spec.single_view_bayes_accuracy()
            << "\njoint_bayes " << spec.joint_bayes_accuracy() << '\n';
  return kSuccess;
}

int cmd_sample(const RunConfig& cfg) {
  require_file(cfg.embeddings, "embedding file");
  require_output(cfg.out, "output");
  const auto ds = load_embeddings(cfg.embeddings);
  const auto sampled = uniform_class_sample(ds, cfg.n_per_class, cfg.seed);
  save_embeddings(cfg.out, sampled);
  std::cout << "sampled " << sampled.size() << " of " << ds.size() << '\n';
  return kSuccess;
}

PairedDataset load_pair(const RunConfig& cfg) {
  require_file(cfg.main_embeddings, "main embedding file");
  require_file(cfg.aux_embeddings, "auxiliary embedding file");
  return pair_views(load_embeddings(cfg.main_embeddings), load_embeddings(cfg.aux_embeddings));
}

int cmd_train_fusion(const RunConfig& cfg) {
  require_output(cfg.checkpoint, "checkpoint");
  const PairedDataset paired = load_pair(cfg);
  std::cerr << pairing_report(paired);
  if (paired.size() == 0) throw Error(ErrorKind::EmptyDataset, "no sample ids shared by the two views");

  TrainConfig tc;
  tc.model.n_heads = cfg.n_heads;
  tc.model.hidden = cfg.hidden;
  tc.model.strategy = parse_key_strategy(cfg.strategy);
  tc.iters = cfg.iters;
  tc.batch = cfg.batch;
  tc.lr = cfg.lr;
  tc.seed = cfg.seed;
  tc.threads = cfg.threads;
  const TrainResult result = train_fusion(paired, tc);

  save_checkpoint(cfg.checkpoint, result.model);
  const std::string loss_path = cfg.loss_csv.empty() ? cfg.checkpoint + ".loss.csv" : cfg.loss_csv;
  write_file_atomic(loss_path, loss_history_csv(result.loss_history));
  std::cout << "strategy " << to_string(tc.model.strategy) << "\nkeygen_layers "
            << result.model.keygen.layers().size() << "\nparameters " << result.model.parameter_count()
            << "\nfinal_loss " << (result.loss_history.empty() ? 0.0 : result.loss_history.back())
            << "\ncheckpoint " << cfg.checkpoint << "\nloss_csv " << loss_path << '\n';
  return kSuccess;
}

void write_reports(const RunConfig& cfg, const EvalReport& report) {
  std::cout << report_text(report);
  if (!cfg.report.empty()) write_file_atomic(cfg.report, report_text(report));
  if (!cfg.report_csv.empty()) write_file_atomic(cfg.report_csv, report_csv(report));
}

int cmd_evaluate(const RunConfig& cfg) {
  require_file(cfg.checkpoint, "checkpoint");
  const FusionModel model = load_checkpoint(cfg.checkpoint);
  const PairedDataset paired = load_pair(cfg);
  if (paired.size() == 0) throw Error(ErrorKind::EmptyDataset, "no sample ids shared by the two views");
  if (paired.dim() != model.attn.d_model) {
    throw Error(ErrorKind::DimensionMismatch, "checkpoint expects dimension " + std::to_string(model.attn.d_model) +
                                                  ", embeddings have " + std::to_string(paired.dim()));
  }
  const Tensor logits = predict_logits(model, paired.main_matrix(), paired.aux_matrix());
  const auto pred = argmax_rows(logits);

  // group by video in first-seen order, frames sorted within each video
  std::vector<PredictionSequence> sequences;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < paired.size(); ++i) {
    const auto& rec = paired.main[i];
    auto [it, inserted] = index.emplace(rec.video_id, sequences.size());
    if (inserted) sequences.push_back({rec.video_id, {}});
    FramePrediction f{rec.frame_index, pred[i], rec.label, std::array<double, kNumClasses>{}};
    std::ranges::copy(logits.row(i), f.logits->begin());
    sequences[it->second].frames.push_back(f);
  }
  for (auto& s : sequences) {
    std::ranges::stable_sort(s.frames, {}, &FramePrediction::frame_index);
    s.validate();
  }
  if (!cfg.predictions.empty()) write_file_atomic(cfg.predictions, predictions_csv(sequences));
  write_reports(cfg, evaluate_labels(pred, paired.labels()));
  return kSuccess;
}

int cmd_smooth(const RunConfig& cfg) {
  require_file(cfg.predictions, "predictions file");
  require_output(cfg.out, "output");
  const bool logits = cfg.smooth_mode == "logits";
  if (!logits && cfg.smooth_mode != "majority") {
    throw Error(ErrorKind::InvalidArgument, "smooth mode must be 'majority' or 'logits'");
  }
  auto sequences = read_predictions(cfg.predictions);
  for (auto& s : sequences) {
    s = logits ? sliding_window_smooth_logits(s, cfg.window) : sliding_window_smooth(s, cfg.window);
  }
  write_file_atomic(cfg.out, predictions_csv(sequences));
  std::cout << "videos " << sequences.size() << "\nwindow " << cfg.window << "\nmode " << cfg.smooth_mode << '\n';
  return kSuccess;
}

int cmd_report(const RunConfig& cfg) {
  require_file(cfg.predictions, "predictions file");
  write_reports(cfg, evaluate_sequences(read_predictions(cfg.predictions)));
  return kSuccess;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Two-view fusion attention pipeline for 8-class facial expression recognition"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "INI/TOML config; keys go under a [subcommand] section; flags override it");

  RunConfig cfg;
  auto seed = [&](CLI::App* s) { s->add_option("--seed", cfg.seed, "Random seed")->capture_default_str(); };
  auto threads = [&](CLI::App* s) {
    s->add_option("--threads", cfg.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  };
  auto pair_inputs = [&](CLI::App* s) {
    s->add_option("--main", cfg.main_embeddings, "Main-view embedding file (binary or CSV)");
    s->add_option("--aux", cfg.aux_embeddings, "Auxiliary-view embedding file (binary or CSV)");
  };
  auto report_outputs = [&](CLI::App* s) {
    s->add_option("--report", cfg.report, "Text report output");
    s->add_option("--report-csv", cfg.report_csv, "CSV report output (Accuracy,Neutral..Other,MacroF1)");
  };

  auto* synth = app.add_subcommand("synthesize", "Filter faces by keypoints and compose auxiliary views");
  synth->add_option("--manifest", cfg.manifest, "Keypoint manifest (JSON lines)");
  synth->add_option("--out-dir", cfg.out_dir, "Directory for synthesized images");
  synth->add_option("--pairs", cfg.pairs, "Paired manifest output (default <out-dir>/pairs.csv)");
  synth->add_option("--regions", cfg.regions, "Comma-separated regions to stack: eye, mouth, nose")
      ->capture_default_str();

  auto* encode = app.add_subcommand("encode", "Embed synthesized image pairs with seeded linear encoders");
  encode->add_option("--pairs", cfg.pairs, "Paired manifest from synthesize");
  encode->add_option("--out-main", cfg.out_main, "Main-view embedding output");
  encode->add_option("--out-aux", cfg.out_aux, "Auxiliary-view embedding output");
  encode->add_option("--dim", cfg.dim, "Embedding dimension")->capture_default_str();
  encode->add_option("--input-size", cfg.input_size, "Images are resized to this square size first")
      ->capture_default_str();
  seed(encode);

  auto* generate = app.add_subcommand("generate", "Write a synthetic two-view 8-class embedding dataset");
  generate->add_option("--out-main", cfg.out_main, "Main-view embedding output");
  generate->add_option("--out-aux", cfg.out_aux, "Auxiliary-view embedding output");
  generate->add_option("--n-per-class", cfg.n_per_class, "Samples per class")->capture_default_str();
  generate->add_option("--dim", cfg.dim, "Embedding dimension")->capture_default_str();
  generate->add_option("--basis-seed", cfg.basis_seed, "Seed of the per-view rotations (keep fixed across splits)")
      ->capture_default_str();
  seed(generate);

  auto* sample = app.add_subcommand("sample", "Draw a class-balanced subset of an embedding file");
  sample->add_option("--embeddings", cfg.embeddings, "Input embedding file");
  sample->add_option("--out", cfg.out, "Output embedding file");
  sample->add_option("--n-per-class", cfg.n_per_class, "Records drawn per class")->capture_default_str();
  seed(sample);

  auto* train = app.add_subcommand("train-fusion", "Train the fusion attention model on paired embeddings");
  pair_inputs(train);
  train->add_option("--checkpoint", cfg.checkpoint, "Checkpoint output");
  train->add_option("--loss-csv", cfg.loss_csv, "Loss history output (default <checkpoint>.loss.csv)");
  train->add_option("--strategy", cfg.strategy, "Key generator: mean, concat, updown-mean, updown-concat")
      ->capture_default_str();
  train->add_option("--heads", cfg.n_heads, "Attention heads; must divide the embedding dimension")
      ->capture_default_str();
  train->add_option("--hidden", cfg.hidden, "Classifier hidden width (0 = embedding dimension)")
      ->capture_default_str();
  train->add_option("--lr", cfg.lr, "Adam learning rate")->capture_default_str();
  train->add_option("--iters", cfg.iters, "Training iterations")->capture_default_str();
  train->add_option("--batch", cfg.batch, "Batch size (capped at dataset size)")->capture_default_str();
  seed(train);
  threads(train);

  auto* evaluate = app.add_subcommand("evaluate", "Predict with a checkpoint and score the predictions");
  evaluate->add_option("--checkpoint", cfg.checkpoint, "Checkpoint to load");
  pair_inputs(evaluate);
  evaluate->add_option("--predictions", cfg.predictions, "Predictions CSV output");
  report_outputs(evaluate);

  auto* smooth = app.add_subcommand("smooth", "Sliding-window smoothing of per-frame predictions");
  smooth->add_option("--predictions", cfg.predictions, "Predictions CSV input");
  smooth->add_option("--out", cfg.out, "Smoothed predictions CSV output");
  smooth->add_option("--window", cfg.window, "Window size in frames")->capture_default_str()->check(CLI::PositiveNumber);
  smooth->add_option("--mode", cfg.smooth_mode, "majority (label vote) or logits (mean logits)")
      ->capture_default_str();

  auto* report = app.add_subcommand("report", "Score a predictions CSV that carries ground truth");
  report->add_option("--predictions", cfg.predictions, "Predictions CSV input");
  report_outputs(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kSuccess : kUsageError;
  }

  try {
    if (*synth) return cmd_synthesize(cfg);
    if (*encode) return cmd_encode(cfg);
    if (*generate) return cmd_generate(cfg);
    if (*sample) return cmd_sample(cfg);
    if (*train) return cmd_train_fusion(cfg);
    if (*evaluate) return cmd_evaluate(cfg);
    if (*smooth) return cmd_smooth(cfg);
    if (*report) return cmd_report(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDomainError;
  }
  return kUsageError;
}

}  // namespace ferfusion::cli
