#include "ferfusion/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "ferfusion/error.hpp"
#include "ferfusion/io.hpp"

namespace ferfusion {

namespace {

void check_label(int label) {
  if (label < 0 || label >= static_cast<int>(kNumClasses)) {
    throw Error(ErrorKind::InvalidArgument, "label " + std::to_string(label) + " outside 0..7");
  }
}

}  // namespace

ConfusionCounts confusion_counts(std::span<const int> pred, std::span<const int> gt) {
  if (pred.size() != gt.size()) {
    throw Error(ErrorKind::LengthMismatch, std::to_string(pred.size()) + " predictions for " +
                                               std::to_string(gt.size()) + " labels");
  }
  ConfusionCounts cc;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    check_label(pred[i]);
    check_label(gt[i]);
    const auto p = static_cast<std::size_t>(pred[i]);
    const auto g = static_cast<std::size_t>(gt[i]);
    if (p == g) {
      ++cc.tp[p];
    } else {
      ++cc.fp[p];
      ++cc.fn[g];
    }
  }
  return cc;
}

std::array<double, kNumClasses> f1_per_class(const ConfusionCounts& cc) {
  std::array<double, kNumClasses> f1{};
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const std::size_t denom = 2 * cc.tp[c] + cc.fp[c] + cc.fn[c];
    f1[c] = denom == 0 ? 0.0 : 2.0 * static_cast<double>(cc.tp[c]) / static_cast<double>(denom);
  }
  return f1;
}

double macro_f1(std::span<const double> f1s) {
  if (f1s.size() != kNumClasses) throw Error(ErrorKind::LengthMismatch, "macro F1 needs exactly 8 class scores");
  return std::accumulate(f1s.begin(), f1s.end(), 0.0) / static_cast<double>(kNumClasses);
}

double accuracy(std::span<const int> pred, std::span<const int> gt) {
  if (pred.size() != gt.size()) throw Error(ErrorKind::LengthMismatch, "prediction and label counts differ");
  if (pred.empty()) throw Error(ErrorKind::EmptyInput, "accuracy of an empty sequence");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == gt[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

void PredictionSequence::validate() const {
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (frames[i].frame_index <= frames[i - 1].frame_index) {
      throw Error(ErrorKind::InvalidArgument, "video " + video_id + ": frame " +
                                                  std::to_string(frames[i].frame_index) + " follows frame " +
                                                  std::to_string(frames[i - 1].frame_index) +
                                                  " (frames must strictly increase)");
    }
  }
  for (const auto& f : frames) check_label(f.pred);
}

namespace {

struct Window {
  std::size_t first, last;  // inclusive
};

Window window_at(std::size_t i, std::size_t n, std::size_t k) {
  const std::size_t back = k / 2;
  const std::size_t ahead = (k + 1) / 2 - 1;
  return {i >= back ? i - back : 0, std::min(n - 1, i + ahead)};
}

}  // namespace

PredictionSequence sliding_window_smooth(const PredictionSequence& seq, std::size_t k) {
  if (k == 0) throw Error(ErrorKind::InvalidArgument, "window size must be >= 1");
  seq.validate();
  PredictionSequence out = seq;
  const std::size_t n = seq.frames.size();
  if (n == 0) return out;

  // running histogram over the current window; both ends only move forward
  std::array<std::size_t, kNumClasses> counts{};
  std::size_t lo = 0, hi = 0;  // window is [lo, hi)
  for (std::size_t i = 0; i < n; ++i) {
    const Window w = window_at(i, n, k);
    while (hi <= w.last) ++counts[static_cast<std::size_t>(seq.frames[hi++].pred)];
    while (lo < w.first) --counts[static_cast<std::size_t>(seq.frames[lo++].pred)];

    const auto own = static_cast<std::size_t>(seq.frames[i].pred);
    const std::size_t best = *std::max_element(counts.begin(), counts.end());
    std::size_t label = own;
    if (counts[own] != best) {
      label = static_cast<std::size_t>(std::find(counts.begin(), counts.end(), best) - counts.begin());
    }
    out.frames[i].pred = static_cast<int>(label);
  }
  return out;
}

PredictionSequence sliding_window_smooth_logits(const PredictionSequence& seq, std::size_t k) {
  if (k == 0) throw Error(ErrorKind::InvalidArgument, "window size must be >= 1");
  seq.validate();
  PredictionSequence out = seq;
  const std::size_t n = seq.frames.size();
  for (const auto& f : seq.frames) {
    if (!f.logits) throw Error(ErrorKind::InvalidArgument, "video " + seq.video_id + ": logits smoothing needs logits on every frame");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Window w = window_at(i, n, k);
    std::array<double, kNumClasses> mean{};
    for (std::size_t j = w.first; j <= w.last; ++j) {
      for (std::size_t c = 0; c < kNumClasses; ++c) mean[c] += (*seq.frames[j].logits)[c];
    }
    const double count = static_cast<double>(w.last - w.first + 1);
    for (auto& v : mean) v /= count;
    out.frames[i].logits = mean;
    out.frames[i].pred = static_cast<int>(std::max_element(mean.begin(), mean.end()) - mean.begin());
  }
  return out;
}

namespace {

template <typename T>
T parse_int(const std::string& field, const std::string& where) {
  T value{};
  const char* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (field.empty() || ec != std::errc() || ptr != end) {
    throw Error(ErrorKind::Parse, where + ": bad integer '" + field + "'");
  }
  return value;
}

double parse_double(const std::string& field, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (field.empty() || end != field.c_str() + field.size()) {
    throw Error(ErrorKind::Parse, where + ": bad number '" + field + "'");
  }
  return v;
}

}  // namespace

std::vector<PredictionSequence> read_predictions(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<PredictionSequence> sequences;
  std::unordered_map<std::string, std::size_t> index;
  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_csv_line(line);
    if (line_no == 1 && fields.front() == "video_id") continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() < 3) throw Error(ErrorKind::Parse, where + ": expected video_id,frame_index,pred[,gt,logits]");
    FramePrediction f;
    f.frame_index = parse_int<std::uint64_t>(fields[1], where);
    f.pred = parse_int<int>(fields[2], where);
    if (fields.size() > 3 && !fields[3].empty()) f.gt = parse_int<int>(fields[3], where);
    if (fields.size() > 4) {
      const bool any = std::any_of(fields.begin() + 4, fields.end(), [](const auto& s) { return !s.empty(); });
      if (any) {
        if (fields.size() != 4 + kNumClasses) throw Error(ErrorKind::Parse, where + ": expected 8 logit columns");
        std::array<double, kNumClasses> z{};
        for (std::size_t c = 0; c < kNumClasses; ++c) z[c] = parse_double(fields[4 + c], where);
        f.logits = z;
      }
    }
    if (f.pred < 0 || f.pred >= static_cast<int>(kNumClasses) ||
        (f.gt && (*f.gt < 0 || *f.gt >= static_cast<int>(kNumClasses)))) {
      throw Error(ErrorKind::Parse, where + ": label outside 0..7");
    }
    auto [it, inserted] = index.emplace(fields[0], sequences.size());
    if (inserted) sequences.push_back({fields[0], {}});
    sequences[it->second].frames.push_back(f);
  }
  for (const auto& s : sequences) {
    try {
      s.validate();
    } catch (const Error& e) {
      throw Error(ErrorKind::InvalidArgument, path.string() + ": " + e.what());
    }
  }
  return sequences;
}

std::string predictions_csv(const std::vector<PredictionSequence>& sequences) {
  std::ostringstream out;
  out << "video_id,frame_index,pred,gt";
  for (std::size_t c = 0; c < kNumClasses; ++c) out << ",logit" << c;
  out << '\n' << std::setprecision(17);
  for (const auto& s : sequences) {
    for (const auto& f : s.frames) {
      out << s.video_id << ',' << f.frame_index << ',' << f.pred << ',';
      if (f.gt) out << *f.gt;
      for (std::size_t c = 0; c < kNumClasses; ++c) {
        out << ',';
        if (f.logits) out << (*f.logits)[c];
      }
      out << '\n';
    }
  }
  return out.str();
}

EvalReport evaluate_labels(std::span<const int> pred, std::span<const int> gt) {
  EvalReport r;
  r.samples = pred.size();
  r.accuracy = accuracy(pred, gt);
  r.f1 = f1_per_class(confusion_counts(pred, gt));
  r.macro_f1 = macro_f1(r.f1);
  return r;
}

EvalReport evaluate_sequences(const std::vector<PredictionSequence>& sequences) {
  std::vector<int> pred, gt;
  for (const auto& s : sequences) {
    for (const auto& f : s.frames) {
      if (!f.gt) continue;
      pred.push_back(f.pred);
      gt.push_back(*f.gt);
    }
  }
  return evaluate_labels(pred, gt);
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "Accuracy";
  for (auto name : kClassNames) out << ',' << name;
  out << ",MacroF1\n" << std::fixed << std::setprecision(6) << report.accuracy;
  for (double f : report.f1) out << ',' << f;
  out << ',' << report.macro_f1 << '\n';
  return out.str();
}

std::string report_text(const EvalReport& report) {
  std::ostringstream out;
  out << "samples   " << report.samples << '\n' << std::fixed << std::setprecision(3);
  out << std::left << std::setw(10) << "Accuracy" << report.accuracy << '\n';
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    out << std::left << std::setw(10) << kClassNames[c] << report.f1[c] << '\n';
  }
  out << std::left << std::setw(10) << "MacroF1" << report.macro_f1 << '\n';
  return out.str();
}

}  // namespace ferfusion
