#include "ferfusion/features.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "ferfusion/error.hpp"
#include "ferfusion/io.hpp"
#include "ferfusion/rng.hpp"

namespace ferfusion {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

EmbeddingDataset::EmbeddingDataset(std::vector<EmbeddingRecord> records) : records_(std::move(records)) {
  if (records_.empty()) return;
  dim_ = records_.front().vector.size();
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.vector.size() != dim_) {
      throw Error(ErrorKind::DimensionMismatch, "record " + r.sample_id + " has dimension " +
                                                    std::to_string(r.vector.size()) + ", expected " +
                                                    std::to_string(dim_));
    }
    if (r.label < 0 || r.label >= static_cast<int>(kNumClasses)) {
      throw Error(ErrorKind::InvalidArgument, "record " + r.sample_id + " has label outside 0..7");
    }
  }
}

std::array<std::size_t, kNumClasses> EmbeddingDataset::class_histogram() const {
  std::array<std::size_t, kNumClasses> h{};
  for (const auto& r : records_) ++h[static_cast<std::size_t>(r.label)];
  return h;
}

namespace {

constexpr char kMagic[8] = {'F', 'E', 'R', 'E', 'M', 'B', '\0', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  Reader(std::string_view bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorKind::Parse, origin_ + ": truncated embedding file");
  }

  std::string_view bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

EmbeddingDataset parse_binary(std::string_view bytes, const std::string& origin) {
  Reader r(bytes.substr(sizeof(kMagic)), origin);
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw Error(ErrorKind::Parse, origin + ": unsupported embedding version");
  const auto dim = r.get<std::uint32_t>();
  const auto count = r.get<std::uint64_t>();
  std::vector<EmbeddingRecord> records;
  for (std::uint64_t i = 0; i < count; ++i) {
    EmbeddingRecord rec;
    rec.sample_id = r.get_string();
    rec.video_id = r.get_string();
    rec.frame_index = r.get<std::uint64_t>();
    rec.label = r.get<std::uint8_t>();
    rec.vector.resize(dim);
    for (auto& v : rec.vector) v = r.get<float>();
    records.push_back(std::move(rec));
  }
  if (!r.at_end()) throw Error(ErrorKind::Parse, origin + ": trailing bytes after last record");
  return EmbeddingDataset(std::move(records));
}

template <typename T>
T parse_number(const std::string& field, const std::string& where) {
  T value{};
  const char* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end) throw Error(ErrorKind::Parse, where + ": bad number '" + field + "'");
  return value;
}

float parse_float(const std::string& field, const std::string& where) {
  // from_chars for floating point is not available in every libstdc++ we target
  char* end = nullptr;
  const float v = std::strtof(field.c_str(), &end);
  if (field.empty() || end != field.c_str() + field.size()) {
    throw Error(ErrorKind::Parse, where + ": bad number '" + field + "'");
  }
  return v;
}

EmbeddingDataset parse_csv(const std::string& text, const std::string& origin) {
  std::vector<EmbeddingRecord> records;
  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = split_csv_line(line);
    if (line_no == 1 && fields.front() == "sample_id") continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    if (fields.size() < 5) throw Error(ErrorKind::Parse, where + ": expected at least 5 fields");
    EmbeddingRecord rec;
    rec.sample_id = fields[0];
    rec.video_id = fields[1];
    rec.frame_index = parse_number<std::uint64_t>(fields[2], where);
    rec.label = parse_number<int>(fields[3], where);
    if (rec.label < 0 || rec.label >= static_cast<int>(kNumClasses)) {
      throw Error(ErrorKind::Parse, where + ": label outside 0..7");
    }
    for (std::size_t i = 4; i < fields.size(); ++i) rec.vector.push_back(parse_float(fields[i], where));
    records.push_back(std::move(rec));
  }
  return EmbeddingDataset(std::move(records));
}

}  // namespace

void save_embeddings(const std::filesystem::path& path, const EmbeddingDataset& ds) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.dim()));
  put<std::uint64_t>(out, ds.size());
  for (const auto& rec : ds.records()) {
    put_string(out, rec.sample_id);
    put_string(out, rec.video_id);
    put<std::uint64_t>(out, rec.frame_index);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(rec.label));
    for (float v : rec.vector) put<float>(out, v);
  }
  write_file_atomic(path, out);
}

void save_embeddings_csv(const std::filesystem::path& path, const EmbeddingDataset& ds) {
  std::ostringstream out;
  out << "sample_id,video_id,frame_index,label";
  for (std::size_t i = 0; i < ds.dim(); ++i) out << ",v" << i;
  out << '\n' << std::setprecision(9);
  for (const auto& rec : ds.records()) {
    out << rec.sample_id << ',' << rec.video_id << ',' << rec.frame_index << ',' << rec.label;
    for (float v : rec.vector) out << ',' << v;
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

EmbeddingDataset load_embeddings(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() >= sizeof(kMagic) && std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) == 0) {
    return parse_binary(bytes, path.string());
  }
  return parse_csv(bytes, path.string());
}

EmbeddingDataset uniform_class_sample(const EmbeddingDataset& ds, std::size_t n_per_class, std::uint64_t seed) {
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds[i].label)].push_back(i);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (by_class[c].size() < n_per_class) {
      throw Error(ErrorKind::InsufficientClass, "class " + std::to_string(c) + " (" + std::string(kClassNames[c]) +
                                                    ") has " + std::to_string(by_class[c].size()) +
                                                    " records, need " + std::to_string(n_per_class));
    }
  }

  Rng rng(seed);
  std::vector<std::size_t> chosen;
  chosen.reserve(n_per_class * kNumClasses);
  for (auto& pool : by_class) {
    // partial Fisher-Yates: the first n slots end up a uniform draw
    for (std::size_t i = 0; i < n_per_class; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
      chosen.push_back(pool[i]);
    }
  }
  rng.shuffle(std::span(chosen));

  std::vector<EmbeddingRecord> out;
  out.reserve(chosen.size());
  for (std::size_t i : chosen) out.push_back(ds[i]);
  return EmbeddingDataset(std::move(out));
}

std::vector<int> PairedDataset::labels() const {
  std::vector<int> out;
  out.reserve(main.size());
  for (const auto& r : main) out.push_back(r.label);
  return out;
}

namespace {

Tensor to_matrix(const std::vector<EmbeddingRecord>& records) {
  const std::size_t d = records.empty() ? 0 : records.front().vector.size();
  Tensor m({records.size(), d});
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) m(i, j) = records[i].vector[j];
  }
  return m;
}

}  // namespace

Tensor PairedDataset::main_matrix() const { return to_matrix(main); }
Tensor PairedDataset::aux_matrix() const { return to_matrix(aux); }

PairedDataset pair_views(const EmbeddingDataset& main, const EmbeddingDataset& aux) {
  if (!main.empty() && !aux.empty() && main.dim() != aux.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "main view has dimension " + std::to_string(main.dim()) +
                                                  ", auxiliary view has " + std::to_string(aux.dim()));
  }
  std::unordered_map<std::string, std::size_t> aux_index;
  for (std::size_t i = 0; i < aux.size(); ++i) {
    if (!aux_index.emplace(aux[i].sample_id, i).second) {
      throw Error(ErrorKind::InvalidArgument, "duplicate sample_id " + aux[i].sample_id + " in auxiliary view");
    }
  }

  PairedDataset out;
  std::unordered_set<std::string> seen;
  for (const auto& rec : main.records()) {
    if (!seen.insert(rec.sample_id).second) {
      throw Error(ErrorKind::InvalidArgument, "duplicate sample_id " + rec.sample_id + " in main view");
    }
    const auto it = aux_index.find(rec.sample_id);
    if (it == aux_index.end()) {
      ++out.dropped_main;
      continue;
    }
    const auto& other = aux[it->second];
    if (other.label != rec.label) {
      throw Error(ErrorKind::LabelConflict, "sample " + rec.sample_id + " labelled " + std::to_string(rec.label) +
                                                " in main view but " + std::to_string(other.label) +
                                                " in auxiliary view");
    }
    out.main.push_back(rec);
    out.aux.push_back(other);
  }
  out.dropped_aux = aux.size() - out.aux.size();
  return out;
}

std::string pairing_report(const PairedDataset& paired) {
  std::ostringstream out;
  out << "paired " << paired.size() << "\n"
      << "dropped_main_only " << paired.dropped_main << "\n"
      << "dropped_aux_only " << paired.dropped_aux << "\n";
  return out.str();
}

ToyEncoder::ToyEncoder(Tensor weight, Tensor bias) : weight_(std::move(weight)), bias_(std::move(bias)) {
  if (weight_.rank() != 2 || bias_.rank() != 1 || bias_.dim(0) != weight_.dim(0)) {
    throw Error(ErrorKind::ShapeMismatch, "encoder weight must be (d_out x n) with bias (d_out)");
  }
}

ToyEncoder ToyEncoder::random(std::size_t d_out, std::size_t n_inputs, std::uint64_t seed) {
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(n_inputs));
  Tensor w({d_out, n_inputs});
  for (auto& v : w.values()) v = rng.uniform(-bound, bound);
  Tensor b({d_out});
  for (auto& v : b.values()) v = rng.uniform(-bound, bound);
  return ToyEncoder(std::move(w), std::move(b));
}

std::vector<double> ToyEncoder::encode(const ImageBuffer& img) const {
  const auto& px = img.data();
  if (px.size() != input_dim()) {
    throw Error(ErrorKind::ShapeMismatch, "image has " + std::to_string(px.size()) + " values, encoder expects " +
                                              std::to_string(input_dim()));
  }
  std::vector<double> out(output_dim());
  for (std::size_t o = 0; o < out.size(); ++o) {
    const auto row = weight_.row(o);
    double acc = bias_[o];
    for (std::size_t i = 0; i < px.size(); ++i) acc += row[i] * (static_cast<double>(px[i]) / 255.0);
    out[o] = acc;
  }
  return out;
}

}  // namespace ferfusion
