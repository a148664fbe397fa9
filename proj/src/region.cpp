#include "ferfusion/region.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ferfusion/error.hpp"
#include "ferfusion/io.hpp"

namespace ferfusion {

namespace {

struct IndexRange {
  std::size_t first, last;  // inclusive
};

// eyebrows, nose, eyes, mouth in the 68-point layout
constexpr std::array<IndexRange, 4> kRequiredGroups{{{17, 26}, {27, 35}, {36, 47}, {48, 67}}};

}  // namespace

bool has_sufficient_keypoints(const KeypointSet& kps) {
  const auto w = static_cast<double>(kps.image_width);
  const auto h = static_cast<double>(kps.image_height);
  for (const auto& group : kRequiredGroups) {
    for (std::size_t i = group.first; i <= group.last; ++i) {
      if (!kps.present[i]) return false;
      const Point& p = kps.points[i];
      if (!(p.x >= 0.0 && p.x < w && p.y >= 0.0 && p.y < h)) return false;
    }
  }
  return true;
}

std::string_view to_string(RegionName name) {
  switch (name) {
    case RegionName::Eye: return "eye";
    case RegionName::Mouth: return "mouth";
    case RegionName::Nose: return "nose";
  }
  return "?";
}

RegionName parse_region_name(std::string_view text) {
  std::string lower(text);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "eye" || lower == "eyes") return RegionName::Eye;
  if (lower == "mouth") return RegionName::Mouth;
  if (lower == "nose") return RegionName::Nose;
  throw Error(ErrorKind::InvalidArgument, "unknown region '" + std::string(text) + "'");
}

RegionSpec::RegionSpec(RegionName name, double w_lo, double w_hi, double h_lo, double h_hi)
    : name_(name), w_lo_(w_lo), w_hi_(w_hi), h_lo_(h_lo), h_hi_(h_hi) {
  if (!(0.0 <= w_lo && w_lo < w_hi && w_hi <= 1.0 && 0.0 <= h_lo && h_lo < h_hi && h_hi <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "region fractions must satisfy 0 <= lo < hi <= 1");
  }
}

RegionSpec RegionSpec::for_name(RegionName name) {
  switch (name) {
    case RegionName::Eye: return eye();
    case RegionName::Mouth: return mouth();
    case RegionName::Nose: return nose();
  }
  return eye();
}

PixelRect region_rect(const RegionSpec& spec, std::size_t height, std::size_t width) {
  auto scaled = [](double frac, std::size_t n) {
    return static_cast<std::size_t>(std::floor(frac * static_cast<double>(n)));
  };
  return {scaled(spec.h_lo(), height), scaled(spec.h_hi(), height), scaled(spec.w_lo(), width),
          scaled(spec.w_hi(), width)};
}

ImageBuffer crop_region(const ImageBuffer& img, const RegionSpec& spec) {
  const PixelRect r = region_rect(spec, img.height(), img.width());
  if (r.row_end <= r.row_begin || r.col_end <= r.col_begin) {
    std::ostringstream msg;
    msg << to_string(spec.name()) << " crop of " << img.height() << "x" << img.width() << " image has zero area";
    throw Error(ErrorKind::EmptyCrop, msg.str());
  }
  const std::size_t ch = img.channels();
  const std::size_t out_w = r.col_end - r.col_begin;
  std::vector<std::uint8_t> data;
  data.reserve((r.row_end - r.row_begin) * out_w * ch);
  for (std::size_t y = r.row_begin; y < r.row_end; ++y) {
    const auto* src = img.data().data() + (y * img.width() + r.col_begin) * ch;
    data.insert(data.end(), src, src + out_w * ch);
  }
  return ImageBuffer(r.row_end - r.row_begin, out_w, ch, std::move(data));
}

ViewComposition::ViewComposition(std::vector<RegionSpec> regions) : regions_(std::move(regions)) {
  if (regions_.empty()) throw Error(ErrorKind::InvalidArgument, "view composition needs at least one region");
  std::set<RegionName> seen;
  for (const auto& r : regions_) {
    if (!seen.insert(r.name()).second) {
      throw Error(ErrorKind::InvalidArgument, "duplicate region '" + std::string(to_string(r.name())) + "'");
    }
  }
}

ImageBuffer compose_views(const ImageBuffer& img, const ViewComposition& comp) {
  std::vector<ImageBuffer> strips;
  std::size_t total_rows = 0;
  for (const auto& spec : comp.regions()) {
    ImageBuffer crop = crop_region(img, spec);
    const double scale = static_cast<double>(kViewSize) / static_cast<double>(crop.width());
    const auto rows = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(crop.height() * scale)));
    strips.push_back(resize_bilinear(crop, rows, kViewSize));
    total_rows += rows;
  }

  std::vector<std::uint8_t> stacked;
  stacked.reserve(total_rows * kViewSize * img.channels());
  for (const auto& s : strips) stacked.insert(stacked.end(), s.data().begin(), s.data().end());
  ImageBuffer stack(total_rows, kViewSize, img.channels(), std::move(stacked));
  return resize_bilinear(stack, kViewSize, kViewSize);
}

std::vector<KeypointRecord> read_keypoint_manifest(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const auto base = path.parent_path();
  std::vector<KeypointRecord> records;
  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    try {
      const auto j = nlohmann::json::parse(line);
      KeypointRecord rec;
      rec.sample_id = j.at("id").get<std::string>();
      rec.image = j.at("image").get<std::string>();
      if (rec.image.is_relative()) rec.image = base / rec.image;
      rec.label = j.at("label").get<int>();
      rec.video_id = j.value("video_id", rec.sample_id);
      rec.frame_index = j.value("frame", std::size_t{0});
      const auto& pts = j.at("points");
      const auto& pres = j.at("present");
      if (pts.size() != kLandmarkCount || pres.size() != kLandmarkCount) {
        throw Error(ErrorKind::Parse, where + ": expected 68 points and 68 presence flags");
      }
      for (std::size_t i = 0; i < kLandmarkCount; ++i) {
        rec.points[i] = {pts[i].at(0).get<double>(), pts[i].at(1).get<double>()};
        rec.present[i] = pres[i].is_boolean() ? pres[i].get<bool>() : pres[i].get<int>() != 0;
      }
      if (rec.label < 0 || rec.label > 7) throw Error(ErrorKind::Parse, where + ": label outside 0..7");
      records.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::Parse, where + ": " + e.what());
    }
  }
  return records;
}

SynthesisStats synthesize_views(const std::vector<KeypointRecord>& records, const ViewComposition& comp,
                                const std::filesystem::path& out_dir, const std::filesystem::path& manifest_out) {
  SynthesisStats stats;
  std::ostringstream manifest;
  manifest << "sample_id,video_id,frame_index,main_path,aux_path,label\n";
  for (const auto& rec : records) {
    ++stats.total;
    ImageBuffer img;
    try {
      img = read_pnm(rec.image);
    } catch (const Error& e) {
      ++stats.failed_decode;
      stats.log.push_back(rec.sample_id + ": removed, " + e.what());
      continue;
    }
    KeypointSet kps{rec.points, rec.present, img.width(), img.height()};
    if (!has_sufficient_keypoints(kps)) {
      ++stats.filtered_keypoints;
      stats.log.push_back(rec.sample_id + ": removed, insufficient eye/eyebrow/nose/mouth keypoints");
      continue;
    }
    const ImageBuffer main_view = resize_bilinear(img, kViewSize, kViewSize);
    const ImageBuffer aux_view = compose_views(img, comp);
    const auto main_path = out_dir / (rec.sample_id + "_main.pnm");
    const auto aux_path = out_dir / (rec.sample_id + "_aux.pnm");
    write_pnm(main_path, main_view);
    write_pnm(aux_path, aux_view);
    manifest << rec.sample_id << ',' << rec.video_id << ',' << rec.frame_index << ',' << main_path.string() << ','
             << aux_path.string() << ',' << rec.label << '\n';
    ++stats.written;
  }
  write_file_atomic(manifest_out, manifest.str());
  return stats;
}

}  // namespace ferfusion
