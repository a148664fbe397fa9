#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ferfusion/image.hpp"

namespace ferfusion {

inline constexpr std::size_t kLandmarkCount = 68;
inline constexpr std::size_t kViewSize = 224;

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// 68-point landmark layout together with the size of the image it was taken on.
struct KeypointSet {
  std::array<Point, kLandmarkCount> points{};
  std::array<bool, kLandmarkCount> present{};
  std::size_t image_width = 0;
  std::size_t image_height = 0;
};

/// True when every eyebrow (17-26), nose (27-35), eye (36-47) and mouth
/// (48-67) landmark is present and inside the image. The jaw line (0-16)
/// is not consulted.
bool has_sufficient_keypoints(const KeypointSet& kps);

enum class RegionName { Eye, Mouth, Nose };

std::string_view to_string(RegionName name);
RegionName parse_region_name(std::string_view text);

// Fractional crop rectangle; [w_lo, w_hi) of the width by [h_lo, h_hi) of the height.
class RegionSpec {
 public:
  RegionSpec(RegionName name, double w_lo, double w_hi, double h_lo, double h_hi);

  static RegionSpec eye() { return {RegionName::Eye, 0.2, 0.8, 0.35, 0.55}; }
  static RegionSpec mouth() { return {RegionName::Mouth, 0.2, 0.8, 0.7, 0.9}; }
  static RegionSpec nose() { return {RegionName::Nose, 0.4, 0.6, 0.2, 0.8}; }
  static RegionSpec for_name(RegionName name);

  RegionName name() const noexcept { return name_; }
  double w_lo() const noexcept { return w_lo_; }
  double w_hi() const noexcept { return w_hi_; }
  double h_lo() const noexcept { return h_lo_; }
  double h_hi() const noexcept { return h_hi_; }

 private:
  RegionName name_;
  double w_lo_, w_hi_, h_lo_, h_hi_;
};

// Half-open pixel rectangle.
struct PixelRect {
  std::size_t row_begin, row_end, col_begin, col_end;
  bool operator==(const PixelRect&) const = default;
};

/// Rounds the fractional spec to pixels: floor on both ends, end exclusive.
PixelRect region_rect(const RegionSpec& spec, std::size_t height, std::size_t width);

/// Throws EmptyCrop when the rounded rectangle has zero area.
ImageBuffer crop_region(const ImageBuffer& img, const RegionSpec& spec);

// Ordered, non-empty, unique-named list of regions stacked top to bottom.
class ViewComposition {
 public:
  explicit ViewComposition(std::vector<RegionSpec> regions);

  static ViewComposition eye_mouth() { return ViewComposition({RegionSpec::eye(), RegionSpec::mouth()}); }

  const std::vector<RegionSpec>& regions() const noexcept { return regions_; }

 private:
  std::vector<RegionSpec> regions_;
};

/// Crops every region, scales each strip to width 224 (height kept in
/// proportion, at least one row), stacks the strips vertically in order and
/// resizes the stack to 224x224.
ImageBuffer compose_views(const ImageBuffer& img, const ViewComposition& comp);

// One line of the keypoint manifest (JSON lines).
struct KeypointRecord {
  std::string sample_id;
  std::filesystem::path image;
  int label = 0;
  std::string video_id;
  std::size_t frame_index = 0;
  std::array<Point, kLandmarkCount> points{};
  std::array<bool, kLandmarkCount> present{};
};

/// Reads {"id", "image", "label", "points": [[x,y] x68], "present": [0/1 x68]}
/// records, plus optional "video_id" and "frame". Relative image paths resolve
/// against the manifest's directory.
std::vector<KeypointRecord> read_keypoint_manifest(const std::filesystem::path& path);

struct SynthesisStats {
  std::size_t total = 0;
  std::size_t written = 0;
  std::size_t filtered_keypoints = 0;
  std::size_t failed_decode = 0;
  std::vector<std::string> log;
};

/// Runs the keypoint filter and composition over a manifest, writing one
/// auxiliary image per kept sample into out_dir and a paired CSV manifest
/// `sample_id,video_id,frame_index,main_path,aux_path,label` at manifest_out.
SynthesisStats synthesize_views(const std::vector<KeypointRecord>& records, const ViewComposition& comp,
                                const std::filesystem::path& out_dir, const std::filesystem::path& manifest_out);

}  // namespace ferfusion
