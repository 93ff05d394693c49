#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "attnctl/boxes.hpp"
#include "attnctl/tensor.hpp"

namespace attnctl {

inline constexpr std::array<const char*, 3> kShapes{"square", "circle", "triangle"};
inline constexpr std::array<const char*, 4> kColors{"red", "blue", "green", "yellow"};
inline constexpr std::array<const char*, 4> kQuadrants{"top left", "top right", "bottom left", "bottom right"};

/// Category id of a colored shape; ids run 1..12.
std::int64_t synth_category(std::size_t color, std::size_t shape);
std::string synth_category_name(std::int64_t id);

struct SynthObject {
  std::size_t shape = 0, color = 0, quadrant = 0;
  std::size_t row = 0, col = 0;  // top-left cell
  std::size_t size = 3;          // square footprint, cells per side

  std::int64_t category_id() const { return synth_category(color, shape); }
};

struct QaPair {
  std::int64_t question_id = 0;
  std::int64_t image_id = 0;
  std::string question, answer;
  std::string question_type = "other";
};

struct CaptionEntry {
  std::int64_t id = 0;
  std::int64_t image_id = 0;
  std::string caption;
};

struct SyntheticScene {
  std::int64_t id = 0;
  std::vector<SynthObject> objects;
  std::size_t main_object = 0;  // largest object, ties to the lower color index
  DenseArray features;          // L x D
  std::vector<CaptionEntry> captions;
  std::vector<BoundingBox> boxes;
  std::vector<QaPair> qa;
};

struct SynthConfig {
  std::uint64_t seed = 1;
  std::size_t scenes = 500;
  std::size_t min_objects = 2;
  std::size_t max_objects = 3;
  std::size_t min_size = 4;  // object side in cells
  std::size_t max_size = 6;
  std::size_t grid = 14;
  std::size_t cell_px = 32;
  std::size_t feature_dim = 32;
  double noise = 0.1;

  std::size_t image_px() const { return grid * cell_px; }
  void validate() const;
};

bool is_val_scene(std::int64_t id);

std::vector<SyntheticScene> generate_scenes(const SynthConfig& config);

/// File names inside a dataset directory.
struct DatasetFiles {
  static constexpr const char* kFeatures = "features.json";
  static constexpr const char* kCaptions = "captions.json";
  static constexpr const char* kAnnotations = "annotations.json";
  static constexpr const char* kQa = "qa.json";
  static constexpr const char* kManifest = "manifest.json";
};

std::uint64_t fnv1a64(std::string_view bytes);

/// Writes the four data files and a manifest with their hashes and the split.
void write_dataset(const std::filesystem::path& dir, const SynthConfig& config,
                   const std::vector<SyntheticScene>& scenes);

// ---- ingestion --------------------------------------------------------------

/// L x D region features keyed by image id.
struct FeatureSet {
  std::size_t regions = 0, dims = 0;
  std::map<std::int64_t, DenseArray> images;

  const DenseArray& at(std::int64_t image_id) const;
};

/// {"regions": L, "dims": D, "images": [{"id", "features": [L*D row-major]}]}.
FeatureSet parse_features(const std::string& json_text);
FeatureSet load_features(const std::filesystem::path& path);

/// COCO caption shape: {"annotations": [{"id", "image_id", "caption"}]}.
std::vector<CaptionEntry> load_captions(const std::filesystem::path& path);
/// {"questions": [{"question_id", "image_id", "question", "answer", "question_type"}]}.
std::vector<QaPair> load_qa(const std::filesystem::path& path);

struct DatasetSplit {
  std::vector<std::int64_t> train, val;
};

struct Dataset {
  FeatureSet features;
  std::vector<CaptionEntry> captions;
  DetectionSet detections;
  std::vector<QaPair> qa;
  DatasetSplit split;
};

/// Loads a dataset directory. The split comes from manifest.json when present,
/// otherwise from is_val_scene. Throws std::runtime_error naming the path on
/// I/O or parse failure.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace attnctl
