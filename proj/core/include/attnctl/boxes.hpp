#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "attnctl/tensor.hpp"

namespace attnctl {

/// Pixel box with its top-left corner at (x, y).
struct BoundingBox {
  std::int64_t x = 0, y = 0, w = 0, h = 0;
  std::int64_t category_id = 0;
  std::int64_t image_id = 0;
  std::int64_t ann_id = 0;
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct ImageInfo {
  std::int64_t id = 0;
  std::int64_t width = 0, height = 0;
};

class CategoryTable {
 public:
  void add(std::int64_t id, std::string name);
  const std::string& name(std::int64_t id) const;
  bool contains(std::int64_t id) const { return names_.count(id) != 0; }
  /// Compound names split on whitespace, e.g. "fire hydrant" -> {fire, hydrant}.
  std::vector<std::string> parts(std::int64_t id) const;
  const std::map<std::int64_t, std::string>& entries() const { return names_; }

 private:
  std::map<std::int64_t, std::string> names_;
};

struct BoxFilterRule {
  double median_w = 0.0;
  double median_h = 0.0;
  double min_w = 0.0;  // grid cell width, the smallest representable extent
  double min_h = 0.0;
};

/// Median of widths and heights over all boxes.
BoxFilterRule median_rule(const std::vector<BoundingBox>& boxes);
/// Adds the grid-cell floor for an image of the given size.
BoxFilterRule with_cell_floor(BoxFilterRule rule, std::int64_t img_w, std::int64_t img_h, std::size_t grid);

bool keep_box(const BoundingBox& box, const BoxFilterRule& rule);
std::vector<BoundingBox> filter_boxes(const std::vector<BoundingBox>& boxes, const BoxFilterRule& rule);

/// Row-major byte grid.
struct ByteGrid {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> data;

  std::uint8_t at(std::size_t row, std::size_t col) const { return data[row * width + col]; }
  std::uint8_t& at(std::size_t row, std::size_t col) { return data[row * width + col]; }
};

/// Center-sampling nearest neighbour: out[i][j] = in[floor((i+.5)H/oh)][floor((j+.5)W/ow)].
ByteGrid nearest_neighbor_resize(const ByteGrid& in, std::size_t out_w, std::size_t out_h);

/// Zero mask with 255 over [x, x+w) x [y, y+h).
ByteGrid box_mask(const BoundingBox& box, std::int64_t img_w, std::int64_t img_h);

/// Mask, down-sample to grid x grid, scale to [0,1], divide by `temperature`,
/// softmax. The box is clipped to the image first; DomainError when nothing
/// is left.
DenseArray box_to_attention(const BoundingBox& box, std::int64_t img_w, std::int64_t img_h, std::size_t grid = 14,
                            double temperature = 1.0);

/// COCO detection subset: images, annotations and categories.
struct DetectionSet {
  std::vector<ImageInfo> images;
  std::vector<BoundingBox> boxes;
  CategoryTable categories;

  const ImageInfo& image(std::int64_t id) const;
};

/// Parses COCO-shaped detection JSON; bbox values are floored.
DetectionSet parse_detections(const std::string& json_text);
DetectionSet load_detections(const std::filesystem::path& path);

/// One JSON line {"image_id","ann_id","category_id","alpha":[...]}.
std::string attention_record_json(const BoundingBox& box, const DenseArray& alpha);

struct AttentionRecord {
  std::int64_t image_id = 0;
  std::string source;  // ann id or "question_id:level"
  std::optional<std::int64_t> category_id;
  DenseArray alpha;
};

/// Reads JSON-lines attention files written by boxes-to-attn or the VQA
/// extractor.
std::vector<AttentionRecord> load_attention_lines(const std::filesystem::path& path);

}  // namespace attnctl
