#include "attnctl/boxes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace attnctl {

using nlohmann::json;

void CategoryTable::add(std::int64_t id, std::string name) {
  if (name.empty()) throw DomainError("category " + std::to_string(id) + " has an empty name");
  if (!names_.emplace(id, std::move(name)).second) {
    throw DomainError("duplicate category id " + std::to_string(id));
  }
}

const std::string& CategoryTable::name(std::int64_t id) const {
  auto it = names_.find(id);
  if (it == names_.end()) throw DomainError("unknown category id " + std::to_string(id));
  return it->second;
}

std::vector<std::string> CategoryTable::parts(std::int64_t id) const {
  std::istringstream in(name(id));
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) throw DomainError("median of an empty box set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

BoxFilterRule median_rule(const std::vector<BoundingBox>& boxes) {
  std::vector<double> ws, hs;
  for (const auto& b : boxes) {
    ws.push_back(static_cast<double>(b.w));
    hs.push_back(static_cast<double>(b.h));
  }
  return {median(ws), median(hs), 0.0, 0.0};
}

BoxFilterRule with_cell_floor(BoxFilterRule rule, std::int64_t img_w, std::int64_t img_h, std::size_t grid) {
  if (grid == 0) throw DomainError("grid must be positive");
  rule.min_w = static_cast<double>(img_w) / static_cast<double>(grid);
  rule.min_h = static_cast<double>(img_h) / static_cast<double>(grid);
  return rule;
}

bool keep_box(const BoundingBox& box, const BoxFilterRule& rule) {
  const auto w = static_cast<double>(box.w), h = static_cast<double>(box.h);
  return w >= rule.median_w && h >= rule.median_h && w >= rule.min_w && h >= rule.min_h;
}

std::vector<BoundingBox> filter_boxes(const std::vector<BoundingBox>& boxes, const BoxFilterRule& rule) {
  std::vector<BoundingBox> kept;
  std::copy_if(boxes.begin(), boxes.end(), std::back_inserter(kept),
               [&](const BoundingBox& b) { return keep_box(b, rule); });
  return kept;
}

ByteGrid nearest_neighbor_resize(const ByteGrid& in, std::size_t out_w, std::size_t out_h) {
  if (out_w == 0 || out_h == 0) throw DomainError("nearest_neighbor_resize: zero output size");
  if (in.width == 0 || in.height == 0 || in.data.size() != in.width * in.height) {
    throw DomainError("nearest_neighbor_resize: malformed input grid");
  }
  ByteGrid out{out_w, out_h, std::vector<std::uint8_t>(out_w * out_h)};
  for (std::size_t i = 0; i < out_h; ++i) {
    // floor((i+0.5)H/oh) in integer arithmetic
    const std::size_t src_row = ((2 * i + 1) * in.height) / (2 * out_h);
    for (std::size_t j = 0; j < out_w; ++j) {
      const std::size_t src_col = ((2 * j + 1) * in.width) / (2 * out_w);
      out.at(i, j) = in.at(src_row, src_col);
    }
  }
  return out;
}

namespace {

struct Clipped {
  std::int64_t x0, y0, x1, y1;
};

Clipped clip_box(const BoundingBox& box, std::int64_t img_w, std::int64_t img_h) {
  if (img_w <= 0 || img_h <= 0) throw DomainError("image extents must be positive");
  if (box.w <= 0 || box.h <= 0) {
    throw DomainError("box " + std::to_string(box.ann_id) + " has non-positive extent");
  }
  Clipped c{std::max<std::int64_t>(box.x, 0), std::max<std::int64_t>(box.y, 0),
            std::min<std::int64_t>(box.x + box.w, img_w), std::min<std::int64_t>(box.y + box.h, img_h)};
  if (c.x0 >= c.x1 || c.y0 >= c.y1) {
    throw DomainError("box " + std::to_string(box.ann_id) + " lies outside the " + std::to_string(img_w) + "x" +
                      std::to_string(img_h) + " image");
  }
  return c;
}

}  // namespace

ByteGrid box_mask(const BoundingBox& box, std::int64_t img_w, std::int64_t img_h) {
  const Clipped c = clip_box(box, img_w, img_h);
  ByteGrid mask{static_cast<std::size_t>(img_w), static_cast<std::size_t>(img_h),
                std::vector<std::uint8_t>(static_cast<std::size_t>(img_w * img_h), 0)};
  for (auto y = c.y0; y < c.y1; ++y) {
    std::fill_n(mask.data.begin() + y * img_w + c.x0, c.x1 - c.x0, std::uint8_t{255});
  }
  return mask;
}

DenseArray box_to_attention(const BoundingBox& box, std::int64_t img_w, std::int64_t img_h, std::size_t grid,
                            double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw DomainError("temperature must be positive");
  const ByteGrid small = nearest_neighbor_resize(box_mask(box, img_w, img_h), grid, grid);
  DenseArray v({grid * grid});
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (small.data[i] / 255.0) / temperature;
  return softmax(v);
}

const ImageInfo& DetectionSet::image(std::int64_t id) const {
  for (const auto& im : images)
    if (im.id == id) return im;
  throw DomainError("unknown image id " + std::to_string(id));
}

DetectionSet parse_detections(const std::string& json_text) {
  DetectionSet set;
  try {
    const json doc = json::parse(json_text);
    for (const auto& im : doc.at("images")) {
      set.images.push_back({im.at("id").get<std::int64_t>(), im.at("width").get<std::int64_t>(),
                            im.at("height").get<std::int64_t>()});
    }
    for (const auto& c : doc.at("categories")) {
      set.categories.add(c.at("id").get<std::int64_t>(), c.at("name").get<std::string>());
    }
    std::int64_t next_id = 0;
    for (const auto& a : doc.at("annotations")) {
      const auto& bb = a.at("bbox");
      if (!bb.is_array() || bb.size() != 4) throw DomainError("bbox must have four numbers");
      BoundingBox b;
      b.x = static_cast<std::int64_t>(std::floor(bb[0].get<double>()));
      b.y = static_cast<std::int64_t>(std::floor(bb[1].get<double>()));
      b.w = static_cast<std::int64_t>(std::floor(bb[2].get<double>()));
      b.h = static_cast<std::int64_t>(std::floor(bb[3].get<double>()));
      b.image_id = a.at("image_id").get<std::int64_t>();
      b.category_id = a.at("category_id").get<std::int64_t>();
      b.ann_id = a.contains("id") ? a["id"].get<std::int64_t>() : next_id;
      next_id = b.ann_id + 1;
      set.boxes.push_back(b);
    }
  } catch (const json::exception& e) {
    throw DomainError(std::string("detection json: ") + e.what());
  }
  return set;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

DetectionSet load_detections(const std::filesystem::path& path) {
  try {
    return parse_detections(read_file(path));
  } catch (const DomainError& e) {
    throw DomainError(path.string() + ": " + e.what());
  }
}

std::string attention_record_json(const BoundingBox& box, const DenseArray& alpha) {
  json j;
  j["image_id"] = box.image_id;
  j["ann_id"] = box.ann_id;
  j["category_id"] = box.category_id;
  j["alpha"] = alpha.storage();
  return j.dump();
}

std::vector<AttentionRecord> load_attention_lines(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<AttentionRecord> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      AttentionRecord r;
      r.image_id = j.value("image_id", std::int64_t{0});
      if (j.contains("ann_id")) {
        r.source = std::to_string(j["ann_id"].get<std::int64_t>());
      } else if (j.contains("question_id")) {
        r.source = std::to_string(j["question_id"].get<std::int64_t>()) + ":" + j.value("level", std::string());
      }
      if (j.contains("category_id")) r.category_id = j["category_id"].get<std::int64_t>();
      auto values = j.at("alpha").get<std::vector<double>>();
      const std::size_t n = values.size();
      r.alpha = DenseArray({n}, std::move(values));
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DomainError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace attnctl
