#include "attnctl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "attnctl/rng.hpp"
#include "json.hpp"

namespace attnctl {

using nlohmann::ordered_json;

std::int64_t synth_category(std::size_t color, std::size_t shape) {
  return static_cast<std::int64_t>(color * kShapes.size() + shape + 1);
}

std::string synth_category_name(std::int64_t id) {
  if (id < 1 || id > static_cast<std::int64_t>(kShapes.size() * kColors.size())) {
    throw DomainError("no synthetic category " + std::to_string(id));
  }
  const auto k = static_cast<std::size_t>(id - 1);
  return std::string(kColors[k / kShapes.size()]) + " " + kShapes[k % kShapes.size()];
}

void SynthConfig::validate() const {
  if (scenes == 0) throw DomainError("gen-data: scenes must be at least 1");
  if (min_objects == 0 || min_objects > max_objects || max_objects > kShapes.size()) {
    throw DomainError("gen-data: objects per scene must lie in 1..3 with min <= max");
  }
  if (grid < 8 || grid % 2 != 0) throw DomainError("gen-data: grid must be even and at least 8");
  if (min_size == 0 || min_size > max_size || max_size > grid / 2) {
    throw DomainError("gen-data: object sizes must lie in 1..grid/2 with min <= max");
  }
  if (cell_px == 0) throw DomainError("gen-data: cell size must be positive");
  if (feature_dim < 9) throw DomainError("gen-data: feature_dim must be at least 9");
  if (!(noise >= 0.0)) throw DomainError("gen-data: noise must be non-negative");
}

bool is_val_scene(std::int64_t id) { return id % 5 == 4; }

namespace {

constexpr std::size_t kPosRow = 7, kPosCol = 8;

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  shuffle(p, rng);
  return p;
}

double quantize(double v) {
  const double q = std::round(v * 1000.0) / 1000.0;
  return q == 0.0 ? 0.0 : q;  // no negative zero in the files
}

std::string caption_text(const SynthObject& o) {
  return std::string("there is a ") + kColors[o.color] + " " + kShapes[o.shape] + " in the image";
}

}  // namespace

std::vector<SyntheticScene> generate_scenes(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const std::size_t g = config.grid, half = g / 2, L = g * g, D = config.feature_dim;
  const double centre = static_cast<double>(g - 1) / 2.0;

  std::vector<SyntheticScene> scenes;
  scenes.reserve(config.scenes);
  for (std::size_t s = 0; s < config.scenes; ++s) {
    SyntheticScene scene;
    scene.id = static_cast<std::int64_t>(s);
    const std::size_t n = config.min_objects + rng.below(config.max_objects - config.min_objects + 1);
    const auto shapes = permutation(kShapes.size(), rng);
    const auto colors = permutation(kColors.size(), rng);
    const auto quads = permutation(kQuadrants.size(), rng);
    for (std::size_t k = 0; k < n; ++k) {
      SynthObject o;
      o.shape = shapes[k];
      o.color = colors[k];
      o.quadrant = quads[k];
      o.size = config.min_size + rng.below(config.max_size - config.min_size + 1);
      o.row = (o.quadrant / 2) * half + rng.below(half - o.size + 1);
      o.col = (o.quadrant % 2) * half + rng.below(half - o.size + 1);
      scene.objects.push_back(o);
    }
    for (std::size_t k = 1; k < n; ++k) {
      const auto& a = scene.objects[k];
      const auto& m = scene.objects[scene.main_object];
      if (a.size > m.size || (a.size == m.size && a.color < m.color)) scene.main_object = k;
    }

    scene.features = DenseArray({L, D});
    for (std::size_t r = 0; r < g; ++r) {
      for (std::size_t c = 0; c < g; ++c) {
        auto row = scene.features.row(r * g + c);
        for (std::size_t d = 0; d < D; ++d) row[d] = config.noise * rng.normal();
        row[kPosRow] += (static_cast<double>(r) - centre) / centre;
        row[kPosCol] += (static_cast<double>(c) - centre) / centre;
        for (const auto& o : scene.objects) {
          if (r >= o.row && r < o.row + o.size && c >= o.col && c < o.col + o.size) {
            row[o.shape] += 1.0;
            row[kShapes.size() + o.color] += 1.0;
          }
        }
        for (auto& v : row) v = quantize(v);
      }
    }

    std::int64_t caption_id = scene.id * 10;
    const auto& main = scene.objects[scene.main_object];
    for (std::size_t i = 0; i < std::max<std::size_t>(2, n); ++i) {
      scene.captions.push_back({caption_id++, scene.id, caption_text(main)});
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (k != scene.main_object) scene.captions.push_back({caption_id++, scene.id, caption_text(scene.objects[k])});
    }

    const auto px = static_cast<std::int64_t>(config.cell_px);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& o = scene.objects[k];
      const std::int64_t side = static_cast<std::int64_t>(o.size) * px;
      scene.boxes.push_back({static_cast<std::int64_t>(o.col) * px, static_cast<std::int64_t>(o.row) * px, side, side,
                             o.category_id(), scene.id, scene.id * 10 + static_cast<std::int64_t>(k)});
      const std::int64_t qid = scene.id * 10 + 2 * static_cast<std::int64_t>(k);
      scene.qa.push_back({qid, scene.id, std::string("what color is the ") + kShapes[o.shape], kColors[o.color]});
      scene.qa.push_back({qid + 1, scene.id, std::string("where is the ") + kShapes[o.shape], kQuadrants[o.quadrant]});
    }
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ordered_json parse_file(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  try {
    return ordered_json::parse(text);
  } catch (const ordered_json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const SynthConfig& config,
                   const std::vector<SyntheticScene>& scenes) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());

  const std::size_t L = config.grid * config.grid;
  ordered_json features{{"regions", L}, {"dims", config.feature_dim}, {"images", ordered_json::array()}};
  ordered_json captions{{"images", ordered_json::array()}, {"annotations", ordered_json::array()}};
  ordered_json annotations{{"images", ordered_json::array()},
                           {"annotations", ordered_json::array()},
                           {"categories", ordered_json::array()}};
  ordered_json qa{{"questions", ordered_json::array()}};
  ordered_json split{{"train", ordered_json::array()}, {"val", ordered_json::array()}};

  const auto px = static_cast<std::int64_t>(config.image_px());
  for (const auto& scene : scenes) {
    features["images"].push_back({{"id", scene.id}, {"features", scene.features.storage()}});
    const ordered_json image{{"id", scene.id}, {"width", px}, {"height", px}};
    captions["images"].push_back(image);
    annotations["images"].push_back(image);
    for (const auto& c : scene.captions) {
      captions["annotations"].push_back({{"id", c.id}, {"image_id", c.image_id}, {"caption", c.caption}});
    }
    for (const auto& b : scene.boxes) {
      annotations["annotations"].push_back({{"id", b.ann_id},
                                            {"image_id", b.image_id},
                                            {"category_id", b.category_id},
                                            {"bbox", {b.x, b.y, b.w, b.h}}});
    }
    for (const auto& q : scene.qa) {
      qa["questions"].push_back({{"question_id", q.question_id},
                                 {"image_id", q.image_id},
                                 {"question", q.question},
                                 {"answer", q.answer},
                                 {"question_type", q.question_type}});
    }
    split[is_val_scene(scene.id) ? "val" : "train"].push_back(scene.id);
  }
  for (std::int64_t id = 1; id <= static_cast<std::int64_t>(kShapes.size() * kColors.size()); ++id) {
    annotations["categories"].push_back({{"id", id}, {"name", synth_category_name(id)}});
  }

  ordered_json files = ordered_json::object();
  const std::vector<std::pair<const char*, std::string>> outputs{
      {DatasetFiles::kFeatures, features.dump()},
      {DatasetFiles::kCaptions, captions.dump(1)},
      {DatasetFiles::kAnnotations, annotations.dump(1)},
      {DatasetFiles::kQa, qa.dump(1)},
  };
  for (const auto& [name, text] : outputs) {
    write_text(dir / name, text + "\n");
    files[name] = {{"bytes", text.size() + 1}, {"fnv1a64", hex64(fnv1a64(text + "\n"))}};
  }
  ordered_json manifest{{"generator",
                         {{"seed", config.seed},
                          {"scenes", config.scenes},
                          {"min_objects", config.min_objects},
                          {"max_objects", config.max_objects},
                          {"min_size", config.min_size},
                          {"max_size", config.max_size},
                          {"grid", config.grid},
                          {"cell_px", config.cell_px},
                          {"feature_dim", config.feature_dim},
                          {"noise", config.noise}}},
                        {"split", split},
                        {"files", files}};
  write_text(dir / DatasetFiles::kManifest, manifest.dump(1) + "\n");
}

const DenseArray& FeatureSet::at(std::int64_t image_id) const {
  auto it = images.find(image_id);
  if (it == images.end()) throw DomainError("no features for image " + std::to_string(image_id));
  return it->second;
}

FeatureSet parse_features(const std::string& json_text) {
  FeatureSet set;
  try {
    const auto j = ordered_json::parse(json_text);
    set.regions = j.at("regions").get<std::size_t>();
    set.dims = j.at("dims").get<std::size_t>();
    if (set.regions == 0 || set.dims == 0) throw DomainError("features: regions and dims must be positive");
    for (const auto& img : j.at("images")) {
      auto values = img.at("features").get<std::vector<double>>();
      const auto id = img.at("id").get<std::int64_t>();
      if (values.size() != set.regions * set.dims) {
        throw DimensionError("features: image " + std::to_string(id) + " holds " + std::to_string(values.size()) +
                             " values, expected " + std::to_string(set.regions * set.dims));
      }
      DenseArray a({set.regions, set.dims}, std::move(values));
      if (!a.all_finite()) throw DomainError("features: image " + std::to_string(id) + " has non-finite values");
      set.images.insert_or_assign(id, std::move(a));
    }
  } catch (const ordered_json::exception& e) {
    throw DomainError(std::string("features: ") + e.what());
  }
  return set;
}

FeatureSet load_features(const std::filesystem::path& path) {
  try {
    return parse_features(read_text(path));
  } catch (const std::logic_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

std::vector<CaptionEntry> load_captions(const std::filesystem::path& path) {
  const auto j = parse_file(path);
  std::vector<CaptionEntry> out;
  try {
    for (const auto& a : j.at("annotations")) {
      out.push_back({a.at("id").get<std::int64_t>(), a.at("image_id").get<std::int64_t>(),
                     a.at("caption").get<std::string>()});
    }
  } catch (const ordered_json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  return out;
}

std::vector<QaPair> load_qa(const std::filesystem::path& path) {
  const auto j = parse_file(path);
  std::vector<QaPair> out;
  try {
    for (const auto& q : j.at("questions")) {
      out.push_back({q.at("question_id").get<std::int64_t>(), q.at("image_id").get<std::int64_t>(),
                     q.at("question").get<std::string>(), q.at("answer").get<std::string>(),
                     q.value("question_type", std::string("other"))});
    }
  } catch (const ordered_json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.features = load_features(dir / DatasetFiles::kFeatures);
  ds.captions = load_captions(dir / DatasetFiles::kCaptions);
  try {
    ds.detections = load_detections(dir / DatasetFiles::kAnnotations);
  } catch (const std::logic_error& e) {
    throw std::runtime_error((dir / DatasetFiles::kAnnotations).string() + ": " + e.what());
  }
  const auto qa_path = dir / DatasetFiles::kQa;
  if (std::filesystem::exists(qa_path)) ds.qa = load_qa(qa_path);

  const auto manifest_path = dir / DatasetFiles::kManifest;
  if (std::filesystem::exists(manifest_path)) {
    const auto m = parse_file(manifest_path);
    try {
      ds.split.train = m.at("split").at("train").get<std::vector<std::int64_t>>();
      ds.split.val = m.at("split").at("val").get<std::vector<std::int64_t>>();
    } catch (const ordered_json::exception& e) {
      throw std::runtime_error(manifest_path.string() + ": " + e.what());
    }
  } else {
    for (const auto& [id, _] : ds.features.images) (is_val_scene(id) ? ds.split.val : ds.split.train).push_back(id);
  }
  return ds;
}

}  // namespace attnctl
