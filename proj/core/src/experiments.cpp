#include "attnctl/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace attnctl {

using nlohmann::ordered_json;

std::vector<MethodSpec> default_exp1_methods() {
  return {{MethodKind::Unlimited, 0.0}, {MethodKind::Limited, 3.0},  {MethodKind::Limited, 6.0},
          {MethodKind::Limited, 9.0},   {MethodKind::Additive, 1.0}, {MethodKind::Additive, 2.0},
          {MethodKind::Additive, 3.0}};
}

std::vector<MethodSpec> default_exp2_methods() {
  return {{MethodKind::Unlimited, 0.0}, {MethodKind::Limited, 6.0}, {MethodKind::Additive, 3.0}};
}

namespace {

std::vector<std::int64_t> chosen_images(const Dataset& data, bool val_only) {
  std::vector<std::int64_t> ids;
  if (val_only) {
    ids = data.split.val;
  } else {
    for (const auto& [id, _] : data.features.images) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

void check_dims(const Captioner& model, const FeatureSet& features) {
  const auto& c = model.config();
  if (c.regions != features.regions || c.feature_dim != features.dims) {
    throw DimensionError("captioner expects " + std::to_string(c.regions) + "x" + std::to_string(c.feature_dim) +
                         " features, data has " + std::to_string(features.regions) + "x" +
                         std::to_string(features.dims));
  }
}

std::vector<std::string> labels(const std::vector<MethodSpec>& methods) {
  std::vector<std::string> out;
  for (const auto& m : methods) out.push_back(m.label());
  return out;
}

Tokens decode(const Captioner& model, const Vocabulary& vocab, const DenseArray& features,
              const InterfaceMethod& method) {
  return decode_tokens(model.greedy_decode(ImageAnnotation{features}, method).words(), vocab);
}

std::size_t grid_of(std::size_t regions) {
  const auto g = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(regions))));
  if (g * g != regions) throw DimensionError("region count " + std::to_string(regions) + " is not a square");
  return g;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& l : lines) out << l << "\n";
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

Exp1Result run_exp1(const Dataset& data, const CaptionerBundle& captioner, const Exp1Config& config) {
  const Captioner& model = captioner.model;
  const Vocabulary& vocab = captioner.vocab;
  check_dims(model, data.features);
  const std::size_t grid = grid_of(data.features.regions);
  for (const auto& m : config.methods) {
    if (!m.needs_external()) throw DomainError("run-exp1: method " + m.label() + " takes no box attention");
  }

  Exp1Result result;
  const auto images = chosen_images(data, config.use_val_split);
  const std::set<std::int64_t> image_set(images.begin(), images.end());
  std::map<std::int64_t, std::vector<BoundingBox>> boxes_by_image;
  std::vector<BoundingBox> split_boxes;
  for (const auto& b : data.detections.boxes) {
    if (!image_set.count(b.image_id)) continue;
    boxes_by_image[b.image_id].push_back(b);
    split_boxes.push_back(b);
  }
  result.boxes = split_boxes.size();
  result.rule = median_rule(split_boxes);

  for (auto image_id : images) {
    const DenseArray& features = data.features.at(image_id);
    ++result.images;
    const Tokens self = decode(model, vocab, features, SelfAttending{});
    const Tokens control = decode(model, vocab, features, ControlUniform{});
    result.caption_lines.push_back(ordered_json{{"image_id", image_id},
                                                {"method", "control"},
                                                {"caption", join_tokens(control)},
                                                {"attention", {{"source", "uniform"}}}}
                                       .dump());
    result.caption_lines.push_back(ordered_json{{"image_id", image_id},
                                                {"method", "self"},
                                                {"caption", join_tokens(self)},
                                                {"attention", {{"source", "model"}}}}
                                       .dump());
    auto it = boxes_by_image.find(image_id);
    if (it == boxes_by_image.end()) continue;
    const ImageInfo& info = data.detections.image(image_id);
    const BoxFilterRule rule = with_cell_floor(result.rule, info.width, info.height, grid);
    for (const auto& box : it->second) {
      if (!keep_box(box, rule)) continue;
      ++result.kept_boxes;
      const DenseArray alpha = box_to_attention(box, info.width, info.height, grid, config.temperature);
      result.baselines.push_back({image_id, box.ann_id, box.category_id, "control", control, control, self});
      result.baselines.push_back({image_id, box.ann_id, box.category_id, "self", self, control, self});
      for (const auto& method : config.methods) {
        Tokens caption = decode(model, vocab, features, method.bind(alpha));
        result.caption_lines.push_back(ordered_json{{"image_id", image_id},
                                                    {"method", method.label()},
                                                    {"caption", join_tokens(caption)},
                                                    {"attention",
                                                     {{"source", "box"},
                                                      {"ann_id", box.ann_id},
                                                      {"category_id", box.category_id}}}}
                                           .dump());
        result.records.push_back({image_id, box.ann_id, box.category_id, method.label(), std::move(caption), control, self});
      }
    }
  }

  const auto order = labels(config.methods);
  auto control_order = order;
  control_order.push_back("control");
  control_order.push_back("self");
  result.sensitivity = sensitivity_report(result.records, order);

  std::map<std::int64_t, std::string> categories;
  for (const auto& [id, name] : data.detections.categories.entries()) categories[id] = name;
  std::vector<CaptionRecord> scored = result.records;
  scored.insert(scored.end(), result.baselines.begin(), result.baselines.end());
  for (auto k : config.ks) {
    const auto lexicon = build_lexicon(categories, vocab, model.embeddings(), k);
    result.controllability.push_back(controllability_report(scored, lexicon, false, control_order));
  }
  for (auto k : config.ks) {
    const auto lexicon = build_lexicon(categories, vocab, model.embeddings(), k);
    result.controllability.push_back(controllability_report(scored, lexicon, true, control_order));
  }

  const std::size_t expected = result.kept_boxes * config.methods.size();
  std::ostringstream text;
  text << "Degree of sensitivity\n" << format_sensitivity(result.sensitivity) << "\n";
  text << "Degree of controllability\n" << format_controllability(result.controllability) << "\n";
  for (const auto& rep : result.controllability) {
    for (const auto& label : control_order) {
      const bool present = std::any_of(rep.rows.begin(), rep.rows.end(), [&](const ControllabilityRow& r) {
        return r.method == label && r.overall.den > 0;
      });
      if (!present) continue;
      text << (rep.distinct ? "distinct " : "") << "k@" << rep.k << " " << label << "\n"
           << format_category_table(rep, label) << "\n";
    }
  }
  text << "images " << result.images << ", boxes " << result.boxes << ", kept boxes " << result.kept_boxes
       << " (median " << result.rule.median_w << " x " << result.rule.median_h << ")\n";
  text << "box records " << result.records.size() << " = kept boxes " << result.kept_boxes << " x methods "
       << config.methods.size() << (result.records.size() == expected ? " [ok]" : " [MISMATCH]") << "\n";
  text << "baseline captions " << 2 * result.images << " = control " << result.images << " + self " << result.images
       << "\n";
  text << "caption lines " << result.caption_lines.size() << "\n";
  result.report_text = text.str();

  ordered_json j;
  j["sensitivity"] = ordered_json::parse(sensitivity_json(result.sensitivity));
  j["controllability"] = ordered_json::parse(controllability_json(result.controllability));
  j["counts"] = {{"images", result.images},
                 {"boxes", result.boxes},
                 {"kept_boxes", result.kept_boxes},
                 {"methods", config.methods.size()},
                 {"box_records", result.records.size()},
                 {"control_captions", result.images},
                 {"self_captions", result.images},
                 {"median_w", result.rule.median_w},
                 {"median_h", result.rule.median_h}};
  result.report_json = j.dump(1) + "\n";
  return result;
}

Exp2Result run_exp2(const Dataset& data, const CaptionerBundle& captioner, const VqaBundle& vqa,
                    const Exp2Config& config) {
  const Captioner& model = captioner.model;
  const Vocabulary& vocab = captioner.vocab;
  check_dims(model, data.features);
  if (vqa.model.config().regions != data.features.regions || vqa.model.config().feature_dim != data.features.dims) {
    throw DimensionError("VQA model does not match the feature dimensions");
  }
  for (const auto& m : config.methods) {
    if (!m.needs_external()) throw DomainError("run-exp2: method " + m.label() + " takes no external attention");
  }

  Exp2Result result;
  const auto images = chosen_images(data, config.use_val_split);
  const std::set<std::int64_t> image_set(images.begin(), images.end());
  std::vector<const QaPair*> pairs;
  for (const auto& q : data.qa) {
    if (image_set.count(q.image_id) && q.question_type == config.question_type) pairs.push_back(&q);
  }
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const QaPair* a, const QaPair* b) { return a->question_id < b->question_id; });

  std::map<std::int64_t, std::pair<Tokens, Tokens>> baseline;  // control, self
  for (const QaPair* q : pairs) {
    const DenseArray& features = data.features.at(q->image_id);
    const auto ids = encode_question(q->question, vqa.question_vocab, vqa.model.config().max_question_len);
    if (ids.empty()) {
      ++result.skipped;
      continue;
    }
    ++result.questions;
    auto base = baseline.find(q->image_id);
    if (base == baseline.end()) {
      base = baseline
                 .emplace(q->image_id, std::make_pair(decode(model, vocab, features, ControlUniform{}),
                                                      decode(model, vocab, features, SelfAttending{})))
                 .first;
    }
    const Tokens question = tokenize(q->question), answer = tokenize(q->answer);
    const auto attentions = vqa.model.extract_attentions(features, ids);
    for (QuestionLevel level : kQuestionLevels) {
      const auto& alpha = attentions[static_cast<std::size_t>(level)];
      result.attention_lines.push_back(ordered_json{{"image_id", q->image_id},
                                                    {"question_id", q->question_id},
                                                    {"level", level_name(level)},
                                                    {"alpha", alpha.storage()}}
                                           .dump());
    }
    for (const auto& method : config.methods) {
      for (QuestionLevel level : kQuestionLevels) {
        Tokens caption = decode(model, vocab, features, method.bind(attentions[static_cast<std::size_t>(level)]));
        result.caption_lines.push_back(ordered_json{{"image_id", q->image_id},
                                                    {"question_id", q->question_id},
                                                    {"method", method.label()},
                                                    {"level", level_name(level)},
                                                    {"caption", join_tokens(caption)},
                                                    {"attention",
                                                     {{"source", "vqa"},
                                                      {"question_id", q->question_id},
                                                      {"level", level_name(level)}}}}
                                               .dump());
        result.records.push_back({q->question_id, method.label(), level_name(level), std::move(caption), question, answer});
      }
    }
    for (const char* label : {"control", "self"}) {
      const Tokens& caption = std::string(label) == "control" ? base->second.first : base->second.second;
      result.caption_lines.push_back(ordered_json{{"image_id", q->image_id},
                                                  {"question_id", q->question_id},
                                                  {"method", label},
                                                  {"caption", join_tokens(caption)},
                                                  {"attention", {{"source", std::string(label) == "control" ? "uniform" : "model"}}}}
                                         .dump());
      result.records.push_back({q->question_id, label, "", caption, question, answer});
    }
  }

  result.usefulness = usefulness_report(result.records, labels(config.methods));
  std::ostringstream text;
  text << "Degree of usefulness\n" << format_usefulness(result.usefulness) << "\n";
  text << "questions " << result.questions << ", skipped " << result.skipped << ", caption records "
       << result.records.size() << " = questions x (" << config.methods.size() << " methods x 3 levels + 2)\n";
  result.report_text = text.str();
  ordered_json j;
  j["usefulness"] = ordered_json::parse(usefulness_json(result.usefulness));
  j["counts"] = {{"questions", result.questions},
                 {"skipped", result.skipped},
                 {"caption_records", result.records.size()},
                 {"methods", config.methods.size()}};
  result.report_json = j.dump(1) + "\n";
  return result;
}

void write_exp1(const std::filesystem::path& dir, const Exp1Result& result) {
  std::filesystem::create_directories(dir);
  write_lines(dir / "exp1_captions.jsonl", result.caption_lines);
  write_text(dir / "exp1_report.txt", result.report_text);
  write_text(dir / "exp1_report.json", result.report_json);
}

void write_exp2(const std::filesystem::path& dir, const Exp2Result& result) {
  std::filesystem::create_directories(dir);
  write_lines(dir / "exp2_captions.jsonl", result.caption_lines);
  write_lines(dir / "exp2_attention.jsonl", result.attention_lines);
  write_text(dir / "exp2_report.txt", result.report_text);
  write_text(dir / "exp2_report.json", result.report_json);
}

}  // namespace attnctl
