#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"

#include "attnctl/experiments.hpp"
#include "attnctl/train.hpp"

using namespace attnctl;

namespace {

struct Toy {
  Dataset data;
  CaptionerBundle captioner;
  VqaBundle vqa;
};

// A quickly trained pair of models on a dozen scenes.
const Toy& toy() {
  static const Toy instance = [] {
    SynthConfig sc;
    sc.scenes = 12;
    sc.feature_dim = 10;
    testutil::TempDir dir("exp");
    write_dataset(dir.path(), sc, generate_scenes(sc));
    Dataset data = load_dataset(dir.path());

    std::vector<std::int64_t> ids;
    for (const auto& [id, _] : data.features.images) ids.push_back(id);
    const auto vocab = build_vocab(caption_tokens(data.captions, ids), 100);
    CaptionerTrainConfig cc;
    cc.epochs = 1;
    auto cap = train_captioner(data, vocab, cc);

    VqaTrainConfig vc;
    vc.epochs = 1;
    vc.patience = 0;
    vc.hidden_dim = 8;
    auto vqa = train_vqa(data, vc);
    return Toy{std::move(data), CaptionerBundle{std::move(cap.model), vocab},
               VqaBundle{std::move(vqa.model), std::move(vqa.question_vocab), std::move(vqa.answers)}};
  }();
  return instance;
}

}  // namespace

TEST_CASE("experiment 1: identity methods reproduce the self caption and counts add up") {
  const Toy& t = toy();
  Exp1Config config;
  config.methods = {MethodSpec::parse("unlimited"), MethodSpec::parse("additive-0"), MethodSpec::parse("limited-0")};
  config.use_val_split = false;
  const auto r = run_exp1(t.data, t.captioner, config);

  CHECK(r.images == 12);
  CHECK(r.kept_boxes > 0);
  CHECK(r.kept_boxes <= r.boxes);
  CHECK(r.records.size() == 3 * r.kept_boxes);
  CHECK(r.baselines.size() == 2 * r.kept_boxes);
  CHECK(r.caption_lines.size() == 2 * r.images + r.records.size());
  CHECK(r.report_text.find("[ok]") != std::string::npos);

  for (const auto& row : r.sensitivity) {
    if (row.method == "additive-0" || row.method == "limited-0") {
      CAPTURE(row.method);
      CHECK(row.general.num == 0);
      CHECK(row.general.den == r.kept_boxes);
    }
  }
  for (const auto& rec : r.records) {
    if (rec.method == "additive-0" || rec.method == "limited-0") CHECK(rec.box == rec.self);
  }

  // The control caption is the unlimited decode of a uniform attention.
  for (const auto& rec : r.baselines) {
    if (rec.method != "control") continue;
    const auto& f = t.data.features.at(rec.image_id);
    const auto expected = t.captioner.model.greedy_decode(ImageAnnotation{f}, Unlimited{uniform_attention(196)});
    CHECK(decode_tokens(expected.words(), t.captioner.vocab) == rec.control);
  }

  CHECK(r.controllability.size() == 4);
  const auto j = nlohmann::json::parse(r.report_json);
  CHECK(j["counts"]["box_records"] == r.records.size());

  testutil::TempDir out("exp");
  write_exp1(out.path(), r);
  CHECK(std::filesystem::exists(out / "exp1_captions.jsonl"));
  CHECK(testutil::slurp(out / "exp1_report.txt") == r.report_text);
}

TEST_CASE("experiment 1 is deterministic") {
  const Toy& t = toy();
  Exp1Config config;
  config.use_val_split = false;
  const auto a = run_exp1(t.data, t.captioner, config);
  const auto b = run_exp1(t.data, t.captioner, config);
  CHECK(a.report_json == b.report_json);
  CHECK(a.caption_lines == b.caption_lines);
}

TEST_CASE("experiment 2: three levels per method plus control and self") {
  const Toy& t = toy();
  Exp2Config config;
  config.use_val_split = false;
  const auto r = run_exp2(t.data, t.captioner, t.vqa, config);
  CHECK(r.questions > 0);
  CHECK(r.usefulness.size() == 3 * 3 + 2);
  CHECK(r.records.size() == r.questions * (3 * 3 + 2));
  CHECK(r.attention_lines.size() == 3 * r.questions);
  CHECK(r.usefulness.back().method == "self");
  for (const auto& row : r.usefulness) {
    CHECK(row.either.den == r.questions);
    CHECK(row.either.num >= row.answer.num);
    CHECK(row.either.num >= row.question.num);
    CHECK(row.either.num <= row.answer.num + row.question.num);
  }
  for (const auto& line : r.attention_lines) {
    const auto j = nlohmann::json::parse(line);
    const auto alpha = j["alpha"].get<std::vector<double>>();
    CHECK(is_simplex(DenseArray({alpha.size()}, alpha), 1e-9, true));
  }
}

TEST_CASE("experiments reject mismatched feature dimensions") {
  const Toy& t = toy();
  Rng rng(1);
  auto cfg = t.captioner.model.config();
  cfg.feature_dim = 5;
  cfg.hidden_dim = 10;
  CaptionerBundle wrong{testutil::random_captioner(cfg, rng), t.captioner.vocab};
  CHECK_THROWS_AS(run_exp1(t.data, wrong, Exp1Config{}), DimensionError);
}
