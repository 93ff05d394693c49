#include <algorithm>
#include <cmath>
#include <functional>

#include "doctest.h"
#include "json.hpp"
#include "helpers.hpp"
#include "paper_fixtures.hpp"

#include "attnctl/metrics.hpp"

using namespace attnctl;
using Words = std::vector<std::string>;

namespace {

// Plain recursive Levenshtein with memo, independent of the DP in the library.
std::size_t levenshtein(const Words& a, const Words& b) {
  std::vector<std::vector<long>> memo(a.size() + 1, std::vector<long>(b.size() + 1, -1));
  std::function<std::size_t(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == 0) return j;
    if (j == 0) return i;
    if (memo[i][j] >= 0) return static_cast<std::size_t>(memo[i][j]);
    std::size_t best = go(i - 1, j - 1) + (a[i - 1] == b[j - 1] ? 0 : 1);
    best = std::min(best, go(i - 1, j) + 1);
    best = std::min(best, go(i, j - 1) + 1);
    memo[i][j] = static_cast<long>(best);
    return best;
  };
  return go(a.size(), b.size());
}

Words random_words(testutil::Rng& rng, std::size_t max_len, const Words& lexicon) {
  Words out;
  const auto n = rng.below(max_len + 1);
  for (std::uint64_t i = 0; i < n; ++i) out.push_back(lexicon[rng.below(lexicon.size())]);
  return out;
}

// Vocabulary and embeddings where "bike" is the nearest word to "bicycle" and
// "cat" the nearest to "dog".
struct Planted {
  Vocabulary vocab{Words{"bicycle", "bike", "dog", "cat", "rack", "fire", "hydrant", "red"}};
  DenseArray emb;
  Planted() {
    emb = DenseArray({vocab.output_classes(), 3});
    const auto set = [&](const char* w, std::initializer_list<double> v) {
      auto row = emb.row(*vocab.id_of(w));
      std::copy(v.begin(), v.end(), row.begin());
    };
    set("bicycle", {1.0, 0.0, 0.0});
    set("bike", {2.0, 0.1, 0.0});
    set("rack", {0.6, 0.5, 0.0});
    set("dog", {0.0, 1.0, 0.0});
    set("cat", {0.0, 0.9, 0.1});
    set("fire", {0.0, 0.0, 1.0});
    set("hydrant", {0.1, 0.0, 1.0});
    set("red", {0.0, 0.3, 0.9});
  }
};

CaptionRecord record(std::int64_t cat, const std::string& method, const std::string& box, const std::string& control,
                     const std::string& self) {
  CaptionRecord r;
  r.category_id = cat;
  r.method = method;
  r.box = tokenize(box);
  r.control = tokenize(control);
  r.self = tokenize(self);
  return r;
}

}  // namespace

TEST_CASE("word difference") {
  CHECK(word_diff(tokenize("a dog is laying on the sidewalk"), tokenize("a dog is sitting on the sidewalk")));
  CHECK_FALSE(word_diff(tokenize("a dog"), tokenize("a dog")));
  CHECK(word_diff(tokenize("a dog"), tokenize("a dog dog")));
  CHECK(word_diff({}, tokenize("a")));
}

TEST_CASE("word error rate examples") {
  CHECK(wer(tokenize("a b c"), tokenize("a x c")) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(wer(tokenize("a b"), tokenize("c d")) == 1.0);
  CHECK(wer(tokenize("a b"), {}) == 1.0);
  CHECK(wer(tokenize("a"), tokenize("a b c")) == 2.0);
  CHECK(wer(tokenize("a b c"), tokenize("a b c")) == 0.0);
  CHECK_THROWS_AS(wer({}, tokenize("a")), DomainError);
}

TEST_CASE("edit distance agrees with a recursive oracle") {
  testutil::Rng rng(31);
  const Words lexicon{"a", "dog", "cat", "on", "the", "mat"};
  for (int trial = 0; trial < 500; ++trial) {
    const auto a = random_words(rng, 9, lexicon), b = random_words(rng, 9, lexicon);
    CHECK(edit_distance(a, b) == levenshtein(a, b));
    CHECK(edit_distance(a, b) == edit_distance(b, a));
    if (!a.empty()) CHECK(wer(a, b) == static_cast<double>(levenshtein(a, b)) / static_cast<double>(a.size()));
  }
}

TEST_CASE("percent rounding and formatting") {
  CHECK(percent(1, 3) == 33.33);
  CHECK(percent(2, 3) == 66.67);
  CHECK(percent(0, 0) == 0.0);
  CHECK(format_percent(percent(9, 100)) == "9.00");
  CHECK(format_percent(100.0) == "100.00");
  CHECK(Count{1, 8}.pct() == 12.5);
}

TEST_CASE("published percentages follow from their counts") {
  for (const auto& row : fixtures::usefulness_rows()) {
    CAPTURE(row.method);
    CAPTURE(row.level);
    CHECK(format_percent(percent(row.answer, fixtures::kOtherQuestions)) == row.answer_pct);
    CHECK(format_percent(percent(row.question, fixtures::kOtherQuestions)) == row.question_pct);
    CHECK(format_percent(percent(row.either, fixtures::kOtherQuestions)) == row.either_pct);
  }
  for (const auto* cells : {&fixtures::sensitivity_cells(), &fixtures::controllability_cells()}) {
    for (const auto& cell : *cells) {
      CAPTURE(cell.label);
      const auto n = fixtures::numerator_for(cell.pct, cell.den);
      REQUIRE(n <= cell.den);
      CHECK(format_percent(percent(n, cell.den)) == cell.pct);
      CHECK(format_percent(Count{n, cell.den}.pct()) == cell.pct);
    }
  }
  CHECK(fixtures::numerator_for("88.68", fixtures::kBoxCaptions) == 104458);
  CHECK(format_percent(percent(104457, fixtures::kBoxCaptions)) == "88.67");
}

TEST_CASE("usefulness formatter prints the published table rows") {
  std::vector<UsefulnessRow> rows;
  for (const auto& f : fixtures::usefulness_rows()) {
    const auto d = fixtures::kOtherQuestions;
    rows.push_back({f.method, f.level, {f.answer, d}, {f.question, d}, {f.either, d}});
  }
  const auto text = format_usefulness(rows);
  CHECK(text.find("26.45 % 11340/42871") != std::string::npos);
  CHECK(text.find("38.96 % 16703/42871") != std::string::npos);
  CHECK(text.find("55.20 % 23664/42871") != std::string::npos);
  const auto j = nlohmann::json::parse(usefulness_json(rows));
  CHECK(j[6]["in_either"]["pct"] == 55.2);
  CHECK(j[6]["method"] == "additive-3");
}

TEST_CASE("corpus BLEU hand computed fixtures") {
  const auto r = corpus_bleu({{tokenize("the cat is on the mat")}}, {tokenize("the cat sat on the mat")});
  CHECK(r.matches == std::vector<std::size_t>{5, 3, 1, 0});
  CHECK(r.totals == std::vector<std::size_t>{6, 5, 4, 3});
  CHECK(r.brevity_penalty == 1.0);
  CHECK(std::abs(r.scores[0] - 100.0 * 5.0 / 6.0) <= 1e-9);
  CHECK(std::abs(r.scores[1] - 100.0 * std::sqrt(0.5)) <= 1e-9);
  CHECK(std::abs(r.scores[2] - 50.0) <= 1e-9);
  CHECK(r.scores[3] == 0.0);

  const auto brev = corpus_bleu({{tokenize("the cat sat")}}, {tokenize("the cat")}, 2);
  CHECK(std::abs(brev.scores[1] - 100.0 * std::exp(-0.5)) <= 1e-9);

  const auto clip = corpus_bleu({{tokenize("the cat")}}, {tokenize("the the the")}, 1);
  CHECK(std::abs(clip.scores[0] - 100.0 / 3.0) <= 1e-9);

  const auto multi = corpus_bleu({{tokenize("a b c d e"), tokenize("a b c")}}, {tokenize("a b c d")}, 1);
  CHECK(multi.reference_length == 3);

  const auto same = corpus_bleu({{tokenize("a red square in the image")}}, {tokenize("a red square in the image")});
  for (double s : same.scores) CHECK(std::abs(s - 100.0) <= 1e-9);

  CHECK_THROWS_AS(corpus_bleu({}, {}), DomainError);
  CHECK_THROWS_AS(corpus_bleu({{}}, {tokenize("a")}), DomainError);
}

TEST_CASE("sensitivity report counts and mean word error rate") {
  const std::vector<CaptionRecord> records{
      record(1, "unlimited", "a dog on a mat", "a dog on a mat", "a cat on a mat"),
      record(1, "unlimited", "a dog", "a cat", "a dog"),
      record(1, "limited-3", "a dog", "a dog", "a dog"),
  };
  const auto rows = sensitivity_report(records, {"limited-3", "unlimited"});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].method == "limited-3");
  CHECK(rows[1].general == Count{1, 2});
  CHECK(rows[1].specific == Count{1, 2});
  CHECK(rows[1].mean_wer_general == doctest::Approx((0.2 + 0.0) / 2.0).epsilon(1e-15));
  CHECK(rows[1].mean_wer_specific == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(rows[0].general == Count{0, 1});
  const auto table = format_sensitivity(rows);
  CHECK(table.find("50.00 (0.10)") != std::string::npos);
  CHECK(nlohmann::json::parse(sensitivity_json(rows))[1]["method_specific"]["num"] == 1);
}

TEST_CASE("nearest neighbour category expansion") {
  const Planted p;
  CHECK(*knn_expand("bicycle", p.vocab, p.emb, 1) == std::set<std::string>{"bicycle"});
  CHECK(*knn_expand("bicycle", p.vocab, p.emb, 2) == std::set<std::string>{"bicycle", "bike"});
  CHECK(*knn_expand("bicycle", p.vocab, p.emb, 3) == std::set<std::string>{"bicycle", "bike", "rack"});
  // Compound: one neighbour per part at k = 3.
  CHECK(*knn_expand("fire dog", p.vocab, p.emb, 3) == std::set<std::string>{"fire", "hydrant", "dog", "cat"});
  CHECK(*knn_expand("fire dog", p.vocab, p.emb, 2) == std::set<std::string>{"fire", "dog"});
  CHECK_FALSE(knn_expand("traffic light", p.vocab, p.emb, 5).has_value());
  CHECK(knn_expand("traffic light", p.vocab, p.emb, 1).has_value());
  CHECK_THROWS_AS(knn_expand("dog", p.vocab, p.emb, 0), DomainError);
  CHECK_THROWS_AS(knn_expand("dog", p.vocab, DenseArray({3, 3}), 2), DimensionError);

  for (std::size_t k = 1; k < 8; ++k) {
    const auto a = *knn_expand("dog", p.vocab, p.emb, k), b = *knn_expand("dog", p.vocab, p.emb, k + 1);
    CHECK(std::includes(b.begin(), b.end(), a.begin(), a.end()));
    CHECK(a.size() == std::min<std::size_t>(k, p.vocab.size() - 2));
  }
}

TEST_CASE("controllability: compound rule, distinct mode and exclusions") {
  const Planted p;
  const std::map<std::int64_t, std::string> cats{{1, "bicycle"}, {2, "fire hydrant"}, {3, "traffic light"}};
  const auto k1 = build_lexicon(cats, p.vocab, p.emb, 1);
  const auto k3 = build_lexicon(cats, p.vocab, p.emb, 3);
  CHECK(k1.unexpandable.empty());
  CHECK(k3.unexpandable == std::set<std::int64_t>{3});

  CHECK_FALSE(caption_matches(tokenize("a red fire truck"), 2, k1));
  CHECK(caption_matches(tokenize("a red fire hydrant"), 2, k1));
  CHECK(caption_matches(tokenize("a bike"), 1, k3));
  CHECK_FALSE(caption_matches(tokenize("a bike"), 1, k1));

  const std::vector<CaptionRecord> records{
      record(2, "unlimited", "a red fire hydrant", "a street", "a street"),
      record(2, "unlimited", "a fire", "a street", "a street"),
      record(1, "unlimited", "a bicycle", "a street", "a bicycle"),
      record(3, "unlimited", "a traffic light", "a street", "a street"),
  };
  const auto all = controllability_report(records, k1, false);
  REQUIRE(all.rows.size() == 1);
  CHECK(all.rows[0].overall == Count{3, 4});
  CHECK(all.rows[0].all_records == 4);
  const auto distinct = controllability_report(records, k1, true);
  CHECK(distinct.rows[0].overall == Count{2, 3});
  const auto wide = controllability_report(records, k3, false);
  CHECK(wide.excluded_categories == std::vector<std::int64_t>{3});
  CHECK(wide.rows[0].all_records == 3);
  CHECK(wide.rows[0].overall == Count{3, 3});

  CHECK(controllability_report({}, k1, true).rows.empty());

  // Category ordering: percentage, then matches, then id.
  REQUIRE(all.rows[0].categories.size() == 3);
  CHECK(all.rows[0].categories[0].id == 1);
  CHECK(all.rows[0].categories[1].id == 3);
  CHECK(all.rows[0].categories[2].id == 2);
  const auto table = format_category_table(all, "unlimited");
  CHECK(table.find("fire hydrant") != std::string::npos);
  const auto summary = format_controllability({all, distinct, wide});
  CHECK(summary.find("75.00") != std::string::npos);
  CHECK(summary.find("k@3 excluded categories (not expandable): 3") != std::string::npos);
  const auto j = nlohmann::json::parse(controllability_json({distinct}));
  CHECK(j[0]["distinct"] == true);
  CHECK(j[0]["methods"][0]["overall"]["den"] == 3);
}

TEST_CASE("bicycle box caption: matched at k@1, discarded in distinct k@5") {
  const Planted p;
  const std::map<std::int64_t, std::string> cats{{2, "bicycle"}};
  const auto r = record(2, "unlimited", "a bicycle is parked next to a bike rack", "a red car parked on the street",
                        "a bike parked on the street");
  const auto k1 = build_lexicon(cats, p.vocab, p.emb, 1);
  const auto k5 = build_lexicon(cats, p.vocab, p.emb, 5);
  CHECK(controllability_report({r}, k1, false).rows[0].overall == Count{1, 1});
  CHECK(controllability_report({r}, k1, true).rows[0].overall == Count{1, 1});
  CHECK(controllability_report({r}, k5, false).rows[0].overall == Count{1, 1});
  CHECK(controllability_report({r}, k5, true).rows[0].overall == Count{0, 0});
  const auto sens = sensitivity_report({r});
  CHECK(sens[0].general.pct() == 100.0);
  CHECK(sens[0].specific.pct() == 100.0);
}

TEST_CASE("usefulness worked example and row layout") {
  QaCaptionRecord r;
  r.method = "unlimited";
  r.level = "word";
  r.caption = tokenize("a bicycle is parked next to a bike");
  r.question = tokenize("What is the dog doing?");
  r.answer = tokenize("sleeping");
  CHECK(content_word_set(r.caption) == std::set<std::string>{"bicycl", "bike", "next", "park"});

  QaCaptionRecord hit = r;
  hit.level = "phrase";
  hit.caption = tokenize("a dog sleeps on a couch");
  QaCaptionRecord ans = r;
  ans.method = "self";
  ans.level = "";
  ans.caption = tokenize("a cat sleeping");

  const auto rows = usefulness_report({r, hit, ans});
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].method == "unlimited");
  CHECK(rows[0].level == "word");
  CHECK(rows[0].either == Count{0, 1});
  CHECK(rows[1].question == Count{1, 1});
  CHECK(rows[1].answer == Count{1, 1});
  CHECK(rows[2].either == Count{0, 0});
  CHECK(rows[3].method == "self");
  CHECK(rows[3].answer == Count{1, 1});
  CHECK(rows[3].question == Count{0, 1});
}

TEST_CASE("reports match a naive recount and ignore record order") {
  testutil::Rng rng(5);
  const Words lexicon{"a", "dog", "cat", "bicycle", "bike", "fire", "hydrant", "red", "on"};
  const Words methods{"unlimited", "limited-3", "additive-1"};
  const Planted p;
  const std::map<std::int64_t, std::string> cats{{1, "bicycle"}, {2, "fire hydrant"}, {3, "dog"}};
  std::vector<CaptionRecord> records;
  for (int i = 0; i < 50; ++i) {
    CaptionRecord r;
    r.ann_id = i;
    r.category_id = 1 + static_cast<std::int64_t>(rng.below(3));
    r.method = methods[rng.below(methods.size())];
    r.box = random_words(rng, 5, lexicon);
    r.control = random_words(rng, 5, lexicon);
    r.self = random_words(rng, 5, lexicon);
    if (rng.below(3) == 0) r.box = r.self;
    records.push_back(r);
  }

  const auto lex = build_lexicon(cats, p.vocab, p.emb, 1);
  const auto sens = sensitivity_report(records, methods);
  const auto ctrl = controllability_report(records, lex, true, methods);
  for (std::size_t m = 0; m < methods.size(); ++m) {
    Count general, distinct;
    for (const auto& r : records) {
      if (r.method != methods[m]) continue;
      ++general.den;
      if (r.box != r.self) ++general.num;
      const auto& name = cats.at(r.category_id);
      const auto has_all = [&](const Words& cap) {
        for (const auto& part : tokenize(name)) {
          if (std::find(cap.begin(), cap.end(), part) == cap.end()) return false;
        }
        return true;
      };
      if (has_all(r.self)) continue;
      ++distinct.den;
      if (has_all(r.box)) ++distinct.num;
    }
    CHECK(sens[m].general == general);
    CHECK(ctrl.rows[m].overall == distinct);
  }

  auto shuffled = records;
  std::reverse(shuffled.begin(), shuffled.end());
  std::swap(shuffled[3], shuffled[17]);
  CHECK(sensitivity_json(sensitivity_report(shuffled, methods)) == sensitivity_json(sens));
  CHECK(controllability_json({controllability_report(shuffled, lex, true, methods)}) == controllability_json({ctrl}));
}
