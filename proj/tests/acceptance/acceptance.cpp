// Acceptance checks, one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck_cases.hpp"
#include "paper_fixtures.hpp"

#include "attnctl/boxes.hpp"
#include "attnctl/captioner.hpp"
#include "attnctl/interface.hpp"
#include "attnctl/metrics.hpp"
#include "attnctl/pipeline.hpp"
#include "attnctl/rng.hpp"
#include "attnctl/text.hpp"
#include "attnctl/vqa.hpp"

using namespace attnctl;
namespace fs = std::filesystem;

namespace {

// ---- pinned tolerances and thresholds -------------------------------------

constexpr double kGradTolerance = 1e-4;
constexpr double kGradBudgetSeconds = 60.0;
constexpr double kSimplexTolerance = 1e-9;
constexpr double kIdentityTolerance = 1e-12;
constexpr double kClosedFormTolerance = 1e-12;
constexpr double kBleuTolerance = 1e-9;
constexpr double kMinTokenAccuracy = 0.90;
constexpr std::size_t kMaxCaptionEpochs = 50;
constexpr double kControllabilityMargin = 20.0;  // percentage points
constexpr double kPipelineBudgetSeconds = 15.0 * 60.0;

constexpr std::size_t kSimplexTrials = 1000;
constexpr std::size_t kIdentityPairs = 100;
constexpr std::size_t kWerPairs = 500;
constexpr std::size_t kRecountRecords = 50;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

DenseArray random_array(Shape shape, Rng& rng, double lo, double hi) {
  DenseArray a(std::move(shape));
  for (auto& v : a.storage()) v = rng.uniform(lo, hi);
  return a;
}

DenseArray random_simplex(std::size_t n, Rng& rng) {
  DenseArray a({n});
  double s = 0.0;
  for (auto& v : a.storage()) s += (v = 0.05 + rng.uniform(0.0, 1.0));
  for (auto& v : a.storage()) v /= s;
  return a;
}

Captioner random_captioner(const CaptionerConfig& cfg, Rng& rng, double scale) {
  ParameterStore store;
  for (const auto& [name, shape] : captioner_parameter_shapes(cfg)) store.add(name, random_array(shape, rng, -scale, scale));
  return Captioner(cfg, std::move(store));
}

double max_abs_diff(const DenseArray& a, const DenseArray& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.storage()[i] - b.storage()[i]));
  return m;
}

bool strict_simplex(const DenseArray& v) { return is_simplex(v, kSimplexTolerance, true); }

// ---- 1: gradients ---------------------------------------------------------

Outcome gradient_correctness() {
  Outcome o;
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (const auto& r : {gradcases::captioner_gradcheck(seed), gradcases::vqa_gradcheck(seed)}) {
      worst = std::max(worst, r.max_relative_error);
      o.require(r.max_relative_error < kGradTolerance,
                "seed " + std::to_string(seed) + " " + r.worst_entry + fmt(" rel err %.2e", r.max_relative_error));
    }
  }
  const double secs = seconds_since(t0);
  o.require(secs < kGradBudgetSeconds, fmt("took %.1f s", secs));
  if (o.pass) o.detail = "captioner + VQA, seeds 1-3, worst rel err " + fmt("%.2e", worst) + fmt(", %.1f s", secs);
  return o;
}

// ---- 2: simplexes ---------------------------------------------------------

Outcome simplex_suite() {
  Outcome o;
  Rng rng(2024);
  std::size_t vectors = 0;
  for (std::size_t trial = 0; trial < kSimplexTrials; ++trial) {
    // Captioner attention.
    CaptionerConfig cc;
    const std::size_t g = 1 + rng.below(6);
    cc.regions = g * g;
    cc.feature_dim = 1 + rng.below(5);
    cc.hidden_dim = 2 * cc.feature_dim;
    cc.vocab_size = 3 + rng.below(5);
    const auto cap = random_captioner(cc, rng, 0.1 + rng.uniform(0.0, 3.0));
    ImageAnnotation img{random_array({cc.regions, cc.feature_dim}, rng, -3.0, 3.0)};
    const auto alpha = cap.attend(img, random_array({cc.hidden_dim}, rng, -1.0, 1.0));
    o.require(strict_simplex(alpha), "attend output");

    // Interface variants.
    const auto ext = random_simplex(cc.regions, rng);
    const std::size_t t = 1 + rng.below(20);
    const InterfaceMethod methods[] = {SelfAttending{}, Unlimited{ext}, Limited{ext, rng.below(10)},
                                       Additive{ext, rng.uniform(0.0, 10.0)}, ControlUniform{}};
    for (const auto& m : methods) o.require(strict_simplex(effective_attention(t, alpha, m)), "effective_attention");

    // Box attention.
    const std::int64_t w = 32 + static_cast<std::int64_t>(rng.below(600));
    const std::int64_t h = 32 + static_cast<std::int64_t>(rng.below(600));
    BoundingBox b;
    b.x = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(w)));
    b.y = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(h)));
    b.w = 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(w)));
    b.h = 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(h)));
    o.require(strict_simplex(box_to_attention(b, w, h, 14, rng.uniform(0.2, 2.0))), "box_to_attention");

    // Co-attention softmaxes.
    const std::size_t T = 1 + rng.below(8), L = 1 + rng.below(30), D = 1 + rng.below(6);
    const std::size_t active = 1 + rng.below(T);
    const double s = rng.uniform(0.1, 3.0);
    const auto wc = random_array({D, D}, rng, -s, s), wv = random_array({D, D}, rng, -s, s),
               wq = random_array({D, D}, rng, -s, s);
    const auto co = parallel_coattention(random_array({T, D}, rng, -2.0, 2.0), active,
                                         random_array({L, D}, rng, -2.0, 2.0), {wc, wv, wq});
    o.require(strict_simplex(co.alpha_v), "co-attention alpha_v");
    DenseArray head({active}, std::vector<double>(co.alpha_q.storage().begin(), co.alpha_q.storage().begin() + active));
    o.require(strict_simplex(head), "co-attention alpha_q");
    for (std::size_t i = active; i < T; ++i) o.require(co.alpha_q[i] == 0.0, "alpha_q padding");
    vectors += 1 + 5 + 1 + 2;
  }
  if (o.pass) o.detail = std::to_string(vectors) + " vectors over " + std::to_string(kSimplexTrials) + " random inputs";
  return o;
}

// ---- 3: interface identities ----------------------------------------------

Outcome interface_identities() {
  Outcome o;
  Rng rng(77);
  double worst = 0.0;
  for (std::size_t pair = 0; pair < kIdentityPairs; ++pair) {
    CaptionerConfig cc;
    const std::size_t g = 2 + rng.below(5);
    cc.regions = g * g;
    cc.feature_dim = 2 + rng.below(4);
    cc.hidden_dim = 2 * cc.feature_dim;
    cc.vocab_size = 4 + rng.below(8);
    cc.max_len = 8;
    const auto cap = random_captioner(cc, rng, 1.0);
    const ImageAnnotation img{random_array({cc.regions, cc.feature_dim}, rng, -2.0, 2.0)};
    const auto ext = random_simplex(cc.regions, rng);

    const auto self = cap.greedy_decode(img, SelfAttending{});
    const auto compare = [&](const DecodeResult& a, const DecodeResult& b, const char* what) {
      o.require(a.tokens.ids == b.tokens.ids, std::string(what) + ": captions differ");
      o.require(a.contexts.size() == b.contexts.size(), std::string(what) + ": lengths differ");
      for (std::size_t t = 0; t < std::min(a.contexts.size(), b.contexts.size()); ++t) {
        const double d = max_abs_diff(a.contexts[t], b.contexts[t]);
        worst = std::max(worst, d);
        o.require(d <= kIdentityTolerance, std::string(what) + fmt(": z differs by %.2e", d));
      }
    };
    compare(cap.greedy_decode(img, Additive{ext, 0.0}), self, "additive(0) vs self");
    compare(cap.greedy_decode(img, Limited{ext, 0}), self, "limited(0) vs self");
    compare(cap.greedy_decode(img, ControlUniform{}), cap.greedy_decode(img, Unlimited{uniform_attention(cc.regions)}),
            "control vs unlimited(uniform)");
  }
  if (o.pass) o.detail = std::to_string(kIdentityPairs) + " model/input pairs, max z diff " + fmt("%.1e", worst);
  return o;
}

// ---- 4: box closed forms --------------------------------------------------

Outcome box_closed_forms() {
  Outcome o;
  BoundingBox whole{0, 0, 448, 448, 0, 0, 0};
  const auto uniform = box_to_attention(whole, 448, 448);
  for (double v : uniform.storage()) {
    o.require(std::abs(v - 1.0 / 196.0) <= kClosedFormTolerance, "whole-image box not uniform");
  }
  BoundingBox quarter{0, 0, 224, 224, 0, 0, 0};
  const auto q = box_to_attention(quarter, 448, 448);
  const double e = std::exp(1.0), denom = 49.0 * e + 147.0;
  for (std::size_t r = 0; r < 14; ++r) {
    for (std::size_t c = 0; c < 14; ++c) {
      const double expected = (r < 7 && c < 7) ? e / denom : 1.0 / denom;
      o.require(std::abs(q[r * 14 + c] - expected) <= kClosedFormTolerance, "quarter box closed form");
    }
  }
  double inside = 0.0;
  for (std::size_t r = 0; r < 7; ++r) {
    for (std::size_t c = 0; c < 7; ++c) inside += q[r * 14 + c];
  }
  o.require(std::abs(inside - 49.0 * e / denom) <= kClosedFormTolerance, "quarter box mass");

  const BoxFilterRule rule = with_cell_floor({54.45, 62.85, 0.0, 0.0}, 448, 448, 14);
  const auto keep = [&](std::int64_t w, std::int64_t h) { return keep_box({0, 0, w, h, 0, 0, 0}, rule); };
  o.require(!keep(50, 70), "50x70 kept");
  o.require(!keep(54, 63), "54x63 kept");
  o.require(!keep(55, 62), "55x62 kept");
  o.require(keep(55, 63), "55x63 dropped");
  o.require(keep(300, 400), "300x400 dropped");
  const BoxFilterRule floor_only = with_cell_floor({}, 448, 448, 14);
  o.require(!keep_box({0, 0, 31, 31, 0, 0, 0}, floor_only) && keep_box({0, 0, 32, 32, 0, 0, 0}, floor_only),
            "32 px cell floor");
  if (o.pass) o.detail = "uniform 1/196, 49e/(49e+147), medians 54.45/62.85 with 32 px floor";
  return o;
}

// ---- 5: metric oracles ----------------------------------------------------

using Words = std::vector<std::string>;

std::size_t levenshtein(const Words& a, const Words& b) {
  std::function<std::size_t(std::size_t, std::size_t)> go;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  go = [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == 0) return j;
    if (j == 0) return i;
    auto it = memo.find({i, j});
    if (it != memo.end()) return it->second;
    const std::size_t r = std::min({go(i - 1, j - 1) + (a[i - 1] == b[j - 1] ? 0u : 1u), go(i - 1, j) + 1,
                                    go(i, j - 1) + 1});
    return memo[{i, j}] = r;
  };
  return go(a.size(), b.size());
}

Words random_words(Rng& rng, std::size_t max_len, const Words& lexicon) {
  Words out;
  const auto n = rng.below(max_len + 1);
  for (std::uint64_t i = 0; i < n; ++i) out.push_back(lexicon[rng.below(lexicon.size())]);
  return out;
}

bool contains(const Words& caption, const std::string& w) {
  return std::find(caption.begin(), caption.end(), w) != caption.end();
}

Outcome metric_oracles() {
  Outcome o;
  Rng rng(5);
  const Words lexicon{"a", "dog", "cat", "bicycle", "bike", "fire", "hydrant", "sleeping", "on", "the"};
  for (std::size_t i = 0; i < kWerPairs; ++i) {
    const auto a = random_words(rng, 10, lexicon), b = random_words(rng, 10, lexicon);
    o.require(edit_distance(a, b) == levenshtein(a, b), "edit distance");
    if (!a.empty()) {
      o.require(wer(a, b) == static_cast<double>(levenshtein(a, b)) / static_cast<double>(a.size()), "wer");
    }
  }

  const auto bleu = corpus_bleu({{tokenize("the cat is on the mat")}}, {tokenize("the cat sat on the mat")});
  o.require(std::abs(bleu.scores[0] - 100.0 * 5.0 / 6.0) <= kBleuTolerance, "BLEU-1");
  o.require(std::abs(bleu.scores[1] - 100.0 * std::sqrt(0.5)) <= kBleuTolerance, "BLEU-2");
  o.require(std::abs(bleu.scores[2] - 50.0) <= kBleuTolerance, "BLEU-3");
  o.require(bleu.scores[3] == 0.0, "BLEU-4");
  const auto brev = corpus_bleu({{tokenize("the cat sat")}}, {tokenize("the cat")}, 2);
  o.require(std::abs(brev.scores[1] - 100.0 * std::exp(-0.5)) <= kBleuTolerance, "BLEU brevity");
  const auto clip = corpus_bleu({{tokenize("the cat")}}, {tokenize("the the the")}, 1);
  o.require(std::abs(clip.scores[0] - 100.0 / 3.0) <= kBleuTolerance, "BLEU clipping");
  const auto two = corpus_bleu({{tokenize("a b c")}, {tokenize("x y")}}, {tokenize("a b d"), tokenize("x y")}, 2);
  // unigrams 4/5, bigrams 2/3 (a b, x y of a b, b d, x y)
  o.require(std::abs(two.scores[1] - 100.0 * std::sqrt(0.8 * 2.0 / 3.0)) <= kBleuTolerance, "BLEU corpus pooling");

  // 50-record naive recount.
  const Words methods{"unlimited", "limited-3", "additive-1"};
  const std::map<std::int64_t, std::string> cats{{1, "bicycle"}, {2, "fire hydrant"}, {3, "dog"}};
  const Vocabulary vocab(Words{"bicycle", "bike", "dog", "cat", "fire", "hydrant", "sleeping", "on", "the", "a"});
  std::vector<CaptionRecord> records;
  std::vector<QaCaptionRecord> qa;
  for (std::size_t i = 0; i < kRecountRecords; ++i) {
    CaptionRecord r;
    r.ann_id = static_cast<std::int64_t>(i);
    r.category_id = 1 + static_cast<std::int64_t>(rng.below(3));
    r.method = methods[rng.below(methods.size())];
    r.box = random_words(rng, 6, lexicon);
    r.control = random_words(rng, 6, lexicon);
    r.self = random_words(rng, 6, lexicon);
    if (rng.below(4) == 0) r.box = r.self;
    if (rng.below(4) == 0) r.box = r.control;
    records.push_back(r);

    QaCaptionRecord q;
    q.question_id = static_cast<std::int64_t>(i);
    const std::size_t m = rng.below(methods.size() + 2);
    q.method = m < methods.size() ? methods[m] : (m == methods.size() ? "control" : "self");
    static const char* levels[] = {"word", "phrase", "question"};
    q.level = m < methods.size() ? levels[rng.below(3)] : "";
    q.caption = random_words(rng, 6, lexicon);
    q.question = random_words(rng, 4, lexicon);
    q.answer = random_words(rng, 2, lexicon);
    qa.push_back(q);
  }

  const auto sens = sensitivity_report(records, methods);
  const auto lex = build_lexicon(cats, vocab, DenseArray({vocab.output_classes(), 2}, 1.0), 1);
  for (bool distinct : {false, true}) {
    const auto ctrl = controllability_report(records, lex, distinct, methods);
    for (std::size_t m = 0; m < methods.size(); ++m) {
      Count g, s, c;
      for (const auto& r : records) {
        if (r.method != methods[m]) continue;
        ++g.den;
        ++s.den;
        g.num += r.box != r.self;
        s.num += r.box != r.control;
        const auto parts = tokenize(cats.at(r.category_id));
        const auto all_in = [&](const Words& cap) {
          return std::all_of(parts.begin(), parts.end(), [&](const std::string& p) { return contains(cap, p); });
        };
        if (distinct && all_in(r.self)) continue;
        ++c.den;
        c.num += all_in(r.box);
      }
      if (!distinct) {
        o.require(sens[m].general == g && sens[m].specific == s, "sensitivity recount " + methods[m]);
      }
      o.require(ctrl.rows[m].overall == c, "controllability recount " + methods[m]);
    }
  }

  const auto useful = usefulness_report(qa, methods);
  for (const auto& row : useful) {
    Count a, q, e;
    for (const auto& r : qa) {
      if (r.method != row.method || r.level != row.level) continue;
      std::set<std::string> cap, qs, as;
      for (const auto& w : r.caption) {
        if (!is_stopword(w)) cap.insert(porter_stem(w));
      }
      for (const auto& w : r.question) {
        if (!is_stopword(w)) qs.insert(porter_stem(w));
      }
      for (const auto& w : r.answer) {
        if (!is_stopword(w)) as.insert(porter_stem(w));
      }
      bool in_a = false, in_q = false;
      for (const auto& w : cap) {
        in_a = in_a || as.count(w);
        in_q = in_q || qs.count(w);
      }
      ++a.den;
      ++q.den;
      ++e.den;
      a.num += in_a;
      q.num += in_q;
      e.num += in_a || in_q;
    }
    o.require(row.answer == a && row.question == q && row.either == e,
              "usefulness recount " + row.method + "/" + row.level);
  }
  if (o.pass) {
    o.detail = std::to_string(kWerPairs) + " WER pairs, 5 BLEU fixtures, " + std::to_string(kRecountRecords) +
               "-record recounts";
  }
  return o;
}

// ---- 6: paper arithmetic --------------------------------------------------

Outcome paper_arithmetic() {
  Outcome o;
  std::size_t cells = 0;

  std::vector<SensitivityRow> sens;
  const auto& sc = fixtures::sensitivity_cells();
  for (std::size_t i = 0; i + 1 < sc.size(); i += 2) {
    SensitivityRow row;
    row.method = sc[i].label.substr(0, sc[i].label.find(' '));
    row.general = {fixtures::numerator_for(sc[i].pct, sc[i].den), sc[i].den};
    row.specific = {fixtures::numerator_for(sc[i + 1].pct, sc[i + 1].den), sc[i + 1].den};
    sens.push_back(row);
  }
  const auto sens_text = format_sensitivity(sens);
  for (const auto& c : sc) {
    const auto n = fixtures::numerator_for(c.pct, c.den);
    o.require(sens_text.find(c.pct + " (") != std::string::npos &&
                  sens_text.find(std::to_string(n) + "/" + std::to_string(c.den)) != std::string::npos,
              "sensitivity " + c.label);
    ++cells;
  }

  const auto& cc = fixtures::controllability_cells();
  std::vector<ControllabilityReport> reports(4);
  for (std::size_t i = 0; i < 4; ++i) {
    reports[i].k = i % 2 == 0 ? 1 : 5;
    reports[i].distinct = i >= 2;
    ControllabilityRow row;
    row.method = "unlimited";
    row.overall = {fixtures::numerator_for(cc[i].pct, cc[i].den), cc[i].den};
    reports[i].rows.push_back(row);
  }
  const auto ctrl_text = format_controllability(reports);
  for (const auto& c : cc) {
    o.require(ctrl_text.find(" " + c.pct) != std::string::npos, "controllability " + c.label);
    ++cells;
  }

  std::vector<UsefulnessRow> useful;
  const std::size_t d = fixtures::kOtherQuestions;
  for (const auto& f : fixtures::usefulness_rows()) useful.push_back({f.method, f.level, {f.answer, d}, {f.question, d}, {f.either, d}});
  const auto use_text = format_usefulness(useful);
  std::istringstream lines(use_text);
  std::string line;
  std::getline(lines, line);  // header
  for (const auto& f : fixtures::usefulness_rows()) {
    std::getline(lines, line);
    const auto cell = [&](const std::string& pct, std::size_t n) { return pct + " % " + std::to_string(n) + "/" + std::to_string(d); };
    o.require(line.find(cell(f.answer_pct, f.answer)) != std::string::npos &&
                  line.find(cell(f.question_pct, f.question)) != std::string::npos &&
                  line.find(cell(f.either_pct, f.either)) != std::string::npos,
              "usefulness " + f.method + "/" + f.level);
    cells += 3;
  }
  if (o.pass) o.detail = std::to_string(cells) + " table cells (88.68/52.65, 28.56/58.17/9.00/21.39, 26.45/38.96/55.20)";
  return o;
}

// ---- 7: worked examples ---------------------------------------------------

Outcome worked_examples() {
  Outcome o;
  const Vocabulary vocab(Words{"bicycle", "bike", "rack", "dog", "street"});
  DenseArray emb({vocab.output_classes(), 2});
  const auto set = [&](const char* w, double x, double y) {
    emb.row(*vocab.id_of(w))[0] = x;
    emb.row(*vocab.id_of(w))[1] = y;
  };
  set("bicycle", 1.0, 0.0);
  set("bike", 0.9, 0.1);
  set("rack", 0.7, 0.4);
  set("dog", 0.0, 1.0);
  set("street", -1.0, 0.2);

  CaptionRecord r;
  r.category_id = 2;
  r.method = "unlimited";
  r.box = tokenize("a bicycle is parked next to a bike rack");
  r.control = tokenize("a dog is sitting on the street");
  r.self = tokenize("a dog is laying next to a bike");
  const std::map<std::int64_t, std::string> cats{{2, "bicycle"}};
  const auto k1 = build_lexicon(cats, vocab, emb, 1), k5 = build_lexicon(cats, vocab, emb, 5);
  const auto sens = sensitivity_report({r});
  o.require(sens[0].general.pct() == 100.0 && sens[0].specific.pct() == 100.0, "sensitivity 100%");
  o.require(controllability_report({r}, k1, false).rows[0].overall == Count{1, 1}, "k@1 match");
  o.require(controllability_report({r}, k1, true).rows[0].overall == Count{1, 1}, "distinct k@1 keeps");
  o.require(controllability_report({r}, k5, false).rows[0].overall == Count{1, 1}, "k@5 match");
  o.require(controllability_report({r}, k5, true).rows[0].overall == Count{0, 0}, "distinct k@5 discards");

  QaCaptionRecord q;
  q.method = "unlimited";
  q.level = "word";
  q.caption = tokenize("a bicycle is parked next to a bike");
  q.question = tokenize("What is the dog doing?");
  q.answer = tokenize("sleeping");
  o.require(content_word_set(q.caption) == std::set<std::string>{"bicycl", "bike", "next", "park"}, "caption set");
  o.require(content_word_set(q.question) == std::set<std::string>{"dog"}, "question set");
  o.require(content_word_set(q.answer) == std::set<std::string>{"sleep"}, "answer set");
  const auto row = usefulness_report({q})[0];
  o.require(row.answer == Count{0, 1} && row.question == Count{0, 1} && row.either == Count{0, 1}, "usefulness");
  if (o.pass) o.detail = "bicycle box caption and stemmed-set example";
  return o;
}

// ---- 8 and 9: pipeline ------------------------------------------------------

PipelineConfig toy_config(const fs::path& dir) {
  PipelineConfig c;
  c.dir = dir;
  c.synth.seed = 1;
  c.synth.scenes = 500;
  c.captioner.seed = 1;
  c.captioner.epochs = 30;
  c.captioner.patience = 0;
  c.captioner.adam.lr = 3e-3;
  c.vqa.seed = 1;
  c.vqa.epochs = 15;
  c.vqa.patience = 0;
  return c;
}

const Count* usefulness_cell(const std::vector<UsefulnessRow>& rows, const std::string& method,
                             const std::string& level) {
  for (const auto& r : rows) {
    if (r.method == method && r.level == level) return &r.either;
  }
  return nullptr;
}

Outcome toy_behaviour(const PipelineResult& r) {
  Outcome o;
  std::ostringstream d;
  const double acc = r.captioner_best.val_accuracy;
  d << "val token acc " << fmt("%.3f", acc) << " (epoch " << r.captioner_best_epoch << ")";
  o.require(acc >= kMinTokenAccuracy && r.captioner_best_epoch <= kMaxCaptionEpochs,
            "token accuracy " + fmt("%.3f", acc));

  const ControllabilityReport* k1 = nullptr;
  for (const auto& rep : r.exp1.controllability) {
    if (rep.k == 1 && !rep.distinct) k1 = &rep;
  }
  double unlimited = -1.0, control = -1.0;
  if (k1) {
    for (const auto& row : k1->rows) {
      if (row.method == "unlimited") unlimited = row.overall.pct();
      if (row.method == "control") control = row.overall.pct();
    }
  }
  d << "; k@1 unlimited " << fmt("%.2f", unlimited) << " vs control " << fmt("%.2f", control);
  o.require(unlimited >= 0.0 && control >= 0.0 && unlimited >= control + kControllabilityMargin,
            "controllability margin: unlimited " + fmt("%.2f", unlimited) + " control " + fmt("%.2f", control));

  for (const auto& m : r.exp2.usefulness) {
    if (m.level != "word") continue;
    const Count* word = usefulness_cell(r.exp2.usefulness, m.method, "word");
    const Count* phrase = usefulness_cell(r.exp2.usefulness, m.method, "phrase");
    d << "; " << m.method << " word/phrase either " << fmt("%.2f", word->pct()) << "/" << fmt("%.2f", phrase->pct());
    o.require(word->num >= phrase->num,
              m.method + " word " + fmt("%.2f", word->pct()) + " < phrase " + fmt("%.2f", phrase->pct()));
  }
  d << "; " << fmt("%.0f s", r.seconds);
  o.require(r.seconds < kPipelineBudgetSeconds, fmt("pipeline took %.0f s", r.seconds));
  if (o.pass) {
    o.detail = d.str();
  } else {
    o.detail += " [" + d.str() + "]";
  }
  return o;
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), root).string()] = ss.str();
  }
  return out;
}

Outcome determinism(const fs::path& a, const fs::path& b) {
  Outcome o;
  const auto ta = tree_bytes(a), tb = tree_bytes(b);
  o.require(ta.size() == tb.size(), "file sets differ");
  for (const auto& [name, bytes] : ta) {
    auto it = tb.find(name);
    o.require(it != tb.end() && it->second == bytes, name + " differs");
  }
  for (const char* must : {"vocab.txt", "captioner.satc", "vqa.satc", "exp1/exp1_captions.jsonl",
                           "exp1/exp1_report.txt", "exp2/exp2_captions.jsonl", "exp2/exp2_report.json"}) {
    o.require(ta.count(must) == 1, std::string("missing ") + must);
  }
  if (o.pass) o.detail = std::to_string(ta.size()) + " files byte-identical across two runs";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "attnctl_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  bool all = true;
  const auto report = [&](int id, const char* name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("threw: ") + e.what();
    }
    std::printf("criterion %d: %s - %s (%s)\n", id, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    all = all && o.pass;
  };

  report(1, "gradient correctness", gradient_correctness);
  report(2, "simplex suite", simplex_suite);
  report(3, "interface identities", interface_identities);
  report(4, "box closed forms", box_closed_forms);
  report(5, "metric oracles", metric_oracles);
  report(6, "paper arithmetic fixtures", paper_arithmetic);
  report(7, "worked examples", worked_examples);
  report(8, "end-to-end toy behaviour", [&] { return toy_behaviour(run_pipeline(toy_config(work / "run_a"))); });
  report(9, "determinism", [&] {
    run_pipeline(toy_config(work / "run_b"));
    return determinism(work / "run_a", work / "run_b");
  });

  return all ? 0 : 1;
}
