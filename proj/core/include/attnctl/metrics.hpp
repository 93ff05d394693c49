#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "attnctl/tensor.hpp"
#include "attnctl/text.hpp"

namespace attnctl {

using Tokens = std::vector<std::string>;

/// True when the sequences differ at any position or in length.
bool word_diff(const Tokens& a, const Tokens& b);

/// Word-level Levenshtein distance with unit costs.
std::size_t edit_distance(const Tokens& reference, const Tokens& hypothesis);
/// edit_distance / |reference|; DomainError for an empty reference.
double wer(const Tokens& reference, const Tokens& hypothesis);

/// round(100 * num / den, 2); 0 when den is 0.
double percent(std::size_t num, std::size_t den);
std::string format_percent(double pct);

struct Count {
  std::size_t num = 0;
  std::size_t den = 0;
  double pct() const { return percent(num, den); }
  friend bool operator==(const Count&, const Count&) = default;
};

// ---- BLEU -----------------------------------------------------------------

struct BleuResult {
  std::vector<double> scores;        // BLEU-1..max_n in [0, 100]
  std::vector<std::size_t> matches;  // clipped n-gram matches per order
  std::vector<std::size_t> totals;   // hypothesis n-grams per order
  std::size_t hypothesis_length = 0;
  std::size_t reference_length = 0;  // closest reference length, ties to the shorter
  double brevity_penalty = 1.0;
};

/// Corpus BLEU without smoothing.
BleuResult corpus_bleu(const std::vector<std::vector<Tokens>>& references, const std::vector<Tokens>& hypotheses,
                       std::size_t max_n = 4);

// ---- experiment 1 ---------------------------------------------------------

/// One box caption together with the control and self-attending captions of
/// its image.
struct CaptionRecord {
  std::int64_t image_id = 0;
  std::int64_t ann_id = 0;
  std::int64_t category_id = 0;
  std::string method;
  Tokens box, control, self;
};

struct SensitivityRow {
  std::string method;
  Count general;   // box differs from self
  Count specific;  // box differs from control
  double mean_wer_general = 0.0;
  double mean_wer_specific = 0.0;
};

/// One row per method, ordered as in `method_order` then lexicographically.
std::vector<SensitivityRow> sensitivity_report(const std::vector<CaptionRecord>& records,
                                               const std::vector<std::string>& method_order = {});

/// Per-category expansion word sets for one k.
struct CategoryLexicon {
  std::size_t k = 1;
  std::map<std::int64_t, std::string> names;
  std::map<std::int64_t, Tokens> base;
  std::map<std::int64_t, std::set<std::string>> expanded;
  std::set<std::int64_t> unexpandable;
};

/// Word plus its k-1 nearest vocabulary words by cosine distance over the
/// embedding rows (specials excluded, ties by id). Compound names take
/// floor((k-1)/parts) neighbours per part plus every part. nullopt when k > 1
/// and a part is not in the vocabulary.
std::optional<std::set<std::string>> knn_expand(const std::string& category_name, const Vocabulary& vocab,
                                                const DenseArray& embeddings, std::size_t k);

CategoryLexicon build_lexicon(const std::map<std::int64_t, std::string>& categories, const Vocabulary& vocab,
                              const DenseArray& embeddings, std::size_t k);

/// k = 1: all base words present. k > 1: any expansion word present.
bool caption_matches(const Tokens& caption, std::int64_t category_id, const CategoryLexicon& lexicon);

struct CategoryCount {
  std::int64_t id = 0;
  std::string name;
  Count count;  // matches / records of this category
};

struct ControllabilityRow {
  std::string method;
  std::size_t all_records = 0;  // before the distinct filter
  Count overall;
  std::vector<CategoryCount> categories;  // ordered by percentage, then matches, then id
};

struct ControllabilityReport {
  std::size_t k = 1;
  bool distinct = false;
  std::vector<ControllabilityRow> rows;
  std::vector<std::int64_t> excluded_categories;
};

/// Distinct mode drops records whose self caption already matches.
ControllabilityReport controllability_report(const std::vector<CaptionRecord>& records,
                                             const CategoryLexicon& lexicon, bool distinct,
                                             const std::vector<std::string>& method_order = {});

// ---- experiment 2 ---------------------------------------------------------

struct QaCaptionRecord {
  std::int64_t question_id = 0;
  std::string method;  // "control" and "self" carry no level
  std::string level;
  Tokens caption, question, answer;
};

struct UsefulnessRow {
  std::string method;
  std::string level;
  Count answer, question, either;
};

/// Rows ordered by method order, then word/phrase/question, with control and
/// self last.
std::vector<UsefulnessRow> usefulness_report(const std::vector<QaCaptionRecord>& records,
                                             const std::vector<std::string>& method_order = {});

// ---- formatting -----------------------------------------------------------

std::string format_sensitivity(const std::vector<SensitivityRow>& rows);
std::string sensitivity_json(const std::vector<SensitivityRow>& rows);

/// Overall table with k@1/k@5 and distinct columns. Reports are matched by
/// method label.
std::string format_controllability(const std::vector<ControllabilityReport>& reports);
/// One per-category table (Pos, Id, Name, Matches, %, Total, % of all) per method.
std::string format_category_table(const ControllabilityReport& report, const std::string& method);
std::string controllability_json(const std::vector<ControllabilityReport>& reports);

std::string format_usefulness(const std::vector<UsefulnessRow>& rows);
std::string usefulness_json(const std::vector<UsefulnessRow>& rows);

}  // namespace attnctl
