#include "attnctl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace attnctl {

using nlohmann::ordered_json;

bool word_diff(const Tokens& a, const Tokens& b) { return a != b; }

std::size_t edit_distance(const Tokens& reference, const Tokens& hypothesis) {
  const std::size_t n = reference.size(), m = hypothesis.size();
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (reference[i - 1] == hypothesis[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double wer(const Tokens& reference, const Tokens& hypothesis) {
  if (reference.empty()) throw DomainError("wer: empty reference");
  return static_cast<double>(edit_distance(reference, hypothesis)) / static_cast<double>(reference.size());
}

double percent(std::size_t num, std::size_t den) {
  if (den == 0) return 0.0;
  return std::round(10000.0 * static_cast<double>(num) / static_cast<double>(den)) / 100.0;
}

std::string format_percent(double pct) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", pct);
  return buf;
}

// ---- BLEU -----------------------------------------------------------------

namespace {

using NgramCounts = std::map<Tokens, std::size_t>;

NgramCounts ngrams(const Tokens& words, std::size_t n) {
  NgramCounts out;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    ++out[Tokens(words.begin() + static_cast<std::ptrdiff_t>(i), words.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

}  // namespace

BleuResult corpus_bleu(const std::vector<std::vector<Tokens>>& references, const std::vector<Tokens>& hypotheses,
                       std::size_t max_n) {
  if (hypotheses.empty()) throw DomainError("corpus_bleu: no hypotheses");
  if (references.size() != hypotheses.size()) throw DimensionError("corpus_bleu: reference/hypothesis count mismatch");
  if (max_n == 0) throw DomainError("corpus_bleu: max_n must be positive");
  BleuResult r;
  r.matches.assign(max_n, 0);
  r.totals.assign(max_n, 0);
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const Tokens& hyp = hypotheses[s];
    const auto& refs = references[s];
    if (refs.empty()) throw DomainError("corpus_bleu: hypothesis " + std::to_string(s) + " has no reference");
    r.hypothesis_length += hyp.size();
    std::size_t best = refs[0].size();
    for (const auto& ref : refs) {
      const auto d = [&](std::size_t len) { return len > hyp.size() ? len - hyp.size() : hyp.size() - len; };
      if (d(ref.size()) < d(best) || (d(ref.size()) == d(best) && ref.size() < best)) best = ref.size();
    }
    r.reference_length += best;
    for (std::size_t n = 1; n <= max_n; ++n) {
      const NgramCounts hyp_counts = ngrams(hyp, n);
      NgramCounts max_ref;
      for (const auto& ref : refs) {
        for (const auto& [g, c] : ngrams(ref, n)) max_ref[g] = std::max(max_ref[g], c);
      }
      for (const auto& [g, c] : hyp_counts) {
        auto it = max_ref.find(g);
        r.matches[n - 1] += std::min(c, it == max_ref.end() ? std::size_t{0} : it->second);
        r.totals[n - 1] += c;
      }
    }
  }
  if (r.hypothesis_length == 0) {
    r.brevity_penalty = 0.0;
  } else if (r.hypothesis_length < r.reference_length) {
    r.brevity_penalty = std::exp(1.0 - static_cast<double>(r.reference_length) / static_cast<double>(r.hypothesis_length));
  }
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 1; n <= max_n; ++n) {
    if (r.matches[n - 1] == 0 || r.totals[n - 1] == 0) zero = true;
    if (!zero) log_sum += std::log(static_cast<double>(r.matches[n - 1]) / static_cast<double>(r.totals[n - 1]));
    r.scores.push_back(zero ? 0.0 : 100.0 * r.brevity_penalty * std::exp(log_sum / static_cast<double>(n)));
  }
  return r;
}

// ---- shared helpers --------------------------------------------------------

namespace {

std::vector<std::string> order_labels(const std::set<std::string>& present, const std::vector<std::string>& order) {
  std::vector<std::string> out;
  for (const auto& m : order) {
    if (present.count(m) && std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  for (const auto& m : present) {
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  return out;
}

/// Mean over sorted values.
double stable_mean(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double record_wer(const Tokens& reference, const Tokens& hypothesis) {
  if (reference.empty()) return hypothesis.empty() ? 0.0 : 1.0;
  return wer(reference, hypothesis);
}

bool contains_word(const Tokens& caption, const std::string& word) {
  return std::find(caption.begin(), caption.end(), word) != caption.end();
}

Tokens split_words(const std::string& s) {
  std::istringstream in(s);
  Tokens out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return 1.0;
  return 1.0 - dot(a, b) / (na * nb);
}

std::string pad_right(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string pad_left(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string fraction(const Count& c) { return std::to_string(c.num) + "/" + std::to_string(c.den); }

ordered_json count_json(const Count& c) { return {{"num", c.num}, {"den", c.den}, {"pct", c.pct()}}; }

}  // namespace

// ---- sensitivity ----------------------------------------------------------

std::vector<SensitivityRow> sensitivity_report(const std::vector<CaptionRecord>& records,
                                               const std::vector<std::string>& method_order) {
  std::set<std::string> present;
  for (const auto& r : records) present.insert(r.method);
  std::vector<SensitivityRow> rows;
  for (const auto& method : order_labels(present, method_order)) {
    SensitivityRow row;
    row.method = method;
    std::vector<double> wer_general, wer_specific;
    for (const auto& r : records) {
      if (r.method != method) continue;
      ++row.general.den;
      ++row.specific.den;
      if (word_diff(r.box, r.self)) ++row.general.num;
      if (word_diff(r.box, r.control)) ++row.specific.num;
      wer_general.push_back(record_wer(r.self, r.box));
      wer_specific.push_back(record_wer(r.control, r.box));
    }
    row.mean_wer_general = stable_mean(std::move(wer_general));
    row.mean_wer_specific = stable_mean(std::move(wer_specific));
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---- controllability ------------------------------------------------------

std::optional<std::set<std::string>> knn_expand(const std::string& category_name, const Vocabulary& vocab,
                                                const DenseArray& embeddings, std::size_t k) {
  if (k == 0) throw DomainError("knn_expand: k must be at least 1");
  const Tokens parts = split_words(category_name);
  if (parts.empty()) throw DomainError("knn_expand: empty category name");
  std::set<std::string> out(parts.begin(), parts.end());
  if (k == 1) return out;
  if (embeddings.rank() != 2 || embeddings.rows() != vocab.output_classes()) {
    throw DimensionError("knn_expand: embeddings " + shape_to_string(embeddings.shape()) + " do not match vocabulary");
  }
  const std::size_t per_part = (k - 1) / parts.size();
  for (const auto& part : parts) {
    const auto id = vocab.id_of(part);
    if (!id || vocab.is_special(*id)) return std::nullopt;
    std::vector<std::pair<double, TokenId>> ranked;
    for (TokenId other = Vocabulary::kEnd + 1; other < vocab.output_classes(); ++other) {
      if (other == *id) continue;
      ranked.emplace_back(cosine_distance(embeddings.row(*id), embeddings.row(other)), other);
    }
    const std::size_t take = std::min(per_part, ranked.size());
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take), ranked.end());
    for (std::size_t i = 0; i < take; ++i) out.insert(vocab.token(ranked[i].second));
  }
  return out;
}

CategoryLexicon build_lexicon(const std::map<std::int64_t, std::string>& categories, const Vocabulary& vocab,
                              const DenseArray& embeddings, std::size_t k) {
  CategoryLexicon lex;
  lex.k = k;
  for (const auto& [id, name] : categories) {
    lex.names[id] = name;
    lex.base[id] = split_words(name);
    if (auto words = knn_expand(name, vocab, embeddings, k)) {
      lex.expanded[id] = std::move(*words);
    } else {
      lex.unexpandable.insert(id);
    }
  }
  return lex;
}

bool caption_matches(const Tokens& caption, std::int64_t category_id, const CategoryLexicon& lexicon) {
  if (lexicon.k == 1) {
    const auto it = lexicon.base.find(category_id);
    if (it == lexicon.base.end()) return false;
    return std::all_of(it->second.begin(), it->second.end(),
                       [&](const std::string& w) { return contains_word(caption, w); });
  }
  const auto it = lexicon.expanded.find(category_id);
  if (it == lexicon.expanded.end()) return false;
  return std::any_of(caption.begin(), caption.end(), [&](const std::string& w) { return it->second.count(w) != 0; });
}

ControllabilityReport controllability_report(const std::vector<CaptionRecord>& records,
                                             const CategoryLexicon& lexicon, bool distinct,
                                             const std::vector<std::string>& method_order) {
  ControllabilityReport report;
  report.k = lexicon.k;
  report.distinct = distinct;
  report.excluded_categories.assign(lexicon.unexpandable.begin(), lexicon.unexpandable.end());
  std::set<std::string> present;
  for (const auto& r : records) present.insert(r.method);

  for (const auto& method : order_labels(present, method_order)) {
    ControllabilityRow row;
    row.method = method;
    std::map<std::int64_t, Count> per_category;
    for (const auto& r : records) {
      if (r.method != method || lexicon.unexpandable.count(r.category_id)) continue;
      ++row.all_records;
      if (distinct && caption_matches(r.self, r.category_id, lexicon)) continue;
      const bool hit = caption_matches(r.box, r.category_id, lexicon);
      Count& c = per_category[r.category_id];
      ++c.den;
      ++row.overall.den;
      if (hit) {
        ++c.num;
        ++row.overall.num;
      }
    }
    for (const auto& [id, count] : per_category) {
      const auto name = lexicon.names.find(id);
      row.categories.push_back({id, name == lexicon.names.end() ? std::to_string(id) : name->second, count});
    }
    std::stable_sort(row.categories.begin(), row.categories.end(), [](const CategoryCount& a, const CategoryCount& b) {
      if (a.count.pct() != b.count.pct()) return a.count.pct() > b.count.pct();
      if (a.count.num != b.count.num) return a.count.num > b.count.num;
      return a.id < b.id;
    });
    report.rows.push_back(std::move(row));
  }
  return report;
}

// ---- usefulness -----------------------------------------------------------

std::vector<UsefulnessRow> usefulness_report(const std::vector<QaCaptionRecord>& records,
                                             const std::vector<std::string>& method_order) {
  std::set<std::string> present;
  for (const auto& r : records) {
    if (r.method != "control" && r.method != "self") present.insert(r.method);
  }
  std::vector<std::pair<std::string, std::string>> keys;
  for (const auto& m : order_labels(present, method_order)) {
    for (const char* level : {"word", "phrase", "question"}) keys.emplace_back(m, level);
  }
  keys.emplace_back("control", "");
  keys.emplace_back("self", "");

  std::vector<UsefulnessRow> rows;
  for (const auto& [method, level] : keys) {
    UsefulnessRow row{method, level, {}, {}, {}};
    for (const auto& r : records) {
      if (r.method != method || r.level != level) continue;
      const auto caption = content_word_set(r.caption);
      const auto question = content_word_set(r.question);
      const auto answer = content_word_set(r.answer);
      const auto hits = [&](const std::set<std::string>& s) {
        return std::any_of(caption.begin(), caption.end(), [&](const std::string& w) { return s.count(w) != 0; });
      };
      const bool in_answer = hits(answer), in_question = hits(question);
      ++row.answer.den;
      ++row.question.den;
      ++row.either.den;
      row.answer.num += in_answer;
      row.question.num += in_question;
      row.either.num += in_answer || in_question;
    }
    if (row.answer.den > 0 || present.count(method)) rows.push_back(row);
  }
  return rows;
}

// ---- formatting -----------------------------------------------------------

std::string format_sensitivity(const std::vector<SensitivityRow>& rows) {
  std::ostringstream out;
  char wer_buf[64];
  out << pad_right("method", 14) << pad_left("general (diff)", 16) << pad_left("method (diff)", 16)
      << pad_left("general", 18) << pad_left("method", 18) << "\n";
  for (const auto& r : rows) {
    std::snprintf(wer_buf, sizeof wer_buf, " (%.2f)", r.mean_wer_general);
    out << pad_right(r.method, 14) << pad_left(format_percent(r.general.pct()) + wer_buf, 16);
    std::snprintf(wer_buf, sizeof wer_buf, " (%.2f)", r.mean_wer_specific);
    out << pad_left(format_percent(r.specific.pct()) + wer_buf, 16) << pad_left(fraction(r.general), 18)
        << pad_left(fraction(r.specific), 18) << "\n";
  }
  return out.str();
}

std::string sensitivity_json(const std::vector<SensitivityRow>& rows) {
  ordered_json j = ordered_json::array();
  for (const auto& r : rows) {
    j.push_back({{"method", r.method},
                 {"general", count_json(r.general)},
                 {"method_specific", count_json(r.specific)},
                 {"mean_wer_general", r.mean_wer_general},
                 {"mean_wer_method", r.mean_wer_specific}});
  }
  return j.dump(2);
}

namespace {

std::string report_label(const ControllabilityReport& r) {
  return std::string(r.distinct ? "distinct " : "") + "k@" + std::to_string(r.k);
}

}  // namespace

std::string format_controllability(const std::vector<ControllabilityReport>& reports) {
  std::vector<std::string> methods;
  for (const auto& rep : reports) {
    for (const auto& row : rep.rows) {
      if (std::find(methods.begin(), methods.end(), row.method) == methods.end()) methods.push_back(row.method);
    }
  }
  std::ostringstream out;
  out << pad_right("method", 14);
  for (const auto& rep : reports) out << pad_left(report_label(rep), 14);
  for (const auto& rep : reports) out << pad_left(report_label(rep), 16);
  out << "\n";
  for (const auto& m : methods) {
    out << pad_right(m, 14);
    std::vector<Count> counts;
    for (const auto& rep : reports) {
      Count c;
      for (const auto& row : rep.rows) {
        if (row.method == m) c = row.overall;
      }
      counts.push_back(c);
      out << pad_left(format_percent(c.pct()), 14);
    }
    for (const auto& c : counts) out << pad_left(fraction(c), 16);
    out << "\n";
  }
  for (const auto& rep : reports) {
    if (!rep.excluded_categories.empty()) {
      out << report_label(rep) << " excluded categories (not expandable):";
      for (auto id : rep.excluded_categories) out << " " << id;
      out << "\n";
    }
  }
  return out.str();
}

std::string format_category_table(const ControllabilityReport& report, const std::string& method) {
  std::ostringstream out;
  for (const auto& row : report.rows) {
    if (row.method != method) continue;
    out << method << " " << report_label(report) << "\n";
    out << pad_left("Pos", 4) << pad_left("Id", 6) << "  " << pad_right("Category", 16) << pad_left("Matches", 9)
        << pad_left("%", 9) << pad_left("Total", 8) << pad_left("% of all", 10) << "\n";
    std::size_t pos = 1;
    for (const auto& c : row.categories) {
      out << pad_left(std::to_string(pos++), 4) << pad_left(std::to_string(c.id), 6) << "  " << pad_right(c.name, 16)
          << pad_left(std::to_string(c.count.num), 9) << pad_left(format_percent(c.count.pct()), 9)
          << pad_left(std::to_string(c.count.den), 8)
          << pad_left(format_percent(percent(c.count.den, row.overall.den)), 10) << "\n";
    }
  }
  return out.str();
}

std::string controllability_json(const std::vector<ControllabilityReport>& reports) {
  ordered_json j = ordered_json::array();
  for (const auto& rep : reports) {
    ordered_json rj{{"k", rep.k}, {"distinct", rep.distinct}, {"excluded_categories", rep.excluded_categories}};
    rj["methods"] = ordered_json::array();
    for (const auto& row : rep.rows) {
      ordered_json mj{{"method", row.method}, {"all_records", row.all_records}, {"overall", count_json(row.overall)}};
      mj["categories"] = ordered_json::array();
      for (const auto& c : row.categories) {
        mj["categories"].push_back({{"id", c.id}, {"name", c.name}, {"count", count_json(c.count)}});
      }
      rj["methods"].push_back(std::move(mj));
    }
    j.push_back(std::move(rj));
  }
  return j.dump(2);
}

std::string format_usefulness(const std::vector<UsefulnessRow>& rows) {
  std::ostringstream out;
  out << pad_right("method", 14) << pad_right("level", 10) << pad_left("in answer", 22) << pad_left("in question", 22)
      << pad_left("in either", 22) << "\n";
  const auto cell = [](const Count& c) { return pad_left(format_percent(c.pct()) + " % " + fraction(c), 22); };
  for (const auto& r : rows) {
    out << pad_right(r.method, 14) << pad_right(r.level, 10) << cell(r.answer) << cell(r.question) << cell(r.either)
        << "\n";
  }
  return out.str();
}

std::string usefulness_json(const std::vector<UsefulnessRow>& rows) {
  ordered_json j = ordered_json::array();
  for (const auto& r : rows) {
    j.push_back({{"method", r.method},
                 {"level", r.level},
                 {"in_answer", count_json(r.answer)},
                 {"in_question", count_json(r.question)},
                 {"in_either", count_json(r.either)}});
  }
  return j.dump(2);
}

}  // namespace attnctl
