#include <algorithm>

#include "attnctl/text.hpp"

namespace attnctl {

// 127-word English list (the classic NLTK set). It contains the auxiliary
// and wh-words, including "doing", so "what is the dog doing" reduces to {dog}.
const std::vector<std::string>& default_stopwords() {
  static const std::vector<std::string> words = {
      "i",        "me",       "my",      "myself",  "we",      "our",     "ours",    "ourselves",
      "you",      "your",     "yours",   "yourself", "yourselves", "he",  "him",     "his",
      "himself",  "she",      "her",     "hers",    "herself", "it",      "its",     "itself",
      "they",     "them",     "their",   "theirs",  "themselves", "what", "which",  "who",
      "whom",     "this",     "that",    "these",   "those",   "am",      "is",      "are",
      "was",      "were",     "be",      "been",    "being",   "have",    "has",     "had",
      "having",   "do",       "does",    "did",     "doing",   "a",       "an",      "the",
      "and",      "but",      "if",      "or",      "because", "as",      "until",   "while",
      "of",       "at",       "by",      "for",     "with",    "about",   "against", "between",
      "into",     "through",  "during",  "before",  "after",   "above",   "below",   "to",
      "from",     "up",       "down",    "in",      "out",     "on",      "off",     "over",
      "under",    "again",    "further", "then",    "once",    "here",    "there",   "when",
      "where",    "why",      "how",     "all",     "any",     "both",    "each",    "few",
      "more",     "most",     "other",   "some",    "such",    "no",      "nor",     "not",
      "only",     "own",      "same",    "so",      "than",    "too",     "very",    "s",
      "t",        "can",      "will",    "just",    "don",     "should",  "now"};
  return words;
}

bool is_stopword(std::string_view word) {
  static const std::set<std::string, std::less<>> lookup(default_stopwords().begin(),
                                                         default_stopwords().end());
  return lookup.find(word) != lookup.end();
}

std::set<std::string> content_word_set(const std::vector<std::string>& tokens) {
  std::set<std::string> out;
  for (const auto& tok : tokens)
    if (!is_stopword(tok)) out.insert(porter_stem(tok));
  return out;
}

std::set<std::string> content_word_set(const std::vector<std::string>& tokens,
                                       const std::set<std::string>& stopwords) {
  std::set<std::string> out;
  for (const auto& tok : tokens)
    if (stopwords.count(tok) == 0) out.insert(porter_stem(tok));
  return out;
}

}  // namespace attnctl
