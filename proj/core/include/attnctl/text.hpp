#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace attnctl {

using TokenId = std::uint32_t;

/// Lowercases, drops ASCII punctuation, maps "&" to "and", spells out single
/// digits and removes multi-digit numbers, then splits on whitespace.
std::vector<std::string> tokenize(std::string_view text);

/// Token <-> id table. Id 0 is the pad word, which the decoder predicts but
/// which is not counted as part of the vocabulary; start and end are ids 1
/// and 2. Unknown tokens have no id (`id_of` returns nullopt).
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kStart = 1;
  static constexpr TokenId kEnd = 2;
  static constexpr std::string_view kPadToken = "<PAD>";
  static constexpr std::string_view kStartToken = "<S>";
  static constexpr std::string_view kEndToken = "<E>";

  Vocabulary();
  /// Builds from the id-ordered token list (without the three specials).
  explicit Vocabulary(const std::vector<std::string>& words);

  /// Vocabulary size proper: start, end and words, pad excluded.
  std::size_t size() const { return tokens_.size() - 1; }
  /// Number of decoder classes, pad included.
  std::size_t output_classes() const { return tokens_.size(); }

  std::optional<TokenId> id_of(std::string_view token) const;
  const std::string& token(TokenId id) const;
  bool is_special(TokenId id) const { return id <= kEnd; }
  /// Word tokens in id order (ids 3..).
  std::vector<std::string> words() const;

  /// File form: "<PAD>", "<S>", "<E>" then one token per line; line n holds id n-1.
  std::string serialize() const;
  static Vocabulary parse(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Keeps the most frequent tokens (ties broken lexicographically) so that the
/// vocabulary, start and end included, has at most `max_size` entries.
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& captions, std::size_t max_size);

struct TokenSequence {
  std::vector<TokenId> ids;

  /// Ids between start and end, pad stripped.
  std::vector<TokenId> content() const;
  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

/// start + ids + end, right-padded with pad to max_len + 2. Returns nullopt
/// (discard) when a token is unknown or there are more than max_len tokens.
std::optional<TokenSequence> encode_caption(const std::vector<std::string>& tokens,
                                            const Vocabulary& vocab, std::size_t max_len);

/// Encodes without start/end markers or padding; unknown tokens are dropped.
std::vector<TokenId> encode_words(const std::vector<std::string>& tokens, const Vocabulary& vocab);

std::vector<std::string> decode_tokens(const std::vector<TokenId>& ids, const Vocabulary& vocab);
std::string join_tokens(const std::vector<std::string>& tokens);

/// Classic Porter stemmer (steps 1a to 5b) for lowercase ASCII words.
std::string porter_stem(std::string_view word);

/// The embedded 127-word English stopword list.
const std::vector<std::string>& default_stopwords();
bool is_stopword(std::string_view word);

/// Stopwords removed first, the remainder stemmed and deduplicated.
std::set<std::string> content_word_set(const std::vector<std::string>& tokens);
std::set<std::string> content_word_set(const std::vector<std::string>& tokens,
                                       const std::set<std::string>& stopwords);

}  // namespace attnctl
