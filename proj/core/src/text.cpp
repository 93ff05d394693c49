#include "attnctl/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "attnctl/tensor.hpp"

namespace attnctl {

namespace {

constexpr std::array<std::string_view, 10> kDigitWords = {"zero", "one", "two",   "three", "four",
                                                          "five", "six", "seven", "eight", "nine"};

bool all_digits(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size() + 8);
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c == '&') {
      cleaned += " and ";
    } else if (c < 0x80 && std::ispunct(c)) {
      continue;
    } else if (c < 0x80 && std::isspace(c)) {
      cleaned += ' ';
    } else {
      cleaned += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
    }
  }
  std::vector<std::string> tokens;
  std::istringstream in(cleaned);
  std::string tok;
  while (in >> tok) {
    if (all_digits(tok)) {
      if (tok.size() == 1) tokens.emplace_back(kDigitWords[tok[0] - '0']);
      continue;
    }
    tokens.push_back(std::move(tok));
  }
  return tokens;
}

// ---- Vocabulary -----------------------------------------------------------

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& words) {
  tokens_ = {std::string(kPadToken), std::string(kStartToken), std::string(kEndToken)};
  tokens_.insert(tokens_.end(), words.begin(), words.end());
  for (TokenId i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) {
      throw DomainError("Vocabulary: duplicate token '" + tokens_[i] + "'");
    }
  }
}

std::optional<TokenId> Vocabulary::id_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end() || it->second == kPad) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) throw DomainError("Vocabulary: id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

std::vector<std::string> Vocabulary::words() const {
  return {tokens_.begin() + 3, tokens_.end()};
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::parse(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string line(text.substr(pos, nl - pos));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    pos = nl + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.size() < 3 || lines[0] != kPadToken || lines[1] != kStartToken || lines[2] != kEndToken) {
    throw DomainError("vocabulary file must start with <PAD>, <S>, <E>");
  }
  return Vocabulary(std::vector<std::string>(lines.begin() + 3, lines.end()));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary file " + path.string());
  out << serialize();
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read vocabulary file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& captions, std::size_t max_size) {
  if (max_size < 3) throw DomainError("build_vocab: max_size must be at least 3");
  std::map<std::string, std::size_t> counts;
  for (const auto& caption : captions)
    for (const auto& tok : caption) ++counts[tok];
  counts.erase(std::string(Vocabulary::kPadToken));
  counts.erase(std::string(Vocabulary::kStartToken));
  counts.erase(std::string(Vocabulary::kEndToken));
  if (counts.empty()) throw DomainError("build_vocab: empty corpus");

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // std::map iteration is lexicographic, so a stable sort on count keeps ties in that order.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t room = max_size - 2;
  if (ranked.size() > room) ranked.resize(room);
  std::vector<std::string> words;
  words.reserve(ranked.size());
  for (auto& [tok, _] : ranked) words.push_back(tok);
  return Vocabulary(words);
}

// ---- encoding -------------------------------------------------------------

std::vector<TokenId> TokenSequence::content() const {
  std::vector<TokenId> out;
  for (TokenId id : ids) {
    if (id == Vocabulary::kStart || id == Vocabulary::kPad) continue;
    if (id == Vocabulary::kEnd) break;
    out.push_back(id);
  }
  return out;
}

std::optional<TokenSequence> encode_caption(const std::vector<std::string>& tokens,
                                            const Vocabulary& vocab, std::size_t max_len) {
  if (tokens.size() > max_len) return std::nullopt;
  TokenSequence seq;
  seq.ids.reserve(max_len + 2);
  seq.ids.push_back(Vocabulary::kStart);
  for (const auto& tok : tokens) {
    auto id = vocab.id_of(tok);
    if (!id || vocab.is_special(*id)) return std::nullopt;
    seq.ids.push_back(*id);
  }
  seq.ids.push_back(Vocabulary::kEnd);
  seq.ids.resize(max_len + 2, Vocabulary::kPad);
  return seq;
}

std::vector<TokenId> encode_words(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
  std::vector<TokenId> out;
  for (const auto& tok : tokens) {
    auto id = vocab.id_of(tok);
    if (id && !vocab.is_special(*id)) out.push_back(*id);
  }
  return out;
}

std::vector<std::string> decode_tokens(const std::vector<TokenId>& ids, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (TokenId id : ids) {
    if (id == Vocabulary::kStart || id == Vocabulary::kPad) continue;
    if (id == Vocabulary::kEnd) break;
    out.push_back(vocab.token(id));
  }
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

}  // namespace attnctl
