#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attnctl/params.hpp"
#include "attnctl/rng.hpp"
#include "attnctl/tensor.hpp"
#include "attnctl/text.hpp"

namespace attnctl {

enum class QuestionLevel { Word = 0, Phrase = 1, Question = 2 };
inline constexpr std::array<QuestionLevel, 3> kQuestionLevels{QuestionLevel::Word, QuestionLevel::Phrase,
                                                              QuestionLevel::Question};
std::string level_name(QuestionLevel level);
QuestionLevel parse_level(std::string_view name);

struct VqaConfig {
  std::size_t regions = 196;
  std::size_t feature_dim = 32;  // D: image features, word embeddings and co-attention width
  std::size_t hidden_dim = 32;   // answer MLP width
  std::size_t vocab_size = 0;    // question vocabulary incl. start/end; embedding rows = vocab_size + 1
  std::size_t max_question_len = 8;
  std::size_t answers = 0;       // K
  bool adaption = true;
  double adaption_dropout = 0.1;

  void validate() const;
  friend bool operator==(const VqaConfig&, const VqaConfig&) = default;
};

/// Per-level question features, T x D with T = max_question_len. Rows at and
/// after `length` are zero.
struct QuestionFeatures {
  DenseArray word, phrase, question;
  std::size_t length = 0;

  const DenseArray& level(QuestionLevel l) const;
};

struct CoAttentionWeights {
  const DenseArray& correlation;  // W_c, D x D
  const DenseArray& image_proj;   // W_v, D x D
  const DenseArray& question_proj;  // W_q, D x D
};

struct CoAttention {
  DenseArray correlation;  // C, T x L
  DenseArray alpha_v;      // L
  DenseArray alpha_q;      // T, zero past `active`
  DenseArray v_hat;        // D
  DenseArray q_hat;        // D
};

/// Parallel co-attention with question rows q (T x D, first `active` valid)
/// and image rows a (L x D): C = tanh(Q Wc Aᵀ), P_v = tanh(A Wvᵀ + Cᵀ Q Wqᵀ),
/// P_q = tanh(Q Wqᵀ + C A Wvᵀ), each attention a softmax of row sums.
CoAttention parallel_coattention(const DenseArray& q, std::size_t active, const DenseArray& a,
                                 const CoAttentionWeights& w);

struct AnswerWeights {
  const DenseArray& word;      // W_w, M x D
  const DenseArray& phrase;    // W_p, M x (D + M)
  const DenseArray& question;  // W_s, M x (D + M)
  const DenseArray& output;    // W_y, K x M
};

/// h_w = tanh(W_w(q_w+v_w)), h_p = tanh(W_p[(q_p+v_p), h_w]), h_s likewise,
/// softmax(W_y h_s).
DenseArray answer_predict(const std::array<DenseArray, 3>& q_hat, const std::array<DenseArray, 3>& v_hat,
                          const AnswerWeights& w);

struct VqaOutput {
  DenseArray answer_dist;
  std::array<DenseArray, 3> image_attention;     // word, phrase, question
  std::array<DenseArray, 3> question_attention;  // over T
};

struct VqaExample {
  const DenseArray* features = nullptr;  // L x D
  std::vector<TokenId> question;         // content ids, 1..max_question_len of them
  std::size_t answer = 0;
};

struct VqaLoss {
  double total = 0.0;  // mean cross-entropy
  std::size_t correct = 0;
  std::size_t count = 0;
};

class VqaModel {
 public:
  VqaModel(const VqaConfig& config, Rng& init_rng);
  VqaModel(const VqaConfig& config, ParameterStore params);

  const VqaConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  QuestionFeatures encode_question_levels(const std::vector<TokenId>& ids) const;
  VqaOutput forward(const DenseArray& features, const std::vector<TokenId>& question) const;
  /// Image attention at word, phrase and question level.
  std::array<DenseArray, 3> extract_attentions(const DenseArray& features, const std::vector<TokenId>& question) const;
  std::size_t predict(const DenseArray& features, const std::vector<TokenId>& question) const;

  /// Mean answer cross-entropy; gradients added to params() when `accumulate`.
  VqaLoss training_loss(std::span<const VqaExample> batch, Rng& rng, bool train, bool accumulate);
  static VqaLoss evaluate_loss(const VqaConfig& config, const ParameterStore& params,
                               std::span<const VqaExample> batch, Rng& rng, bool train);

 private:
  VqaConfig config_;
  ParameterStore params_;
};

std::vector<std::pair<std::string, Shape>> vqa_parameter_shapes(const VqaConfig& config);

struct AnswerList {
  std::vector<std::string> answers;  // most frequent first
  std::map<std::string, std::size_t> index;
  std::size_t dropped = 0;           // pairs whose answer is not in the list
  std::size_t kept = 0;

  std::optional<std::size_t> find(const std::string& answer) const;
};

/// Top `top_k` answers by frequency, ties lexicographic.
AnswerList build_answer_list(const std::vector<std::string>& answers, std::size_t top_k);

/// Question text to content ids: tokenized, unknown words dropped, truncated.
std::vector<TokenId> encode_question(std::string_view text, const Vocabulary& vocab, std::size_t max_len);

}  // namespace attnctl
