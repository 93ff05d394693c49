#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attnctl/interface.hpp"
#include "attnctl/lstm.hpp"
#include "attnctl/params.hpp"
#include "attnctl/rng.hpp"
#include "attnctl/tensor.hpp"
#include "attnctl/text.hpp"

namespace attnctl {

struct CaptionerConfig {
  std::size_t regions = 196;     // L, a perfect square
  std::size_t feature_dim = 32;  // D
  std::size_t hidden_dim = 64;   // H, always 2 * D
  std::size_t vocab_size = 0;    // V: start, end and words; the decoder predicts V + 1 classes
  std::size_t max_len = 16;      // caption words; decoding runs at most max_len + 1 steps
  double dropout_rate = 0.5;
  double lambda = 0.005;

  std::size_t grid() const;
  std::size_t output_classes() const { return vocab_size + 1; }
  /// Throws DomainError when H != 2D, L is not a perfect square, lambda < 0, ...
  void validate() const;
  friend bool operator==(const CaptionerConfig&, const CaptionerConfig&) = default;
};

/// L x D region features.
struct ImageAnnotation {
  DenseArray features;
};

struct InitialState {
  DenseArray c0;
  DenseArray h0;
};

struct GatedContext {
  DenseArray z;      // sum_i alpha_i a_i
  DenseArray z_hat;  // beta * z
  double beta = 0.0;
};

struct DecodeResult {
  TokenSequence tokens;          // emitted ids, the end id included when produced
  DenseArray attention_trace;    // T x L, the effective attention per emitted token
  std::vector<double> betas;     // gating scalar per step
  std::vector<DenseArray> contexts;  // z per step (before gating)

  std::size_t steps() const { return tokens.ids.size(); }
  std::vector<TokenId> words() const;  // emitted ids with the end marker stripped
};

struct TrainingExample {
  const ImageAnnotation* image = nullptr;
  TokenSequence caption;  // start, words, end, pad...
};

struct LossBreakdown {
  double total = 0.0;
  double nll = 0.0;
  double penalty = 0.0;
  std::size_t predictions = 0;
  std::size_t correct = 0;
};

/// Attentive caption generator: initializer network, attention network, gated
/// encoder, LSTM and deep-output decoder over a V+1-way softmax (pad at 0).
class Captioner {
 public:
  Captioner(const CaptionerConfig& config, Rng& init_rng);
  Captioner(const CaptionerConfig& config, ParameterStore params);

  const CaptionerConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  /// c0 = tanh(W_c0 m + b), h0 = tanh(W_h0 m + b) with m the mean region vector.
  InitialState init_state(const ImageAnnotation& image) const;
  /// alpha = softmax(sum_j ReLU(A W_pa + W_ph h_prev + b)[:, j]).
  DenseArray attend(const ImageAnnotation& image, const DenseArray& h_prev) const;
  GatedContext gated_context(const ImageAnnotation& image, const DenseArray& alpha,
                             const DenseArray& h_prev) const;
  /// One LSTM step with x = concat(E y_prev, z_hat).
  LstmStep lstm_step(const DenseArray& x, const DenseArray& h_prev, const DenseArray& c_prev) const;
  /// Logits over V + 1 classes. Masks (already scaled) apply to h and o;
  /// passing none is inference mode.
  DenseArray decode_word(TokenId y_prev, const DenseArray& z_hat, const DenseArray& h,
                         const DenseArray* mask_h = nullptr, const DenseArray* mask_o = nullptr) const;

  /// Greedy argmax decoding (pad never emitted, ties to the lowest id) for at
  /// most `max_steps` steps (default max_len + 1), stopping on the end id.
  DecodeResult greedy_decode(const ImageAnnotation& image, const InterfaceMethod& method,
                             std::optional<std::size_t> max_steps = std::nullopt) const;

  /// Mean over the batch of masked teacher-forced NLL plus
  /// lambda * sum_i (1 - sum_t alpha_it)^2. When `accumulate` is set the
  /// gradient of that mean is added to params().grad. Dropout masks come from
  /// `rng` when dropout_rate > 0 and `train` is set.
  LossBreakdown training_loss(std::span<const TrainingExample> batch, Rng& rng, bool train, bool accumulate);
  /// Loss only, evaluated against an arbitrary store with this model's shapes.
  static LossBreakdown evaluate_loss(const CaptionerConfig& config, const ParameterStore& params,
                                     std::span<const TrainingExample> batch, Rng& rng, bool train);

  /// Learned embedding rows (V+1 x D).
  const DenseArray& embeddings() const { return params_.value("embedding"); }

 private:
  CaptionerConfig config_;
  ParameterStore params_;
};

/// Names and shapes every captioner parameter store must carry.
std::vector<std::pair<std::string, Shape>> captioner_parameter_shapes(const CaptionerConfig& config);

}  // namespace attnctl
