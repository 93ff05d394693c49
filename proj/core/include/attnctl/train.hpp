#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "attnctl/captioner.hpp"
#include "attnctl/params.hpp"
#include "attnctl/synth.hpp"
#include "attnctl/text.hpp"
#include "attnctl/vqa.hpp"

namespace attnctl {

/// Tokenized training captions of the given images.
std::vector<std::vector<std::string>> caption_tokens(const std::vector<CaptionEntry>& captions,
                                                     const std::vector<std::int64_t>& image_ids);

struct CaptionerTrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  std::size_t patience = 0;  // epochs without a BLEU-4 gain before stopping; 0 runs every epoch
  std::size_t hidden_dim = 0;  // 0 means 2 * feature dim
  std::size_t max_len = 16;
  double dropout_rate = 0.5;
  double lambda = 0.005;
  AdamConfig adam;
  std::uint64_t seed = 1;
};

struct CaptionerEpoch {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;  // teacher-forced, with dropout
  double val_loss = 0.0;
  double val_accuracy = 0.0;    // teacher-forced, inference mode
  std::array<double, 4> bleu{};  // greedy self-attending decode on val
};

struct CaptionerTrainResult {
  Captioner model;  // best epoch by val BLEU-4, earliest on ties
  std::size_t best_epoch = 0;
  std::vector<CaptionerEpoch> history;
  std::size_t train_pairs = 0;
  std::size_t discarded = 0;  // captions with unknown words or too long
};

using EpochLogger = std::function<void(const std::string&)>;

/// Adam on shuffled mini-batches of (image, caption) pairs from the train
/// split; every epoch is scored on the val split.
CaptionerTrainResult train_captioner(const Dataset& data, const Vocabulary& vocab, const CaptionerTrainConfig& config,
                                     const EpochLogger& log = {});

/// Greedy self-attending BLEU-1..4 over the given images against all their
/// reference captions.
std::array<double, 4> validate_bleu(const Captioner& model, const Vocabulary& vocab, const Dataset& data,
                                    const std::vector<std::int64_t>& image_ids);

struct VqaTrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  std::size_t patience = 10;  // 0 runs every epoch
  std::size_t hidden_dim = 32;
  std::size_t max_question_len = 8;
  std::size_t max_vocab = 1000;
  std::size_t top_answers = 1000;
  bool adaption = true;
  AdamConfig adam;
  std::uint64_t seed = 1;
};

struct VqaEpoch {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct VqaTrainResult {
  VqaModel model;  // best epoch by val accuracy, then by val loss
  Vocabulary question_vocab;
  std::vector<std::string> answers;
  std::size_t best_epoch = 0;
  std::vector<VqaEpoch> history;
  std::size_t train_pairs = 0;
  std::size_t dropped = 0;
};

VqaTrainResult train_vqa(const Dataset& data, const VqaTrainConfig& config, const EpochLogger& log = {});

}  // namespace attnctl
