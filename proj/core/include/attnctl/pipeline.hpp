#pragma once

#include <filesystem>
#include <string>

#include "attnctl/experiments.hpp"
#include "attnctl/synth.hpp"
#include "attnctl/train.hpp"

namespace attnctl {

/// Everything one end-to-end toy run needs: data, both models, both
/// experiments. Output layout under `dir`: data/, vocab.txt, captioner.satc,
/// vqa.satc, captioner_history.json, vqa_history.json, exp1/, exp2/.
struct PipelineConfig {
  std::filesystem::path dir;
  SynthConfig synth;
  std::size_t max_vocab = 200;
  CaptionerTrainConfig captioner;
  VqaTrainConfig vqa;
  Exp1Config exp1;
  Exp2Config exp2;
};

struct PipelineResult {
  std::size_t vocab_size = 0;
  CaptionerEpoch captioner_best;
  std::size_t captioner_best_epoch = 0;
  VqaEpoch vqa_best;
  std::size_t vqa_best_epoch = 0;
  Exp1Result exp1;
  Exp2Result exp2;
  double seconds = 0.0;
};

std::string captioner_history_json(const CaptionerTrainResult& result);
std::string vqa_history_json(const VqaTrainResult& result);

PipelineResult run_pipeline(const PipelineConfig& config, const EpochLogger& log = {});

}  // namespace attnctl
