#include "attnctl/pipeline.hpp"

#include <chrono>
#include <fstream>

#include "json.hpp"

namespace attnctl {

using nlohmann::ordered_json;

std::string captioner_history_json(const CaptionerTrainResult& result) {
  ordered_json j{{"best_epoch", result.best_epoch},
                 {"train_pairs", result.train_pairs},
                 {"discarded", result.discarded},
                 {"epochs", ordered_json::array()}};
  for (const auto& e : result.history) {
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"train_accuracy", e.train_accuracy},
                           {"val_loss", e.val_loss},
                           {"val_accuracy", e.val_accuracy},
                           {"bleu", e.bleu}});
  }
  return j.dump(1) + "\n";
}

std::string vqa_history_json(const VqaTrainResult& result) {
  ordered_json j{{"best_epoch", result.best_epoch},
                 {"train_pairs", result.train_pairs},
                 {"dropped", result.dropped},
                 {"epochs", ordered_json::array()}};
  for (const auto& e : result.history) {
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"train_accuracy", e.train_accuracy},
                           {"val_loss", e.val_loss},
                           {"val_accuracy", e.val_accuracy}});
  }
  return j.dump(1) + "\n";
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config, const EpochLogger& log) {
  const auto start = std::chrono::steady_clock::now();
  const auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  std::filesystem::create_directories(config.dir);
  const auto data_dir = config.dir / "data";

  say("gen-data");
  write_dataset(data_dir, config.synth, generate_scenes(config.synth));
  const Dataset data = load_dataset(data_dir);

  const Vocabulary vocab = build_vocab(caption_tokens(data.captions, data.split.train), config.max_vocab);
  vocab.save(config.dir / "vocab.txt");

  say("train-captioner");
  const auto cap = train_captioner(data, vocab, config.captioner, log);
  save_captioner(config.dir / "captioner.satc", cap.model, vocab);
  write_text(config.dir / "captioner_history.json", captioner_history_json(cap));

  say("train-vqa");
  const auto vqa = train_vqa(data, config.vqa, log);
  save_vqa(config.dir / "vqa.satc", vqa.model, vqa.question_vocab, vqa.answers);
  vqa.question_vocab.save(config.dir / "question_vocab.txt");
  write_text(config.dir / "vqa_history.json", vqa_history_json(vqa));

  const auto captioner = load_captioner(config.dir / "captioner.satc", data.features.regions, data.features.dims);
  const auto vqa_bundle = load_vqa(config.dir / "vqa.satc");

  PipelineResult result;
  result.vocab_size = vocab.size();
  result.captioner_best_epoch = cap.best_epoch;
  result.captioner_best = cap.history.at(cap.best_epoch - 1);
  result.vqa_best_epoch = vqa.best_epoch;
  result.vqa_best = vqa.history.at(vqa.best_epoch - 1);

  say("run-exp1");
  result.exp1 = run_exp1(data, captioner, config.exp1);
  write_exp1(config.dir / "exp1", result.exp1);
  say("run-exp2");
  result.exp2 = run_exp2(data, captioner, vqa_bundle, config.exp2);
  write_exp2(config.dir / "exp2", result.exp2);

  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace attnctl
