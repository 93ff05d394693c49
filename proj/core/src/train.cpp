#include "attnctl/train.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

#include "attnctl/metrics.hpp"

namespace attnctl {

namespace {

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fmt(const char* pattern, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

std::map<std::int64_t, std::vector<Tokens>> references_by_image(const std::vector<CaptionEntry>& captions) {
  std::map<std::int64_t, std::vector<Tokens>> refs;
  for (const auto& c : captions) refs[c.image_id].push_back(tokenize(c.caption));
  return refs;
}

}  // namespace

std::vector<std::vector<std::string>> caption_tokens(const std::vector<CaptionEntry>& captions,
                                                     const std::vector<std::int64_t>& image_ids) {
  const std::set<std::int64_t> wanted(image_ids.begin(), image_ids.end());
  std::vector<std::vector<std::string>> out;
  for (const auto& c : captions) {
    if (wanted.count(c.image_id)) out.push_back(tokenize(c.caption));
  }
  return out;
}

std::array<double, 4> validate_bleu(const Captioner& model, const Vocabulary& vocab, const Dataset& data,
                                    const std::vector<std::int64_t>& image_ids) {
  const auto refs = references_by_image(data.captions);
  std::vector<std::vector<Tokens>> references;
  std::vector<Tokens> hypotheses;
  for (auto id : image_ids) {
    auto it = refs.find(id);
    if (it == refs.end()) continue;
    const ImageAnnotation image{data.features.at(id)};
    const auto result = model.greedy_decode(image, SelfAttending{});
    hypotheses.push_back(decode_tokens(result.words(), vocab));
    references.push_back(it->second);
  }
  std::array<double, 4> out{};
  if (hypotheses.empty()) return out;
  const auto bleu = corpus_bleu(references, hypotheses, 4);
  std::copy_n(bleu.scores.begin(), 4, out.begin());
  return out;
}

namespace {

struct CaptionPairs {
  std::vector<ImageAnnotation> images;  // owned copies, indexed by position
  std::vector<std::size_t> image_of;
  std::vector<TokenSequence> captions;
  std::size_t discarded = 0;

  std::vector<TrainingExample> examples() const {
    std::vector<TrainingExample> out;
    for (std::size_t i = 0; i < captions.size(); ++i) out.push_back({&images[image_of[i]], captions[i]});
    return out;
  }
};

CaptionPairs collect_pairs(const Dataset& data, const std::vector<std::int64_t>& ids, const Vocabulary& vocab,
                           std::size_t max_len) {
  CaptionPairs pairs;
  std::map<std::int64_t, std::size_t> slot;
  for (auto id : ids) {
    slot[id] = pairs.images.size();
    pairs.images.push_back({data.features.at(id)});
  }
  for (const auto& c : data.captions) {
    auto it = slot.find(c.image_id);
    if (it == slot.end()) continue;
    auto seq = encode_caption(tokenize(c.caption), vocab, max_len);
    if (!seq) {
      ++pairs.discarded;
      continue;
    }
    pairs.image_of.push_back(it->second);
    pairs.captions.push_back(std::move(*seq));
  }
  return pairs;
}

}  // namespace

CaptionerTrainResult train_captioner(const Dataset& data, const Vocabulary& vocab, const CaptionerTrainConfig& config,
                                     const EpochLogger& log) {
  if (config.epochs == 0 || config.batch_size == 0) throw DomainError("train-captioner: epochs and batch size must be positive");
  CaptionerConfig mc;
  mc.regions = data.features.regions;
  mc.feature_dim = data.features.dims;
  mc.hidden_dim = config.hidden_dim == 0 ? 2 * mc.feature_dim : config.hidden_dim;
  mc.vocab_size = vocab.size();
  mc.max_len = config.max_len;
  mc.dropout_rate = config.dropout_rate;
  mc.lambda = config.lambda;
  mc.validate();

  Rng rng(config.seed);
  Rng init_rng = rng.split();
  Captioner model(mc, init_rng);

  const auto train = collect_pairs(data, data.split.train, vocab, mc.max_len);
  const auto val = collect_pairs(data, data.split.val, vocab, mc.max_len);
  if (train.captions.empty()) throw DomainError("train-captioner: no usable training captions");
  const auto train_examples = train.examples();
  const auto val_examples = val.examples();

  CaptionerTrainResult result{model, 0, {}, train_examples.size(), train.discarded + val.discarded};
  double best_bleu = -1.0;
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train_examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(order, rng);
    CaptionerEpoch stats;
    stats.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t predictions = 0, correct = 0;
    std::vector<TrainingExample> batch;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i) {
        batch.push_back(train_examples[order[i]]);
      }
      model.params().zero_grad();
      const auto loss = model.training_loss(batch, rng, true, true);
      adam_step(model.params(), config.adam);
      loss_sum += loss.total * static_cast<double>(batch.size());
      predictions += loss.predictions;
      correct += loss.correct;
    }
    stats.train_loss = loss_sum / static_cast<double>(order.size());
    stats.train_accuracy = ratio(correct, predictions);
    if (!val_examples.empty()) {
      Rng eval_rng(0);
      const auto v = model.training_loss(val_examples, eval_rng, false, false);
      stats.val_loss = v.total;
      stats.val_accuracy = ratio(v.correct, v.predictions);
    }
    stats.bleu = validate_bleu(model, vocab, data, data.split.val);
    result.history.push_back(stats);
    if (log) {
      log(fmt("epoch %zu loss %.4f acc %.4f val_loss %.4f val_acc %.4f bleu %.2f/%.2f/%.2f/%.2f", epoch,
              stats.train_loss, stats.train_accuracy, stats.val_loss, stats.val_accuracy, stats.bleu[0],
              stats.bleu[1], stats.bleu[2], stats.bleu[3]));
    }
    if (stats.bleu[3] > best_bleu) {
      best_bleu = stats.bleu[3];
      result.model = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

namespace {

struct VqaPairs {
  std::vector<VqaExample> examples;
  std::size_t dropped = 0;
};

VqaPairs collect_vqa(const Dataset& data, const std::vector<std::int64_t>& ids, const Vocabulary& vocab,
                     const AnswerList& answers, std::size_t max_len) {
  const std::set<std::int64_t> wanted(ids.begin(), ids.end());
  VqaPairs out;
  for (const auto& q : data.qa) {
    if (!wanted.count(q.image_id)) continue;
    auto answer = answers.find(q.answer);
    auto question = encode_question(q.question, vocab, max_len);
    if (!answer || question.empty()) {
      ++out.dropped;
      continue;
    }
    out.examples.push_back({&data.features.at(q.image_id), std::move(question), *answer});
  }
  return out;
}

}  // namespace

VqaTrainResult train_vqa(const Dataset& data, const VqaTrainConfig& config, const EpochLogger& log) {
  if (config.epochs == 0 || config.batch_size == 0) throw DomainError("train-vqa: epochs and batch size must be positive");
  const std::set<std::int64_t> train_ids(data.split.train.begin(), data.split.train.end());
  std::vector<std::vector<std::string>> questions;
  std::vector<std::string> answer_texts;
  for (const auto& q : data.qa) {
    if (!train_ids.count(q.image_id)) continue;
    questions.push_back(tokenize(q.question));
    answer_texts.push_back(q.answer);
  }
  if (questions.empty()) throw DomainError("train-vqa: no training questions");
  Vocabulary vocab = build_vocab(questions, config.max_vocab);
  const AnswerList answers = build_answer_list(answer_texts, config.top_answers);

  VqaConfig mc;
  mc.regions = data.features.regions;
  mc.feature_dim = data.features.dims;
  mc.hidden_dim = config.hidden_dim;
  mc.vocab_size = vocab.size();
  mc.max_question_len = config.max_question_len;
  mc.answers = answers.answers.size();
  mc.adaption = config.adaption;
  mc.validate();

  Rng rng(config.seed);
  Rng init_rng = rng.split();
  VqaModel model(mc, init_rng);

  auto train = collect_vqa(data, data.split.train, vocab, answers, mc.max_question_len);
  auto val = collect_vqa(data, data.split.val, vocab, answers, mc.max_question_len);
  if (train.examples.empty()) throw DomainError("train-vqa: no usable training pairs");

  VqaTrainResult result{model, vocab, answers.answers, 0, {}, train.examples.size(), train.dropped + val.dropped};
  double best = -1.0, best_loss = 0.0;
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train.examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(order, rng);
    VqaEpoch stats;
    stats.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::vector<VqaExample> batch;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i) {
        batch.push_back(train.examples[order[i]]);
      }
      model.params().zero_grad();
      const auto loss = model.training_loss(batch, rng, true, true);
      adam_step(model.params(), config.adam);
      loss_sum += loss.total * static_cast<double>(batch.size());
      correct += loss.correct;
    }
    stats.train_loss = loss_sum / static_cast<double>(order.size());
    stats.train_accuracy = ratio(correct, order.size());
    const auto& scored = val.examples.empty() ? train.examples : val.examples;
    Rng eval_rng(0);
    const auto v = model.training_loss(scored, eval_rng, false, false);
    stats.val_loss = v.total;
    stats.val_accuracy = ratio(v.correct, v.count);
    result.history.push_back(stats);
    if (log) {
      log(fmt("epoch %zu loss %.4f acc %.4f val_loss %.4f val_acc %.4f", epoch, stats.train_loss,
              stats.train_accuracy, stats.val_loss, stats.val_accuracy));
    }
    if (stats.val_accuracy > best || (stats.val_accuracy == best && stats.val_loss < best_loss)) {
      best = stats.val_accuracy;
      best_loss = stats.val_loss;
      result.model = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

}  // namespace attnctl
