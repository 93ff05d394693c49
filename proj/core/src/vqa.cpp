#include "attnctl/vqa.hpp"

#include "attnctl/lstm.hpp"

#include <algorithm>
#include <cmath>

namespace attnctl {

std::string level_name(QuestionLevel level) {
  switch (level) {
    case QuestionLevel::Word: return "word";
    case QuestionLevel::Phrase: return "phrase";
    case QuestionLevel::Question: return "question";
  }
  return "?";
}

QuestionLevel parse_level(std::string_view name) {
  if (name == "word") return QuestionLevel::Word;
  if (name == "phrase") return QuestionLevel::Phrase;
  if (name == "question") return QuestionLevel::Question;
  throw DomainError("unknown question level '" + std::string(name) + "'");
}

void VqaConfig::validate() const {
  if (regions == 0) throw DomainError("vqa config: regions must be positive");
  if (feature_dim == 0 || hidden_dim == 0) throw DomainError("vqa config: dimensions must be positive");
  if (vocab_size < 3) throw DomainError("vqa config: question vocabulary too small");
  if (max_question_len == 0) throw DomainError("vqa config: max_question_len must be positive");
  if (answers == 0) throw DomainError("vqa config: empty answer list");
  if (!(adaption_dropout >= 0.0 && adaption_dropout < 1.0)) throw DomainError("vqa config: dropout in [0,1)");
}

const DenseArray& QuestionFeatures::level(QuestionLevel l) const {
  switch (l) {
    case QuestionLevel::Word: return word;
    case QuestionLevel::Phrase: return phrase;
    case QuestionLevel::Question: return question;
  }
  return word;
}

namespace {

constexpr std::size_t kWindows = 3;

std::string coatt_name(QuestionLevel l, const char* what) { return "coatt." + level_name(l) + "." + what; }
std::string window_name(std::size_t s) { return "phrase.w" + std::to_string(s); }
std::string window_bias(std::size_t s) { return "phrase.b" + std::to_string(s); }

void tanh_inplace(DenseArray& m) {
  for (auto& x : m.storage()) x = std::tanh(x);
}

DenseArray row_sums(const DenseArray& m) {
  DenseArray out({m.rows()});
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (double x : m.row(i)) s += x;
    out[i] = s;
  }
  return out;
}

DenseArray vector_sum(const DenseArray& a, const DenseArray& b) {
  DenseArray out(a);
  axpy(1.0, b, out);
  return out;
}

struct CoAttentionCache {
  DenseArray hv, hq;  // A Wvᵀ, Q Wqᵀ
  DenseArray g;       // Q Wc
  DenseArray pv, pq;
  CoAttention out;
};

CoAttentionCache coattention_forward(const DenseArray& q, std::size_t active, const DenseArray& a,
                                     const CoAttentionWeights& w) {
  if (q.rank() != 2 || a.rank() != 2 || q.cols() != a.cols()) {
    throw DimensionError("parallel_coattention: question " + shape_to_string(q.shape()) + " vs image " +
                         shape_to_string(a.shape()));
  }
  if (active == 0 || active > q.rows()) throw DomainError("parallel_coattention: bad question length");
  CoAttentionCache c;
  c.hv = matmul_nt(a, w.image_proj);
  c.hq = matmul_nt(q, w.question_proj);
  c.g = matmul(q, w.correlation);
  c.out.correlation = matmul_nt(c.g, a);
  tanh_inplace(c.out.correlation);
  c.pv = matmul_tn(c.out.correlation, c.hq);
  axpy(1.0, c.hv, c.pv);
  tanh_inplace(c.pv);
  c.pq = matmul(c.out.correlation, c.hv);
  axpy(1.0, c.hq, c.pq);
  tanh_inplace(c.pq);
  c.out.alpha_v = softmax(row_sums(c.pv));
  c.out.alpha_q = masked_softmax(row_sums(c.pq), active);
  c.out.v_hat = matvec_t(a, c.out.alpha_v);
  c.out.q_hat = matvec_t(q, c.out.alpha_q);
  return c;
}

struct CoAttentionGrads {
  DenseArray& correlation;
  DenseArray& image_proj;
  DenseArray& question_proj;
};

/// Adds parameter gradients into `g`, image gradients into `da` and question
/// gradients into `dq`.
void coattention_backward(const CoAttentionCache& c, const DenseArray& q, const DenseArray& a,
                          const CoAttentionWeights& w, const DenseArray& dv_hat, const DenseArray& dq_hat,
                          CoAttentionGrads g, DenseArray& da, DenseArray& dq) {
  const CoAttention& o = c.out;
  add_outer(da, o.alpha_v.data(), dv_hat.data());
  add_outer(dq, o.alpha_q.data(), dq_hat.data());
  const DenseArray dev = softmax_backward(o.alpha_v, matvec(a, dv_hat));
  const DenseArray deq = softmax_backward(o.alpha_q, matvec(q, dq_hat));

  DenseArray dpv(c.pv.shape());
  for (std::size_t i = 0; i < dpv.rows(); ++i) {
    for (std::size_t j = 0; j < dpv.cols(); ++j) dpv(i, j) = dev[i] * (1.0 - c.pv(i, j) * c.pv(i, j));
  }
  DenseArray dpq(c.pq.shape());
  for (std::size_t t = 0; t < dpq.rows(); ++t) {
    for (std::size_t j = 0; j < dpq.cols(); ++j) dpq(t, j) = deq[t] * (1.0 - c.pq(t, j) * c.pq(t, j));
  }

  DenseArray dhv = matmul_tn(o.correlation, dpq);
  axpy(1.0, dpv, dhv);
  DenseArray dhq = matmul(o.correlation, dpv);
  axpy(1.0, dpq, dhq);
  DenseArray dcorr = matmul_nt(c.hq, dpv);
  axpy(1.0, matmul_nt(dpq, c.hv), dcorr);
  for (std::size_t i = 0; i < dcorr.size(); ++i) {
    dcorr[i] *= 1.0 - o.correlation[i] * o.correlation[i];
  }

  const DenseArray dg = matmul(dcorr, a);
  axpy(1.0, matmul_tn(dcorr, c.g), da);
  axpy(1.0, matmul_tn(q, dg), g.correlation);
  axpy(1.0, matmul_nt(dg, w.correlation), dq);

  axpy(1.0, matmul_tn(dhv, a), g.image_proj);
  axpy(1.0, matmul(dhv, w.image_proj), da);
  axpy(1.0, matmul_tn(dhq, q), g.question_proj);
  axpy(1.0, matmul(dhq, w.question_proj), dq);
}

struct AnswerCache {
  std::array<DenseArray, 3> sums;  // q_hat + v_hat per level
  DenseArray hw, xp, hp, xs, hs;
  DenseArray probs;
};

AnswerCache answer_forward(const std::array<DenseArray, 3>& q_hat, const std::array<DenseArray, 3>& v_hat,
                           const AnswerWeights& w) {
  AnswerCache c;
  for (std::size_t l = 0; l < 3; ++l) {
    if (q_hat[l].size() != w.word.cols() || v_hat[l].size() != w.word.cols()) {
      throw DimensionError("answer_predict: context vectors do not match W_w");
    }
    c.sums[l] = vector_sum(q_hat[l], v_hat[l]);
  }
  c.hw = tanh(matvec(w.word, c.sums[0]));
  c.xp = concat(c.sums[1], c.hw);
  c.hp = tanh(matvec(w.phrase, c.xp));
  c.xs = concat(c.sums[2], c.hp);
  c.hs = tanh(matvec(w.question, c.xs));
  c.probs = softmax(matvec(w.output, c.hs));
  return c;
}

struct Weights {
  const DenseArray& embedding;
  std::array<const DenseArray*, kWindows> window_w;
  std::array<const DenseArray*, kWindows> window_b;
  const DenseArray& lstm_w;
  const DenseArray& lstm_u;
  const DenseArray& lstm_b;
  const DenseArray* adapt_w = nullptr;
  const DenseArray* adapt_b = nullptr;
  std::array<const DenseArray*, 9> coatt;  // level-major: Wc, Wv, Wq
  const DenseArray& ans_w;
  const DenseArray& ans_p;
  const DenseArray& ans_s;
  const DenseArray& ans_y;

  Weights(const VqaConfig& config, const ParameterStore& p)
      : embedding(p.value("embedding")),
        lstm_w(p.value("question.lstm.W")),
        lstm_u(p.value("question.lstm.U")),
        lstm_b(p.value("question.lstm.b")),
        ans_w(p.value("answer.Ww")),
        ans_p(p.value("answer.Wp")),
        ans_s(p.value("answer.Ws")),
        ans_y(p.value("answer.Wy")) {
    for (std::size_t s = 0; s < kWindows; ++s) {
      window_w[s] = &p.value(window_name(s + 1));
      window_b[s] = &p.value(window_bias(s + 1));
    }
    if (config.adaption) {
      adapt_w = &p.value("adapt.W");
      adapt_b = &p.value("adapt.b");
    }
    for (auto l : kQuestionLevels) {
      const auto k = static_cast<std::size_t>(l);
      coatt[3 * k] = &p.value(coatt_name(l, "Wc"));
      coatt[3 * k + 1] = &p.value(coatt_name(l, "Wv"));
      coatt[3 * k + 2] = &p.value(coatt_name(l, "Wq"));
    }
  }

  CoAttentionWeights level(std::size_t k) const { return {*coatt[3 * k], *coatt[3 * k + 1], *coatt[3 * k + 2]}; }
  AnswerWeights answer() const { return {ans_w, ans_p, ans_s, ans_y}; }
  LstmWeights lstm() const { return {lstm_w, lstm_u, lstm_b}; }
};

struct EncoderCache {
  QuestionFeatures features;
  std::array<DenseArray, kWindows> windows;  // T x (s D) window inputs
  std::array<DenseArray, kWindows> conv;     // T x D after tanh
  std::vector<std::uint8_t> winner;          // T x D, which window gave the max
  std::vector<LstmStep> steps;
};

EncoderCache encode(const VqaConfig& config, const Weights& w, const std::vector<TokenId>& ids) {
  const std::size_t n = ids.size(), d = config.feature_dim, t_max = config.max_question_len;
  if (n == 0) throw DomainError("encode_question_levels: empty question");
  if (n > t_max) throw DimensionError("encode_question_levels: question longer than max_question_len");
  EncoderCache c;
  c.features.length = n;
  c.features.word = DenseArray({t_max, d});
  for (std::size_t t = 0; t < n; ++t) {
    if (ids[t] == Vocabulary::kPad || ids[t] > config.vocab_size) {
      throw DomainError("encode_question_levels: id " + std::to_string(ids[t]) + " out of range");
    }
    auto src = w.embedding.row(ids[t]);
    std::copy(src.begin(), src.end(), c.features.word.row(t).begin());
  }

  c.features.phrase = DenseArray({t_max, d});
  c.winner.assign(t_max * d, 0);
  for (std::size_t s = 1; s <= kWindows; ++s) {
    DenseArray& win = c.windows[s - 1];
    DenseArray& conv = c.conv[s - 1];
    win = DenseArray({n, s * d});
    conv = DenseArray({n, d});
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t o = 0; o < s && t + o < n; ++o) {
        auto src = c.features.word.row(t + o);
        std::copy(src.begin(), src.end(), win.row(t).begin() + static_cast<std::ptrdiff_t>(o * d));
      }
    }
    conv = matmul_nt(win, *w.window_w[s - 1]);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t j = 0; j < d; ++j) conv(t, j) = std::tanh(conv(t, j) + (*w.window_b[s - 1])[j]);
    }
  }
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j < d; ++j) {
      std::uint8_t best = 0;
      for (std::uint8_t s = 1; s < kWindows; ++s) {
        if (c.conv[s](t, j) > c.conv[best](t, j)) best = s;
      }
      c.winner[t * d + j] = best;
      c.features.phrase(t, j) = c.conv[best](t, j);
    }
  }

  c.features.question = DenseArray({t_max, d});
  DenseArray h({d}), cell({d});
  for (std::size_t t = 0; t < n; ++t) {
    DenseArray x({d});
    auto src = c.features.phrase.row(t);
    std::copy(src.begin(), src.end(), x.storage().begin());
    c.steps.push_back(lstm_forward(w.lstm(), x, h, cell));
    h = c.steps.back().h;
    cell = c.steps.back().c;
    std::copy(h.storage().begin(), h.storage().end(), c.features.question.row(t).begin());
  }
  return c;
}

void check_image(const VqaConfig& config, const DenseArray& features) {
  if (features.rank() != 2 || features.rows() != config.regions || features.cols() != config.feature_dim) {
    throw DimensionError("vqa: image features " + shape_to_string(features.shape()) + " but model expects [" +
                         std::to_string(config.regions) + "x" + std::to_string(config.feature_dim) + "]");
  }
}

struct ForwardCache {
  EncoderCache enc;
  DenseArray adapted;  // tanh(A Waᵀ + b), before dropout
  DenseArray mask;     // dropout mask, empty when off
  DenseArray image;    // what co-attention sees
  std::array<CoAttentionCache, 3> levels;
  AnswerCache answer;
};

ForwardCache forward_pass(const VqaConfig& config, const Weights& w, const DenseArray& features,
                          const std::vector<TokenId>& question, Rng* dropout_rng) {
  check_image(config, features);
  ForwardCache c;
  c.enc = encode(config, w, question);
  if (config.adaption) {
    c.adapted = matmul_nt(features, *w.adapt_w);
    for (std::size_t i = 0; i < c.adapted.rows(); ++i) {
      for (std::size_t j = 0; j < c.adapted.cols(); ++j) {
        c.adapted(i, j) = std::tanh(c.adapted(i, j) + (*w.adapt_b)[j]);
      }
    }
    c.image = c.adapted;
    if (dropout_rng && config.adaption_dropout > 0.0) {
      const double keep = 1.0 - config.adaption_dropout;
      c.mask = DenseArray(c.adapted.shape());
      for (std::size_t i = 0; i < c.mask.size(); ++i) {
        c.mask[i] = dropout_rng->bernoulli(keep) ? 1.0 / keep : 0.0;
        c.image[i] *= c.mask[i];
      }
    }
  } else {
    c.image = features;
  }
  std::array<DenseArray, 3> q_hat, v_hat;
  for (auto l : kQuestionLevels) {
    const auto k = static_cast<std::size_t>(l);
    c.levels[k] = coattention_forward(c.enc.features.level(l), c.enc.features.length, c.image, w.level(k));
    q_hat[k] = c.levels[k].out.q_hat;
    v_hat[k] = c.levels[k].out.v_hat;
  }
  c.answer = answer_forward(q_hat, v_hat, w.answer());
  return c;
}

struct Grads {
  ParameterStore& p;
  DenseArray& operator()(const std::string& name) { return p.grad(name); }
};

void backward_pass(const VqaConfig& config, const Weights& w, const ForwardCache& c, const DenseArray& features,
                   const std::vector<TokenId>& question, std::size_t answer, double scale, Grads g) {
  const std::size_t d = config.feature_dim, m = config.hidden_dim, n = question.size();
  const AnswerCache& ac = c.answer;

  DenseArray dlogits = ac.probs;
  dlogits[answer] -= 1.0;
  for (auto& v : dlogits.storage()) v *= scale;
  add_outer(g("answer.Wy"), dlogits.data(), ac.hs.data());
  DenseArray dpre = matvec_t(w.ans_y, dlogits);
  for (std::size_t k = 0; k < m; ++k) dpre[k] *= 1.0 - ac.hs[k] * ac.hs[k];
  add_outer(g("answer.Ws"), dpre.data(), ac.xs.data());
  DenseArray dx = matvec_t(w.ans_s, dpre);
  std::array<DenseArray, 3> dsum;
  dsum[2] = DenseArray({d}, std::vector<double>(dx.storage().begin(), dx.storage().begin() + d));
  dpre = DenseArray({m}, std::vector<double>(dx.storage().begin() + d, dx.storage().end()));
  for (std::size_t k = 0; k < m; ++k) dpre[k] *= 1.0 - ac.hp[k] * ac.hp[k];
  add_outer(g("answer.Wp"), dpre.data(), ac.xp.data());
  dx = matvec_t(w.ans_p, dpre);
  dsum[1] = DenseArray({d}, std::vector<double>(dx.storage().begin(), dx.storage().begin() + d));
  dpre = DenseArray({m}, std::vector<double>(dx.storage().begin() + d, dx.storage().end()));
  for (std::size_t k = 0; k < m; ++k) dpre[k] *= 1.0 - ac.hw[k] * ac.hw[k];
  add_outer(g("answer.Ww"), dpre.data(), ac.sums[0].data());
  dsum[0] = matvec_t(w.ans_w, dpre);

  DenseArray dimage(c.image.shape());
  std::array<DenseArray, 3> dq;
  for (auto l : kQuestionLevels) {
    const auto k = static_cast<std::size_t>(l);
    dq[k] = DenseArray(c.enc.features.word.shape());
    coattention_backward(c.levels[k], c.enc.features.level(l), c.image, w.level(k), dsum[k], dsum[k],
                         {g(coatt_name(l, "Wc")), g(coatt_name(l, "Wv")), g(coatt_name(l, "Wq"))}, dimage, dq[k]);
  }

  if (config.adaption) {
    if (!c.mask.empty()) {
      for (std::size_t i = 0; i < dimage.size(); ++i) dimage[i] *= c.mask[i];
    }
    for (std::size_t i = 0; i < dimage.size(); ++i) dimage[i] *= 1.0 - c.adapted[i] * c.adapted[i];
    axpy(1.0, matmul_tn(dimage, features), g("adapt.W"));
    DenseArray& db = g("adapt.b");
    for (std::size_t i = 0; i < dimage.rows(); ++i) {
      for (std::size_t j = 0; j < d; ++j) db[j] += dimage(i, j);
    }
  }

  // question level: BPTT through the encoder LSTM into the phrase features
  DenseArray& dphrase = dq[1];
  DenseArray dh({d}), dc({d});
  LstmGradRefs lstm_grads{g("question.lstm.W"), g("question.lstm.U"), g("question.lstm.b")};
  for (std::size_t t = n; t-- > 0;) {
    for (std::size_t j = 0; j < d; ++j) dh[j] += dq[2](t, j);
    LstmBackward lb = lstm_backward(w.lstm(), c.enc.steps[t], dh, dc, lstm_grads);
    for (std::size_t j = 0; j < d; ++j) dphrase(t, j) += lb.dx[j];
    dh = std::move(lb.dh_prev);
    dc = std::move(lb.dc_prev);
  }

  DenseArray& dword = dq[0];
  for (std::size_t s = 1; s <= kWindows; ++s) {
    const DenseArray& conv = c.enc.conv[s - 1];
    DenseArray dconv({n, d});
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t j = 0; j < d; ++j) {
        if (c.enc.winner[t * d + j] == s - 1) dconv(t, j) = dphrase(t, j) * (1.0 - conv(t, j) * conv(t, j));
      }
    }
    axpy(1.0, matmul_tn(dconv, c.enc.windows[s - 1]), g(window_name(s)));
    DenseArray& db = g(window_bias(s));
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t j = 0; j < d; ++j) db[j] += dconv(t, j);
    }
    const DenseArray dwin = matmul(dconv, *w.window_w[s - 1]);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t o = 0; o < s && t + o < n; ++o) {
        for (std::size_t j = 0; j < d; ++j) dword(t + o, j) += dwin(t, o * d + j);
      }
    }
  }
  DenseArray& demb = g("embedding");
  for (std::size_t t = 0; t < n; ++t) {
    auto row = demb.row(question[t]);
    for (std::size_t j = 0; j < d; ++j) row[j] += dword(t, j);
  }
}

void add_gate_blocks(ParameterStore& store, const std::string& name, std::size_t hidden, std::size_t fan_in,
                     Rng& rng) {
  DenseArray w({4 * hidden, fan_in});
  for (std::size_t gate = 0; gate < 4; ++gate) {
    const DenseArray block = glorot_uniform(hidden, fan_in, rng);
    std::copy(block.storage().begin(), block.storage().end(),
              w.storage().begin() + static_cast<std::ptrdiff_t>(gate * hidden * fan_in));
  }
  store.add(name, std::move(w));
}

}  // namespace

CoAttention parallel_coattention(const DenseArray& q, std::size_t active, const DenseArray& a,
                                 const CoAttentionWeights& w) {
  return coattention_forward(q, active, a, w).out;
}

DenseArray answer_predict(const std::array<DenseArray, 3>& q_hat, const std::array<DenseArray, 3>& v_hat,
                          const AnswerWeights& w) {
  return answer_forward(q_hat, v_hat, w).probs;
}

std::vector<std::pair<std::string, Shape>> vqa_parameter_shapes(const VqaConfig& c) {
  const std::size_t d = c.feature_dim, m = c.hidden_dim;
  std::vector<std::pair<std::string, Shape>> out{
      {"answer.Wp", {m, d + m}}, {"answer.Ws", {m, d + m}},     {"answer.Ww", {m, d}},
      {"answer.Wy", {c.answers, m}}, {"embedding", {c.vocab_size + 1, d}},
      {"question.lstm.U", {4 * d, d}}, {"question.lstm.W", {4 * d, d}}, {"question.lstm.b", {4 * d}},
  };
  if (c.adaption) {
    out.push_back({"adapt.W", {d, d}});
    out.push_back({"adapt.b", {d}});
  }
  for (auto l : kQuestionLevels) {
    for (const char* what : {"Wc", "Wv", "Wq"}) out.push_back({coatt_name(l, what), {d, d}});
  }
  for (std::size_t s = 1; s <= kWindows; ++s) {
    out.push_back({window_name(s), {d, s * d}});
    out.push_back({window_bias(s), {d}});
  }
  return out;
}

VqaModel::VqaModel(const VqaConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t d = config_.feature_dim;
  for (const auto& [name, shape] : vqa_parameter_shapes(config_)) {
    if (shape.size() == 1) {
      params_.add(name, DenseArray(shape));
    } else if (name == "question.lstm.W" || name == "question.lstm.U") {
      add_gate_blocks(params_, name, d, d, rng);
    } else {
      params_.add(name, glorot_uniform(shape[0], shape[1], rng));
    }
  }
}

VqaModel::VqaModel(const VqaConfig& config, ParameterStore params) : config_(config), params_(std::move(params)) {
  config_.validate();
  for (const auto& [name, shape] : vqa_parameter_shapes(config_)) {
    if (!params_.contains(name)) throw DimensionError("vqa: missing parameter '" + name + "'");
    if (params_.value(name).shape() != shape) {
      throw DimensionError("vqa: parameter '" + name + "' has shape " + shape_to_string(params_.value(name).shape()) +
                           ", config requires " + shape_to_string(shape));
    }
  }
}

QuestionFeatures VqaModel::encode_question_levels(const std::vector<TokenId>& ids) const {
  return encode(config_, Weights(config_, params_), ids).features;
}

VqaOutput VqaModel::forward(const DenseArray& features, const std::vector<TokenId>& question) const {
  const ForwardCache c = forward_pass(config_, Weights(config_, params_), features, question, nullptr);
  VqaOutput out;
  out.answer_dist = c.answer.probs;
  for (std::size_t k = 0; k < 3; ++k) {
    out.image_attention[k] = c.levels[k].out.alpha_v;
    out.question_attention[k] = c.levels[k].out.alpha_q;
  }
  return out;
}

std::array<DenseArray, 3> VqaModel::extract_attentions(const DenseArray& features,
                                                       const std::vector<TokenId>& question) const {
  return forward(features, question).image_attention;
}

std::size_t VqaModel::predict(const DenseArray& features, const std::vector<TokenId>& question) const {
  return argmax(forward(features, question).answer_dist);
}

namespace {

VqaLoss run_batch(const VqaConfig& config, const ParameterStore& params, std::span<const VqaExample> batch,
                  Rng& rng, bool train, ParameterStore* grads) {
  if (batch.empty()) throw DomainError("vqa training_loss: empty batch");
  const Weights w(config, params);
  const double scale = 1.0 / static_cast<double>(batch.size());
  VqaLoss loss;
  for (const auto& ex : batch) {
    if (!ex.features) throw DomainError("vqa example without image features");
    if (ex.answer >= config.answers) throw DomainError("vqa example answer index out of range");
    const ForwardCache c = forward_pass(config, w, *ex.features, ex.question, train ? &rng : nullptr);
    loss.total += cross_entropy(c.answer.probs, ex.answer);
    loss.count += 1;
    if (argmax(c.answer.probs) == ex.answer) loss.correct += 1;
    if (grads) backward_pass(config, w, c, *ex.features, ex.question, ex.answer, scale, Grads{*grads});
  }
  loss.total *= scale;
  if (!std::isfinite(loss.total)) throw TrainingError("vqa: non-finite training loss");
  return loss;
}

}  // namespace

VqaLoss VqaModel::training_loss(std::span<const VqaExample> batch, Rng& rng, bool train, bool accumulate) {
  return run_batch(config_, params_, batch, rng, train, accumulate ? &params_ : nullptr);
}

VqaLoss VqaModel::evaluate_loss(const VqaConfig& config, const ParameterStore& params,
                                std::span<const VqaExample> batch, Rng& rng, bool train) {
  return run_batch(config, params, batch, rng, train, nullptr);
}

std::optional<std::size_t> AnswerList::find(const std::string& answer) const {
  auto it = index.find(answer);
  if (it == index.end()) return std::nullopt;
  return it->second;
}

AnswerList build_answer_list(const std::vector<std::string>& answers, std::size_t top_k) {
  if (answers.empty()) throw DomainError("build_answer_list: no answers");
  if (top_k == 0) throw DomainError("build_answer_list: top_k must be positive");
  std::map<std::string, std::size_t> counts;
  for (const auto& a : answers) ++counts[a];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) { return x.second > y.second; });
  AnswerList list;
  for (std::size_t i = 0; i < ranked.size() && i < top_k; ++i) {
    list.index[ranked[i].first] = list.answers.size();
    list.answers.push_back(ranked[i].first);
  }
  for (const auto& a : answers) {
    if (list.index.count(a)) {
      ++list.kept;
    } else {
      ++list.dropped;
    }
  }
  return list;
}

std::vector<TokenId> encode_question(std::string_view text, const Vocabulary& vocab, std::size_t max_len) {
  std::vector<TokenId> ids = encode_words(tokenize(text), vocab);
  if (ids.size() > max_len) ids.resize(max_len);
  return ids;
}

}  // namespace attnctl
