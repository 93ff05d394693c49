#include "attnctl/captioner.hpp"

#include <cmath>

namespace attnctl {

namespace {

// Parameter names. Shapes: see captioner_parameter_shapes.
constexpr const char* kInitCW = "init.c.W";
constexpr const char* kInitCB = "init.c.b";
constexpr const char* kInitHW = "init.h.W";
constexpr const char* kInitHB = "init.h.b";
constexpr const char* kAttnFeature = "attn.feature_proj";
constexpr const char* kAttnHidden = "attn.hidden_proj";
constexpr const char* kAttnBias = "attn.hidden_bias";
constexpr const char* kGateW = "gate.W";
constexpr const char* kGateB = "gate.b";
constexpr const char* kEmbedding = "embedding";
constexpr const char* kLstmW = "lstm.W";
constexpr const char* kLstmU = "lstm.U";
constexpr const char* kLstmB = "lstm.b";
constexpr const char* kOutContext = "out.context";
constexpr const char* kOutHidden = "out.hidden";
constexpr const char* kOutBias = "out.bias";
constexpr const char* kOutVocab = "out.vocab";

struct Weights {
  const DenseArray& init_c_w;
  const DenseArray& init_c_b;
  const DenseArray& init_h_w;
  const DenseArray& init_h_b;
  const DenseArray& attn_feature;
  const DenseArray& attn_hidden;
  const DenseArray& attn_bias;
  const DenseArray& gate_w;
  const DenseArray& gate_b;
  const DenseArray& embedding;
  const DenseArray& lstm_w;
  const DenseArray& lstm_u;
  const DenseArray& lstm_b;
  const DenseArray& out_context;
  const DenseArray& out_hidden;
  const DenseArray& out_bias;
  const DenseArray& out_vocab;

  explicit Weights(const ParameterStore& p)
      : init_c_w(p.value(kInitCW)), init_c_b(p.value(kInitCB)), init_h_w(p.value(kInitHW)),
        init_h_b(p.value(kInitHB)), attn_feature(p.value(kAttnFeature)), attn_hidden(p.value(kAttnHidden)),
        attn_bias(p.value(kAttnBias)), gate_w(p.value(kGateW)), gate_b(p.value(kGateB)),
        embedding(p.value(kEmbedding)), lstm_w(p.value(kLstmW)), lstm_u(p.value(kLstmU)),
        lstm_b(p.value(kLstmB)), out_context(p.value(kOutContext)), out_hidden(p.value(kOutHidden)),
        out_bias(p.value(kOutBias)), out_vocab(p.value(kOutVocab)) {}

  LstmWeights lstm() const { return {lstm_w, lstm_u, lstm_b}; }
};

struct Grads {
  DenseArray& init_c_w;
  DenseArray& init_c_b;
  DenseArray& init_h_w;
  DenseArray& init_h_b;
  DenseArray& attn_feature;
  DenseArray& attn_hidden;
  DenseArray& attn_bias;
  DenseArray& gate_w;
  DenseArray& gate_b;
  DenseArray& embedding;
  DenseArray& lstm_w;
  DenseArray& lstm_u;
  DenseArray& lstm_b;
  DenseArray& out_context;
  DenseArray& out_hidden;
  DenseArray& out_bias;
  DenseArray& out_vocab;

  explicit Grads(ParameterStore& p)
      : init_c_w(p.grad(kInitCW)), init_c_b(p.grad(kInitCB)), init_h_w(p.grad(kInitHW)),
        init_h_b(p.grad(kInitHB)), attn_feature(p.grad(kAttnFeature)), attn_hidden(p.grad(kAttnHidden)),
        attn_bias(p.grad(kAttnBias)), gate_w(p.grad(kGateW)), gate_b(p.grad(kGateB)),
        embedding(p.grad(kEmbedding)), lstm_w(p.grad(kLstmW)), lstm_u(p.grad(kLstmU)),
        lstm_b(p.grad(kLstmB)), out_context(p.grad(kOutContext)), out_hidden(p.grad(kOutHidden)),
        out_bias(p.grad(kOutBias)), out_vocab(p.grad(kOutVocab)) {}
};

void check_features(const CaptionerConfig& config, const DenseArray& features) {
  if (features.rank() != 2 || features.rows() != config.regions || features.cols() != config.feature_dim) {
    throw DimensionError("captioner: features " + shape_to_string(features.shape()) + " but model expects [" +
                         std::to_string(config.regions) + "x" + std::to_string(config.feature_dim) + "]");
  }
}

DenseArray column_mean(const DenseArray& a) {
  DenseArray m({a.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto row = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) m[j] += row[j];
  }
  for (auto& x : m.storage()) x /= static_cast<double>(a.rows());
  return m;
}

DenseArray tanh_affine(const DenseArray& w, const DenseArray& b, const DenseArray& x) {
  DenseArray out = matvec(w, x);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i] + b[i]);
  return out;
}

/// Attention pre-activation S = A W_pa + (W_ph h + b) per row, and the
/// region scores e_i = sum_j ReLU(S_ij).
struct AttentionScores {
  DenseArray pre;     // L x D
  DenseArray scores;  // L
};

AttentionScores attention_scores(const Weights& w, const DenseArray& projected, const DenseArray& h_prev) {
  DenseArray hidden = matvec(w.attn_hidden, h_prev);
  axpy(1.0, w.attn_bias, hidden);
  AttentionScores out{projected, DenseArray({projected.rows()})};
  const std::size_t d = projected.cols();
  for (std::size_t i = 0; i < projected.rows(); ++i) {
    double* row = out.pre.row(i).data();
    double e = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      row[j] += hidden[j];
      if (row[j] > 0.0) e += row[j];
    }
    out.scores[i] = e;
  }
  return out;
}

DenseArray context_vector(const DenseArray& features, const DenseArray& alpha) {
  return matvec_t(features, alpha);
}

double gate_value(const Weights& w, const DenseArray& h_prev) {
  return sigmoid(dot(w.gate_w.data(), h_prev.data()) + w.gate_b[0]);
}

DenseArray lstm_input(const Weights& w, TokenId y_prev, const DenseArray& z_hat) {
  const std::size_t d = z_hat.size();
  DenseArray x({2 * d});
  auto emb = w.embedding.row(y_prev);
  for (std::size_t j = 0; j < d; ++j) {
    x[j] = emb[j];
    x[d + j] = z_hat[j];
  }
  return x;
}

DenseArray apply_mask(const DenseArray& v, const DenseArray* mask) {
  if (!mask) return v;
  DenseArray out(v);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*mask)[i];
  return out;
}

DenseArray dropout_mask(std::size_t n, double rate, Rng& rng) {
  DenseArray mask({n});
  const double keep = 1.0 - rate;
  for (auto& m : mask.storage()) m = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
  return mask;
}

struct DeepOutput {
  DenseArray hidden_dropped;  // rho(h)
  DenseArray out;             // o
  DenseArray out_dropped;     // rho(o)
  DenseArray logits;
};

DeepOutput deep_output(const Weights& w, TokenId y_prev, const DenseArray& z_hat, const DenseArray& h,
                       const DenseArray* mask_h, const DenseArray* mask_o) {
  DeepOutput r;
  r.hidden_dropped = apply_mask(h, mask_h);
  r.out = matvec(w.out_context, z_hat);
  axpy(1.0, matvec(w.out_hidden, r.hidden_dropped), r.out);
  auto emb = w.embedding.row(y_prev);
  for (std::size_t j = 0; j < r.out.size(); ++j) r.out[j] += emb[j] + w.out_bias[j];
  r.out_dropped = apply_mask(r.out, mask_o);
  r.logits = matvec(w.out_vocab, r.out_dropped);
  return r;
}

std::size_t target_steps(const TokenSequence& caption) {
  if (caption.ids.empty() || caption.ids[0] != Vocabulary::kStart) {
    throw DomainError("training caption must begin with the start id");
  }
  for (std::size_t pos = 1; pos < caption.ids.size(); ++pos) {
    if (caption.ids[pos] == Vocabulary::kEnd) return pos;
    if (caption.ids[pos] == Vocabulary::kPad) break;
  }
  throw DomainError("training caption has no end id");
}

struct StepCache {
  TokenId input = 0;
  TokenId target = 0;
  AttentionScores attn;
  DenseArray alpha;
  DenseArray z;
  double beta = 0.0;
  DenseArray z_hat;
  LstmStep lstm;
  DenseArray mask_h, mask_o;
  bool dropout = false;
  DeepOutput output;
  DenseArray probs;
};

/// Forward (and, when grads is non-null, backward scaled by `scale`) for one
/// teacher-forced example.
LossBreakdown run_example(const CaptionerConfig& config, const Weights& w, const TrainingExample& ex, Rng& rng,
                          bool train, Grads* grads, double scale) {
  const DenseArray& a = ex.image->features;
  check_features(config, a);
  const std::size_t steps = target_steps(ex.caption);
  const std::size_t d = config.feature_dim;
  const std::size_t regions = config.regions;
  const bool use_dropout = train && config.dropout_rate > 0.0;

  const DenseArray mean = column_mean(a);
  const DenseArray c0 = tanh_affine(w.init_c_w, w.init_c_b, mean);
  const DenseArray h0 = tanh_affine(w.init_h_w, w.init_h_b, mean);
  const DenseArray projected = matmul(a, w.attn_feature);

  LossBreakdown loss;
  std::vector<StepCache> cache(steps);
  DenseArray h = h0, c = c0;
  DenseArray attention_sum({regions});
  for (std::size_t t = 0; t < steps; ++t) {
    StepCache& s = cache[t];
    s.input = ex.caption.ids[t];
    s.target = ex.caption.ids[t + 1];
    s.attn = attention_scores(w, projected, h);
    s.alpha = softmax(s.attn.scores);
    axpy(1.0, s.alpha, attention_sum);
    s.z = context_vector(a, s.alpha);
    s.beta = gate_value(w, h);
    s.z_hat = s.z;
    for (auto& v : s.z_hat.storage()) v *= s.beta;
    s.lstm = lstm_forward(w.lstm(), lstm_input(w, s.input, s.z_hat), h, c);
    s.dropout = use_dropout;
    if (use_dropout) {
      s.mask_h = dropout_mask(config.hidden_dim, config.dropout_rate, rng);
      s.mask_o = dropout_mask(d, config.dropout_rate, rng);
    }
    s.output = deep_output(w, s.input, s.z_hat, s.lstm.h, use_dropout ? &s.mask_h : nullptr,
                           use_dropout ? &s.mask_o : nullptr);
    s.probs = softmax(s.output.logits);
    loss.nll += cross_entropy(s.probs, s.target);
    loss.predictions += 1;
    if (argmax(s.probs, 1) == s.target) loss.correct += 1;
    h = s.lstm.h;
    c = s.lstm.c;
  }
  for (std::size_t i = 0; i < regions; ++i) {
    const double gap = 1.0 - attention_sum[i];
    loss.penalty += config.lambda * gap * gap;
  }
  loss.total = loss.nll + loss.penalty;
  if (!std::isfinite(loss.total)) throw TrainingError("captioner: non-finite training loss");
  if (!grads) return loss;

  Grads& g = *grads;
  DenseArray penalty_grad({regions});
  for (std::size_t i = 0; i < regions; ++i) penalty_grad[i] = -2.0 * config.lambda * (1.0 - attention_sum[i]) * scale;

  DenseArray dprojected({regions, d});
  DenseArray dh_next({config.hidden_dim});
  DenseArray dc_next({config.hidden_dim});
  const std::size_t classes = config.output_classes();
  for (std::size_t tt = steps; tt-- > 0;) {
    StepCache& s = cache[tt];
    DenseArray dlogits = s.probs;
    dlogits[s.target] -= 1.0;
    for (auto& v : dlogits.storage()) v *= scale;
    (void)classes;

    add_outer(g.out_vocab, dlogits.data(), s.output.out_dropped.data());
    DenseArray dout = matvec_t(w.out_vocab, dlogits);
    if (s.dropout)
      for (std::size_t j = 0; j < d; ++j) dout[j] *= s.mask_o[j];

    auto demb = g.embedding.row(s.input);
    for (std::size_t j = 0; j < d; ++j) demb[j] += dout[j];
    add_outer(g.out_context, dout.data(), s.z_hat.data());
    DenseArray dz_hat = matvec_t(w.out_context, dout);
    axpy(1.0, dout, g.out_bias);
    add_outer(g.out_hidden, dout.data(), s.output.hidden_dropped.data());
    DenseArray dh = matvec_t(w.out_hidden, dout);
    if (s.dropout)
      for (std::size_t k = 0; k < dh.size(); ++k) dh[k] *= s.mask_h[k];
    axpy(1.0, dh_next, dh);

    LstmBackward lb = lstm_backward(w.lstm(), s.lstm, dh, dc_next, {g.lstm_w, g.lstm_u, g.lstm_b});
    for (std::size_t j = 0; j < d; ++j) {
      demb[j] += lb.dx[j];
      dz_hat[j] += lb.dx[d + j];
    }

    const double dbeta = dot(dz_hat.data(), s.z.data());
    DenseArray dz = dz_hat;
    for (auto& v : dz.storage()) v *= s.beta;
    const double dgate = dbeta * s.beta * (1.0 - s.beta);
    axpy(dgate, s.lstm.h_prev, g.gate_w);
    g.gate_b[0] += dgate;
    DenseArray dh_prev = lb.dh_prev;
    axpy(dgate, w.gate_w, dh_prev);

    DenseArray dalpha = matvec(a, dz);
    axpy(1.0, penalty_grad, dalpha);
    const DenseArray dscores = softmax_backward(s.alpha, dalpha);
    DenseArray dhidden({d});
    for (std::size_t i = 0; i < regions; ++i) {
      const double de = dscores[i];
      if (de == 0.0) continue;
      const double* pre = s.attn.pre.row(i).data();
      double* dp = dprojected.row(i).data();
      for (std::size_t j = 0; j < d; ++j) {
        if (pre[j] > 0.0) {
          dp[j] += de;
          dhidden[j] += de;
        }
      }
    }
    add_outer(g.attn_hidden, dhidden.data(), s.lstm.h_prev.data());
    axpy(1.0, dhidden, g.attn_bias);
    axpy(1.0, matvec_t(w.attn_hidden, dhidden), dh_prev);

    dh_next = std::move(dh_prev);
    dc_next = std::move(lb.dc_prev);
  }
  axpy(1.0, matmul_tn(a, dprojected), g.attn_feature);

  DenseArray dpre_c(dc_next);
  for (std::size_t k = 0; k < dpre_c.size(); ++k) dpre_c[k] *= 1.0 - c0[k] * c0[k];
  add_outer(g.init_c_w, dpre_c.data(), mean.data());
  axpy(1.0, dpre_c, g.init_c_b);
  DenseArray dpre_h(dh_next);
  for (std::size_t k = 0; k < dpre_h.size(); ++k) dpre_h[k] *= 1.0 - h0[k] * h0[k];
  add_outer(g.init_h_w, dpre_h.data(), mean.data());
  axpy(1.0, dpre_h, g.init_h_b);
  return loss;
}

}  // namespace

// ---- config ---------------------------------------------------------------

std::size_t CaptionerConfig::grid() const {
  return static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(regions))));
}

void CaptionerConfig::validate() const {
  if (regions == 0 || grid() * grid() != regions) {
    throw DomainError("captioner config: region count " + std::to_string(regions) + " is not a perfect square");
  }
  if (feature_dim == 0) throw DomainError("captioner config: feature_dim must be positive");
  if (hidden_dim != 2 * feature_dim) {
    throw DomainError("captioner config: hidden_dim must equal 2 * feature_dim");
  }
  if (vocab_size < 3) throw DomainError("captioner config: vocab_size must cover start, end and a word");
  if (max_len == 0) throw DomainError("captioner config: max_len must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw DomainError("captioner config: dropout in [0,1)");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw DomainError("captioner config: lambda must be >= 0");
}

std::vector<std::pair<std::string, Shape>> captioner_parameter_shapes(const CaptionerConfig& c) {
  const std::size_t d = c.feature_dim, h = c.hidden_dim, v1 = c.output_classes();
  return {
      {kAttnBias, {d}},       {kAttnFeature, {d, d}},     {kAttnHidden, {d, h}},   {kEmbedding, {v1, d}},
      {kGateB, {1}},          {kGateW, {h}},              {kInitCB, {h}},          {kInitCW, {h, d}},
      {kInitHB, {h}},         {kInitHW, {h, d}},          {kLstmB, {4 * h}},       {kLstmU, {4 * h, h}},
      {kLstmW, {4 * h, h}},   {kOutBias, {d}},            {kOutContext, {d, d}},   {kOutHidden, {d, h}},
      {kOutVocab, {v1, d}},
  };
}

// ---- model ----------------------------------------------------------------

Captioner::Captioner(const CaptionerConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  for (const auto& [name, shape] : captioner_parameter_shapes(config_)) {
    if (shape.size() == 1) {
      params_.add(name, DenseArray(shape));
    } else if (name == kLstmW || name == kLstmU) {
      // Each gate block gets its own fan-in/fan-out.
      const std::size_t h = config_.hidden_dim;
      DenseArray w(shape);
      for (std::size_t gate = 0; gate < 4; ++gate) {
        DenseArray block = glorot_uniform(h, shape[1], rng);
        std::copy(block.storage().begin(), block.storage().end(), w.storage().begin() + gate * h * shape[1]);
      }
      params_.add(name, std::move(w));
    } else {
      params_.add(name, glorot_uniform(shape[0], shape[1], rng));
    }
  }
}

Captioner::Captioner(const CaptionerConfig& config, ParameterStore params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  for (const auto& [name, shape] : captioner_parameter_shapes(config_)) {
    if (!params_.contains(name)) throw DimensionError("captioner: missing parameter '" + name + "'");
    if (params_.value(name).shape() != shape) {
      throw DimensionError("captioner: parameter '" + name + "' has shape " +
                           shape_to_string(params_.value(name).shape()) + ", config requires " +
                           shape_to_string(shape));
    }
  }
}

InitialState Captioner::init_state(const ImageAnnotation& image) const {
  check_features(config_, image.features);
  const Weights w(params_);
  const DenseArray mean = column_mean(image.features);
  return {tanh_affine(w.init_c_w, w.init_c_b, mean), tanh_affine(w.init_h_w, w.init_h_b, mean)};
}

DenseArray Captioner::attend(const ImageAnnotation& image, const DenseArray& h_prev) const {
  check_features(config_, image.features);
  const Weights w(params_);
  return softmax(attention_scores(w, matmul(image.features, w.attn_feature), h_prev).scores);
}

GatedContext Captioner::gated_context(const ImageAnnotation& image, const DenseArray& alpha,
                                      const DenseArray& h_prev) const {
  check_features(config_, image.features);
  if (alpha.size() != config_.regions) throw DimensionError("gated_context: attention length mismatch");
  const Weights w(params_);
  GatedContext g;
  g.z = context_vector(image.features, alpha);
  g.beta = gate_value(w, h_prev);
  g.z_hat = g.z;
  for (auto& v : g.z_hat.storage()) v *= g.beta;
  return g;
}

LstmStep Captioner::lstm_step(const DenseArray& x, const DenseArray& h_prev, const DenseArray& c_prev) const {
  const Weights w(params_);
  return lstm_forward(w.lstm(), x, h_prev, c_prev);
}

DenseArray Captioner::decode_word(TokenId y_prev, const DenseArray& z_hat, const DenseArray& h,
                                  const DenseArray* mask_h, const DenseArray* mask_o) const {
  if (y_prev >= config_.output_classes()) throw DomainError("decode_word: previous id out of range");
  const Weights w(params_);
  return deep_output(w, y_prev, z_hat, h, mask_h, mask_o).logits;
}

std::vector<TokenId> DecodeResult::words() const {
  std::vector<TokenId> out;
  for (TokenId id : tokens.ids) {
    if (id == Vocabulary::kEnd) break;
    out.push_back(id);
  }
  return out;
}

DecodeResult Captioner::greedy_decode(const ImageAnnotation& image, const InterfaceMethod& method,
                                      std::optional<std::size_t> max_steps) const {
  check_features(config_, image.features);
  validate_method(method, config_.regions);
  const Weights w(params_);
  const std::size_t limit = max_steps.value_or(config_.max_len + 1);
  const DenseArray& a = image.features;
  const DenseArray mean = column_mean(a);
  DenseArray c = tanh_affine(w.init_c_w, w.init_c_b, mean);
  DenseArray h = tanh_affine(w.init_h_w, w.init_h_b, mean);
  const DenseArray projected = matmul(a, w.attn_feature);

  DecodeResult result;
  std::vector<double> trace;
  TokenId prev = Vocabulary::kStart;
  for (std::size_t t = 1; t <= limit; ++t) {
    const DenseArray alpha_model = softmax(attention_scores(w, projected, h).scores);
    const DenseArray alpha = effective_attention(t, alpha_model, method);
    DenseArray z = context_vector(a, alpha);
    const double beta = gate_value(w, h);
    DenseArray z_hat = z;
    for (auto& v : z_hat.storage()) v *= beta;
    LstmStep step = lstm_forward(w.lstm(), lstm_input(w, prev, z_hat), h, c);
    const DenseArray logits = deep_output(w, prev, z_hat, step.h, nullptr, nullptr).logits;
    const auto word = static_cast<TokenId>(argmax(logits, 1));

    result.tokens.ids.push_back(word);
    trace.insert(trace.end(), alpha.storage().begin(), alpha.storage().end());
    result.betas.push_back(beta);
    result.contexts.push_back(std::move(z));
    h = std::move(step.h);
    c = std::move(step.c);
    prev = word;
    if (word == Vocabulary::kEnd) break;
  }
  result.attention_trace = DenseArray({result.tokens.ids.size(), config_.regions}, std::move(trace));
  return result;
}

LossBreakdown Captioner::evaluate_loss(const CaptionerConfig& config, const ParameterStore& params,
                                       std::span<const TrainingExample> batch, Rng& rng, bool train) {
  if (batch.empty()) throw DomainError("training_loss: empty batch");
  const Weights w(params);
  LossBreakdown total;
  for (const auto& ex : batch) {
    const LossBreakdown part = run_example(config, w, ex, rng, train, nullptr, 0.0);
    total.nll += part.nll;
    total.penalty += part.penalty;
    total.predictions += part.predictions;
    total.correct += part.correct;
  }
  const double n = static_cast<double>(batch.size());
  total.nll /= n;
  total.penalty /= n;
  total.total = total.nll + total.penalty;
  return total;
}

LossBreakdown Captioner::training_loss(std::span<const TrainingExample> batch, Rng& rng, bool train,
                                       bool accumulate) {
  if (!accumulate) return evaluate_loss(config_, params_, batch, rng, train);
  if (batch.empty()) throw DomainError("training_loss: empty batch");
  const Weights w(params_);
  Grads g(params_);
  const double scale = 1.0 / static_cast<double>(batch.size());
  LossBreakdown total;
  for (const auto& ex : batch) {
    const LossBreakdown part = run_example(config_, w, ex, rng, train, &g, scale);
    total.nll += part.nll;
    total.penalty += part.penalty;
    total.predictions += part.predictions;
    total.correct += part.correct;
  }
  total.nll *= scale;
  total.penalty *= scale;
  total.total = total.nll + total.penalty;
  return total;
}

}  // namespace attnctl
