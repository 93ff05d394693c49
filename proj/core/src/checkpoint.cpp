#include "attnctl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace attnctl {

using nlohmann::ordered_json;

namespace {

constexpr char kMagic[4] = {'S', 'A', 'T', 'C'};
constexpr std::size_t kHeader = 4 + 1 + 8;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

}  // namespace

std::string encode_checkpoint(const CheckpointContent& content) {
  ordered_json manifest;
  manifest["kind"] = content.kind;
  manifest["config"] = ordered_json::parse(content.config_json);
  manifest["extras"] = ordered_json::object();
  for (const auto& [k, v] : content.extras) manifest["extras"][k] = v;
  manifest["tensors"] = ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, entry] : content.params.entries()) {
    manifest["tensors"].push_back({{"name", name}, {"shape", entry.value.shape()}, {"offset", offset}});
    offset += entry.value.size() * sizeof(double);
  }
  manifest["payload_bytes"] = offset;
  const std::string text = manifest.dump();

  std::string out(kMagic, 4);
  out.push_back(static_cast<char>(kCheckpointVersion));
  put_u64(out, text.size());
  out += text;
  for (const auto& [name, entry] : content.params.entries()) {
    for (double v : entry.value.storage()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

CheckpointContent decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("checkpoint: bad magic bytes");
  if (bytes.size() < 5) throw CorruptionError("checkpoint: truncated header");
  const auto version = static_cast<std::uint8_t>(bytes[4]);
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  if (bytes.size() < kHeader) throw CorruptionError("checkpoint: truncated header");
  const std::uint64_t manifest_len = get_u64(bytes, 5);
  if (manifest_len > bytes.size() - kHeader) throw CorruptionError("checkpoint: truncated manifest");

  CheckpointContent content;
  ordered_json manifest;
  try {
    manifest = ordered_json::parse(bytes.substr(kHeader, manifest_len));
    content.kind = manifest.at("kind").get<std::string>();
    content.config_json = manifest.at("config").dump();
    for (const auto& [k, v] : manifest.at("extras").items()) content.extras[k] = v.get<std::string>();
  } catch (const ordered_json::exception& e) {
    throw CorruptionError(std::string("checkpoint: bad manifest: ") + e.what());
  }

  const std::size_t payload_start = kHeader + manifest_len;
  const std::uint64_t payload_bytes = manifest.value("payload_bytes", std::uint64_t{0});
  if (bytes.size() - payload_start != payload_bytes) {
    throw CorruptionError("checkpoint: payload holds " + std::to_string(bytes.size() - payload_start) +
                          " bytes, manifest declares " + std::to_string(payload_bytes));
  }
  try {
    for (const auto& t : manifest.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      const auto shape = t.at("shape").get<Shape>();
      const auto offset = t.at("offset").get<std::uint64_t>();
      std::uint64_t count = 1;
      for (auto e : shape) count *= e;
      if (shape.empty() || count == 0 || offset % 8 != 0 || offset > payload_bytes ||
          count > (payload_bytes - offset) / sizeof(double)) {
        throw CorruptionError("checkpoint: tensor '" + name + "' lies outside the payload");
      }
      std::vector<double> data(count);
      for (std::size_t i = 0; i < count; ++i) {
        data[i] = std::bit_cast<double>(get_u64(bytes, payload_start + offset + 8 * i));
      }
      content.params.add(name, DenseArray(shape, std::move(data)));
    }
  } catch (const ordered_json::exception& e) {
    throw CorruptionError(std::string("checkpoint: bad tensor table: ") + e.what());
  } catch (const DimensionError& e) {
    throw CorruptionError(std::string("checkpoint: ") + e.what());
  }
  return content;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointContent& content) {
  const std::string bytes = encode_checkpoint(content);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

CheckpointContent read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptionError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

// ---- configs ----------------------------------------------------------------

std::string captioner_config_json(const CaptionerConfig& c) {
  ordered_json j{{"regions", c.regions},   {"feature_dim", c.feature_dim}, {"hidden_dim", c.hidden_dim},
                 {"vocab_size", c.vocab_size}, {"max_len", c.max_len},   {"dropout_rate", c.dropout_rate},
                 {"lambda", c.lambda}};
  return j.dump();
}

CaptionerConfig captioner_config_from_json(const std::string& text) {
  const auto j = ordered_json::parse(text);
  CaptionerConfig c;
  c.regions = j.at("regions").get<std::size_t>();
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.lambda = j.at("lambda").get<double>();
  return c;
}

std::string vqa_config_json(const VqaConfig& c) {
  ordered_json j{{"regions", c.regions},
                 {"feature_dim", c.feature_dim},
                 {"hidden_dim", c.hidden_dim},
                 {"vocab_size", c.vocab_size},
                 {"max_question_len", c.max_question_len},
                 {"answers", c.answers},
                 {"adaption", c.adaption},
                 {"adaption_dropout", c.adaption_dropout}};
  return j.dump();
}

VqaConfig vqa_config_from_json(const std::string& text) {
  const auto j = ordered_json::parse(text);
  VqaConfig c;
  c.regions = j.at("regions").get<std::size_t>();
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_question_len = j.at("max_question_len").get<std::size_t>();
  c.answers = j.at("answers").get<std::size_t>();
  c.adaption = j.at("adaption").get<bool>();
  c.adaption_dropout = j.at("adaption_dropout").get<double>();
  return c;
}

namespace {

ParameterStore values_only(const ParameterStore& params) {
  ParameterStore out;
  for (const auto& [name, entry] : params.entries()) out.add(name, entry.value);
  return out;
}

template <class Config, class Fn>
Config parse_config(const CheckpointContent& content, const char* kind, Fn parse) {
  if (content.kind != kind) {
    throw FormatError(std::string("checkpoint holds a '") + content.kind + "' model, expected '" + kind + "'");
  }
  try {
    Config config = parse(content.config_json);
    config.validate();
    return config;
  } catch (const ordered_json::exception& e) {
    throw CorruptionError(std::string("checkpoint: bad config: ") + e.what());
  } catch (const DomainError& e) {
    throw CorruptionError(std::string("checkpoint: bad config: ") + e.what());
  }
}

const std::string& extra(const CheckpointContent& content, const std::string& key) {
  auto it = content.extras.find(key);
  if (it == content.extras.end()) throw CorruptionError("checkpoint: missing '" + key + "' entry");
  return it->second;
}

}  // namespace

void save_captioner(const std::filesystem::path& path, const Captioner& model, const Vocabulary& vocab) {
  CheckpointContent content;
  content.kind = "captioner";
  content.config_json = captioner_config_json(model.config());
  content.extras["vocab"] = vocab.serialize();
  content.params = values_only(model.params());
  write_checkpoint(path, content);
}

CaptionerBundle load_captioner(const std::filesystem::path& path, std::optional<std::size_t> expected_regions,
                               std::optional<std::size_t> expected_dim) {
  CheckpointContent content = read_checkpoint(path);
  const auto config = parse_config<CaptionerConfig>(content, "captioner", captioner_config_from_json);
  if (expected_regions && *expected_regions != config.regions) {
    throw DimensionError("checkpoint was trained on " + std::to_string(config.regions) + " regions, data has " +
                         std::to_string(*expected_regions));
  }
  if (expected_dim && *expected_dim != config.feature_dim) {
    throw DimensionError("checkpoint was trained on feature_dim " + std::to_string(config.feature_dim) +
                         ", data has " + std::to_string(*expected_dim));
  }
  Vocabulary vocab = Vocabulary::parse(extra(content, "vocab"));
  if (vocab.size() != config.vocab_size) throw CorruptionError("checkpoint: vocabulary size contradicts config");
  try {
    return {Captioner(config, std::move(content.params)), std::move(vocab)};
  } catch (const DimensionError& e) {
    throw CorruptionError(std::string("checkpoint: ") + e.what());
  }
}

void save_vqa(const std::filesystem::path& path, const VqaModel& model, const Vocabulary& question_vocab,
              const std::vector<std::string>& answers) {
  CheckpointContent content;
  content.kind = "vqa";
  content.config_json = vqa_config_json(model.config());
  content.extras["question_vocab"] = question_vocab.serialize();
  content.extras["answers"] = ordered_json(answers).dump();
  content.params = values_only(model.params());
  write_checkpoint(path, content);
}

VqaBundle load_vqa(const std::filesystem::path& path) {
  CheckpointContent content = read_checkpoint(path);
  const auto config = parse_config<VqaConfig>(content, "vqa", vqa_config_from_json);
  Vocabulary vocab = Vocabulary::parse(extra(content, "question_vocab"));
  std::vector<std::string> answers;
  try {
    answers = ordered_json::parse(extra(content, "answers")).get<std::vector<std::string>>();
  } catch (const ordered_json::exception& e) {
    throw CorruptionError(std::string("checkpoint: bad answer list: ") + e.what());
  }
  if (answers.size() != config.answers || vocab.size() != config.vocab_size) {
    throw CorruptionError("checkpoint: answer list or vocabulary contradicts config");
  }
  try {
    return {VqaModel(config, std::move(content.params)), std::move(vocab), std::move(answers)};
  } catch (const DimensionError& e) {
    throw CorruptionError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace attnctl
