#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "attnctl/captioner.hpp"
#include "attnctl/params.hpp"
#include "attnctl/text.hpp"
#include "attnctl/vqa.hpp"

namespace attnctl {

/// Wrong magic bytes or unsupported version.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Truncated payload, inconsistent manifest, or tensors that contradict the
/// stored config.
class CorruptionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint8_t kCheckpointVersion = 1;

/// Parameter values plus string metadata. Layout: "SATC", version byte,
/// u64 LE manifest length, JSON manifest, LE f64 payload.
struct CheckpointContent {
  std::string kind;
  std::string config_json;
  std::map<std::string, std::string> extras;
  ParameterStore params;  // values only
};

std::string encode_checkpoint(const CheckpointContent& content);
CheckpointContent decode_checkpoint(const std::string& bytes);
void write_checkpoint(const std::filesystem::path& path, const CheckpointContent& content);
CheckpointContent read_checkpoint(const std::filesystem::path& path);

std::string captioner_config_json(const CaptionerConfig& config);
CaptionerConfig captioner_config_from_json(const std::string& text);
std::string vqa_config_json(const VqaConfig& config);
VqaConfig vqa_config_from_json(const std::string& text);

struct CaptionerBundle {
  Captioner model;
  Vocabulary vocab;
};

void save_captioner(const std::filesystem::path& path, const Captioner& model, const Vocabulary& vocab);
/// DimensionError when `expected_regions`/`expected_dim` disagree with the
/// stored config.
CaptionerBundle load_captioner(const std::filesystem::path& path, std::optional<std::size_t> expected_regions = {},
                               std::optional<std::size_t> expected_dim = {});

struct VqaBundle {
  VqaModel model;
  Vocabulary question_vocab;
  std::vector<std::string> answers;
};

void save_vqa(const std::filesystem::path& path, const VqaModel& model, const Vocabulary& question_vocab,
              const std::vector<std::string>& answers);
VqaBundle load_vqa(const std::filesystem::path& path);

}  // namespace attnctl
