#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "attnctl/checkpoint.hpp"
#include "attnctl/interface.hpp"
#include "attnctl/metrics.hpp"
#include "attnctl/synth.hpp"

namespace attnctl {

std::vector<MethodSpec> default_exp1_methods();  // unlimited, limited-3/6/9, additive-1/2/3
std::vector<MethodSpec> default_exp2_methods();  // unlimited, limited-6, additive-3

struct Exp1Config {
  std::vector<MethodSpec> methods = default_exp1_methods();
  std::vector<std::size_t> ks{1, 5};
  double temperature = 1.0;  // box attention sharpening, 1 keeps the plain softmax
  bool use_val_split = true;
};

struct Exp1Result {
  std::vector<CaptionRecord> records;    // one per kept box and method
  std::vector<CaptionRecord> baselines;  // control and self rows, one each per kept box
  std::vector<SensitivityRow> sensitivity;
  std::vector<ControllabilityReport> controllability;  // per k, full then distinct
  std::size_t images = 0;
  std::size_t boxes = 0;
  std::size_t kept_boxes = 0;
  BoxFilterRule rule;
  std::vector<std::string> caption_lines;  // JSON lines, every emitted caption once
  std::string report_text;
  std::string report_json;
};

/// Decodes every kept box of the chosen split under each method, plus one
/// control and one self-attending caption per image, and scores them.
Exp1Result run_exp1(const Dataset& data, const CaptionerBundle& captioner, const Exp1Config& config);

struct Exp2Config {
  std::vector<MethodSpec> methods = default_exp2_methods();
  std::string question_type = "other";
  bool use_val_split = true;
};

struct Exp2Result {
  std::vector<QaCaptionRecord> records;
  std::vector<UsefulnessRow> usefulness;
  std::size_t questions = 0;
  std::size_t skipped = 0;  // no usable question words
  std::vector<std::string> caption_lines;
  std::vector<std::string> attention_lines;
  std::string report_text;
  std::string report_json;
};

/// Extracts word, phrase and question level image attention from the VQA
/// model for each question and decodes captions under each method.
Exp2Result run_exp2(const Dataset& data, const CaptionerBundle& captioner, const VqaBundle& vqa,
                    const Exp2Config& config);

/// exp1_captions.jsonl, exp1_report.txt, exp1_report.json.
void write_exp1(const std::filesystem::path& dir, const Exp1Result& result);
/// exp2_captions.jsonl, exp2_attention.jsonl, exp2_report.txt, exp2_report.json.
void write_exp2(const std::filesystem::path& dir, const Exp2Result& result);

}  // namespace attnctl
