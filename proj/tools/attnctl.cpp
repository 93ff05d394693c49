#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "attnctl/boxes.hpp"
#include "attnctl/checkpoint.hpp"
#include "attnctl/experiments.hpp"
#include "attnctl/pipeline.hpp"
#include "attnctl/render.hpp"
#include "attnctl/synth.hpp"
#include "attnctl/train.hpp"

using namespace attnctl;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitCheckpoint = 4;

/// Usage problems found after parsing, e.g. a method that needs --attn-file.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

MethodSpec parse_method(const std::string& label) {
  try {
    return MethodSpec::parse(label);
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
}

std::vector<MethodSpec> parse_methods(const std::vector<std::string>& labels) {
  std::vector<MethodSpec> out;
  for (const auto& l : labels) out.push_back(parse_method(l));
  return out;
}

EpochLogger stderr_logger(bool quiet) {
  if (quiet) return {};
  return [](const std::string& line) { std::cerr << line << "\n"; };
}

// ---- gen-data -----------------------------------------------------------------

struct GenOptions {
  std::string out;
  SynthConfig synth;
};

void run_gen(const GenOptions& o) {
  write_dataset(o.out, o.synth, generate_scenes(o.synth));
  std::cout << "wrote " << o.synth.scenes << " scenes to " << o.out << "\n";
}

// ---- build-vocab --------------------------------------------------------------

struct VocabOptions {
  std::string data, captions, out;
  std::size_t max_size = 200;
};

void run_build_vocab(const VocabOptions& o) {
  std::vector<std::vector<std::string>> tokens;
  if (!o.data.empty()) {
    const Dataset data = load_dataset(o.data);
    tokens = caption_tokens(data.captions, data.split.train);
  } else {
    for (const auto& c : load_captions(o.captions)) tokens.push_back(tokenize(c.caption));
  }
  const Vocabulary vocab = build_vocab(tokens, o.max_size);
  vocab.save(o.out);
  std::cout << "vocabulary of " << vocab.size() << " entries written to " << o.out << "\n";
}

// ---- training -----------------------------------------------------------------

struct TrainCapOptions {
  std::string data, vocab, out, history;
  std::size_t max_vocab = 200;
  CaptionerTrainConfig train;
  bool quiet = false;
};

void run_train_captioner(const TrainCapOptions& o) {
  const Dataset data = load_dataset(o.data);
  const Vocabulary vocab = o.vocab.empty() ? build_vocab(caption_tokens(data.captions, data.split.train), o.max_vocab)
                                           : Vocabulary::load(o.vocab);
  const auto result = train_captioner(data, vocab, o.train, stderr_logger(o.quiet));
  save_captioner(o.out, result.model, vocab);
  if (!o.history.empty()) write_file(o.history, captioner_history_json(result));
  const auto& best = result.history.at(result.best_epoch - 1);
  std::printf("best epoch %zu: val accuracy %.4f, BLEU-4 %.2f -> %s\n", result.best_epoch, best.val_accuracy,
              best.bleu[3], o.out.c_str());
}

struct TrainVqaOptions {
  std::string data, out, history;
  VqaTrainConfig train;
  bool quiet = false;
};

void run_train_vqa(const TrainVqaOptions& o) {
  const Dataset data = load_dataset(o.data);
  const auto result = train_vqa(data, o.train, stderr_logger(o.quiet));
  save_vqa(o.out, result.model, result.question_vocab, result.answers);
  if (!o.history.empty()) write_file(o.history, vqa_history_json(result));
  const auto& best = result.history.at(result.best_epoch - 1);
  std::printf("best epoch %zu: val accuracy %.4f -> %s\n", result.best_epoch, best.val_accuracy, o.out.c_str());
}

// ---- caption --------------------------------------------------------------------

struct CaptionOptions {
  std::string checkpoint, features, attn_file, attn_source, json_out;
  std::int64_t image = 0;
  std::string method = "self";
  std::optional<std::size_t> fix_steps;
  std::optional<double> phi;
  std::optional<std::size_t> max_steps;
};

DenseArray pick_attention(const std::string& path, const std::string& source, std::int64_t image) {
  for (const auto& r : load_attention_lines(path)) {
    if (source.empty() ? r.image_id == image : r.source == source) return r.alpha;
  }
  throw DomainError(path + ": no attention record for " + (source.empty() ? "image " + std::to_string(image) : source));
}

InterfaceMethod build_method(const CaptionOptions& o) {
  std::string label = o.method;
  if (label == "limited") {
    if (!o.fix_steps) throw UsageError("--method limited needs --fix-steps");
    label += "-" + std::to_string(*o.fix_steps);
  } else if (label == "additive") {
    if (!o.phi) throw UsageError("--method additive needs --phi");
    std::ostringstream s;
    s << label << "-" << *o.phi;
    label = s.str();
  }
  const MethodSpec spec = parse_method(label);
  if (!spec.needs_external()) return spec.bind(DenseArray{});
  if (o.attn_file.empty()) throw UsageError("--method " + o.method + " needs --attn-file");
  return spec.bind(pick_attention(o.attn_file, o.attn_source, o.image));
}

void run_caption(const CaptionOptions& o) {
  const FeatureSet features = load_features(o.features);
  const auto bundle = load_captioner(o.checkpoint, features.regions, features.dims);
  const InterfaceMethod method = build_method(o);
  validate_method(method, features.regions);
  const auto result = bundle.model.greedy_decode(ImageAnnotation{features.at(o.image)}, method, o.max_steps);
  const auto words = decode_tokens(result.words(), bundle.vocab);
  std::cout << join_tokens(words) << "\n";
  if (!o.json_out.empty()) {
    json j{{"image_id", o.image}, {"method", method_label(method)}, {"caption", join_tokens(words)},
           {"betas", result.betas}};
    j["attention_trace"] = json::array();
    for (std::size_t t = 0; t < result.attention_trace.rows(); ++t) {
      const auto row = result.attention_trace.row(t);
      j["attention_trace"].push_back(std::vector<double>(row.begin(), row.end()));
    }
    write_file(o.json_out, j.dump() + "\n");
  }
}

// ---- boxes-to-attn --------------------------------------------------------------

struct BoxesOptions {
  std::string annotations, out;
  std::size_t grid = 14;
  double sharpen = 1.0;
  bool filter = false;
};

void run_boxes(const BoxesOptions& o) {
  const DetectionSet det = load_detections(o.annotations);
  const BoxFilterRule median = median_rule(det.boxes);
  std::vector<std::string> lines;
  std::size_t skipped = 0;
  for (const auto& box : det.boxes) {
    const ImageInfo& info = det.image(box.image_id);
    if (o.filter && !keep_box(box, with_cell_floor(median, info.width, info.height, o.grid))) {
      ++skipped;
      continue;
    }
    lines.push_back(attention_record_json(box, box_to_attention(box, info.width, info.height, o.grid, o.sharpen)));
  }
  std::ofstream out(o.out, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + o.out);
  for (const auto& l : lines) out << l << "\n";
  std::cout << lines.size() << " attention vectors written to " << o.out;
  if (o.filter) std::cout << " (" << skipped << " boxes below the median/cell rule)";
  std::cout << "\n";
}

// ---- experiments ----------------------------------------------------------------

struct ExpOptions {
  std::string data, checkpoint, vqa, out, features_file;
  std::vector<std::string> methods;
  std::vector<std::size_t> ks{1, 5};
  double sharpen = 1.0;
  bool all_images = false;
};

Dataset load_experiment_data(const ExpOptions& o) {
  Dataset data = load_dataset(o.data);
  if (!o.features_file.empty()) data.features = load_features(o.features_file);
  return data;
}

void run_exp1_cmd(const ExpOptions& o) {
  const Dataset data = load_experiment_data(o);
  const auto captioner = load_captioner(o.checkpoint, data.features.regions, data.features.dims);
  Exp1Config config;
  if (!o.methods.empty()) config.methods = parse_methods(o.methods);
  config.ks = o.ks;
  config.temperature = o.sharpen;
  config.use_val_split = !o.all_images;
  const auto result = run_exp1(data, captioner, config);
  write_exp1(o.out, result);
  std::cout << result.report_text;
}

void run_exp2_cmd(const ExpOptions& o) {
  const Dataset data = load_experiment_data(o);
  const auto captioner = load_captioner(o.checkpoint, data.features.regions, data.features.dims);
  const auto vqa = load_vqa(o.vqa);
  Exp2Config config;
  if (!o.methods.empty()) config.methods = parse_methods(o.methods);
  config.use_val_split = !o.all_images;
  const auto result = run_exp2(data, captioner, vqa, config);
  write_exp2(o.out, result);
  std::cout << result.report_text;
}

// ---- render-attn ----------------------------------------------------------------

struct RenderOptions {
  std::string input, source, pgm, png;
  std::optional<std::size_t> step;
  std::size_t upscale = 32;
};

void run_render(const RenderOptions& o) {
  DenseArray trace;
  if (!o.source.empty()) {
    trace = pick_attention(o.input, o.source, 0);
  } else {
    json j;
    try {
      j = json::parse(read_file(o.input));
    } catch (const json::exception& e) {
      throw DomainError(o.input + ": " + e.what());
    }
    if (j.contains("attention_trace")) {
      const auto rows = j["attention_trace"].get<std::vector<std::vector<double>>>();
      if (rows.empty()) throw DomainError(o.input + ": empty attention trace");
      std::vector<double> flat;
      for (const auto& r : rows) {
        if (r.size() != rows.front().size()) throw DimensionError(o.input + ": ragged attention trace");
        flat.insert(flat.end(), r.begin(), r.end());
      }
      trace = DenseArray({rows.size(), rows.front().size()}, std::move(flat));
    } else if (j.contains("alpha")) {
      auto v = j["alpha"].get<std::vector<double>>();
      const std::size_t n = v.size();
      trace = DenseArray({n}, std::move(v));
    } else {
      throw DomainError(o.input + ": expected 'attention_trace' or 'alpha'");
    }
  }
  const DenseArray values = collapse_trace(trace, o.step);
  const auto grid = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(values.size()))));
  if (grid * grid != values.size()) throw DimensionError("attention length " + std::to_string(values.size()) + " is not a square");
  const ByteGrid image = render_attention(values, grid, o.upscale);
  write_pgm(o.pgm, image);
  if (!o.png.empty()) write_png(o.png, image);
  std::cout << "rendered " << image.width << "x" << image.height << " to " << o.pgm << "\n";
}

// ---- toy pipeline ---------------------------------------------------------------

struct PipelineOptions {
  PipelineConfig config;
  bool quiet = false;
};

void run_pipeline_cmd(const PipelineOptions& o) {
  const auto result = run_pipeline(o.config, stderr_logger(o.quiet));
  std::cout << result.exp1.report_text << "\n" << result.exp2.report_text;
  std::printf("finished in %.1f s\n", result.seconds);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention interfacing toolkit: captioner, co-attention VQA, experiments"};
  app.set_config("--config", "", "TOML config file ([subcommand] sections hold subcommand options)");
  app.require_subcommand(1);

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate the synthetic scene dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.synth.seed, "Generator seed")->capture_default_str();
  gen_cmd->add_option("--scenes", gen.synth.scenes, "Number of scenes")->capture_default_str();
  gen_cmd->add_option("--min-objects", gen.synth.min_objects)->capture_default_str();
  gen_cmd->add_option("--max-objects", gen.synth.max_objects)->capture_default_str();
  gen_cmd->add_option("--min-size", gen.synth.min_size, "Smallest object side in cells")->capture_default_str();
  gen_cmd->add_option("--max-size", gen.synth.max_size, "Largest object side in cells")->capture_default_str();
  gen_cmd->add_option("--grid", gen.synth.grid)->capture_default_str();
  gen_cmd->add_option("--feature-dim", gen.synth.feature_dim)->capture_default_str();
  gen_cmd->add_option("--noise", gen.synth.noise, "Feature noise standard deviation")->capture_default_str();

  VocabOptions vocab;
  auto* vocab_cmd = app.add_subcommand("build-vocab", "Build a caption vocabulary file");
  auto* vocab_data = vocab_cmd->add_option("--data", vocab.data, "Dataset directory (train split captions)");
  vocab_cmd->add_option("--captions", vocab.captions, "COCO-style captions file (all captions)")->excludes(vocab_data);
  vocab_cmd->add_option("--out", vocab.out)->required();
  vocab_cmd->add_option("--max-size", vocab.max_size, "Entries including start and end")->capture_default_str();

  TrainCapOptions tcap;
  auto* tcap_cmd = app.add_subcommand("train-captioner", "Train the attentive captioner");
  tcap_cmd->add_option("--data", tcap.data)->required();
  tcap_cmd->add_option("--vocab", tcap.vocab, "Vocabulary file; built from the train split when omitted");
  tcap_cmd->add_option("--max-vocab", tcap.max_vocab)->capture_default_str();
  tcap_cmd->add_option("--out", tcap.out)->required();
  tcap_cmd->add_option("--history", tcap.history, "Per-epoch statistics as JSON");
  tcap_cmd->add_option("--epochs", tcap.train.epochs)->capture_default_str();
  tcap_cmd->add_option("--batch-size", tcap.train.batch_size)->capture_default_str();
  tcap_cmd->add_option("--patience", tcap.train.patience, "0 disables early stopping")->capture_default_str();
  tcap_cmd->add_option("--lr", tcap.train.adam.lr)->capture_default_str();
  tcap_cmd->add_option("--lambda", tcap.train.lambda)->capture_default_str();
  tcap_cmd->add_option("--dropout", tcap.train.dropout_rate)->capture_default_str();
  tcap_cmd->add_option("--max-len", tcap.train.max_len)->capture_default_str();
  tcap_cmd->add_option("--seed", tcap.train.seed)->capture_default_str();
  tcap_cmd->add_flag("--quiet", tcap.quiet);

  TrainVqaOptions tvqa;
  auto* tvqa_cmd = app.add_subcommand("train-vqa", "Train the co-attention VQA model");
  tvqa_cmd->add_option("--data", tvqa.data)->required();
  tvqa_cmd->add_option("--out", tvqa.out)->required();
  tvqa_cmd->add_option("--history", tvqa.history);
  tvqa_cmd->add_option("--epochs", tvqa.train.epochs)->capture_default_str();
  tvqa_cmd->add_option("--batch-size", tvqa.train.batch_size)->capture_default_str();
  tvqa_cmd->add_option("--patience", tvqa.train.patience)->capture_default_str();
  tvqa_cmd->add_option("--lr", tvqa.train.adam.lr)->capture_default_str();
  tvqa_cmd->add_option("--hidden", tvqa.train.hidden_dim)->capture_default_str();
  tvqa_cmd->add_option("--max-question-len", tvqa.train.max_question_len)->capture_default_str();
  tvqa_cmd->add_option("--top-answers", tvqa.train.top_answers)->capture_default_str();
  tvqa_cmd->add_option("--seed", tvqa.train.seed)->capture_default_str();
  bool no_adaption = false;
  tvqa_cmd->add_flag("--no-adaption", no_adaption, "Skip the image adaption layer");
  tvqa_cmd->add_flag("--quiet", tvqa.quiet);

  CaptionOptions cap;
  auto* cap_cmd = app.add_subcommand("caption", "Decode one caption");
  cap_cmd->add_option("--checkpoint", cap.checkpoint)->required();
  cap_cmd->add_option("--features,--features-file", cap.features, "features.json")->required();
  cap_cmd->add_option("--image", cap.image)->required();
  cap_cmd->add_option("--method", cap.method, "self, control, unlimited, limited, additive or a label like limited-6")
      ->capture_default_str();
  cap_cmd->add_option("--fix-steps", cap.fix_steps, "Steps of external attention for --method limited");
  cap_cmd->add_option("--phi", cap.phi, "Weight of external attention for --method additive");
  cap_cmd->add_option("--attn-file", cap.attn_file, "JSON lines from boxes-to-attn or run-exp2");
  cap_cmd->add_option("--attn-source", cap.attn_source, "Record to use: an ann id or question_id:level");
  cap_cmd->add_option("--max-steps", cap.max_steps);
  cap_cmd->add_option("--json", cap.json_out, "Write caption, betas and attention trace as JSON");

  BoxesOptions boxes;
  auto* boxes_cmd = app.add_subcommand("boxes-to-attn", "Convert bounding boxes into attention vectors");
  boxes_cmd->add_option("--annotations", boxes.annotations)->required();
  boxes_cmd->add_option("--out", boxes.out)->required();
  boxes_cmd->add_option("--grid", boxes.grid)->capture_default_str();
  boxes_cmd->add_option("--sharpen", boxes.sharpen, "Temperature dividing the mask before softmax")->capture_default_str();
  boxes_cmd->add_flag("--filter", boxes.filter, "Drop boxes below the median size or one grid cell");

  ExpOptions e1;
  auto* e1_cmd = app.add_subcommand("run-exp1", "Box attention experiment: sensitivity and controllability");
  e1_cmd->add_option("--data", e1.data)->required();
  e1_cmd->add_option("--checkpoint", e1.checkpoint)->required();
  e1_cmd->add_option("--out", e1.out)->required();
  e1_cmd->add_option("--features-file", e1.features_file, "Replace the dataset's features");
  e1_cmd->add_option("--methods", e1.methods, "Method labels, default the seven standard rows");
  e1_cmd->add_option("--k", e1.ks, "Neighbourhood sizes")->capture_default_str();
  e1_cmd->add_option("--sharpen", e1.sharpen)->capture_default_str();
  e1_cmd->add_flag("--all-images", e1.all_images, "Use every image instead of the val split");

  ExpOptions e2;
  auto* e2_cmd = app.add_subcommand("run-exp2", "VQA attention experiment: usefulness");
  e2_cmd->add_option("--data", e2.data)->required();
  e2_cmd->add_option("--checkpoint", e2.checkpoint)->required();
  e2_cmd->add_option("--vqa", e2.vqa)->required();
  e2_cmd->add_option("--out", e2.out)->required();
  e2_cmd->add_option("--features-file", e2.features_file);
  e2_cmd->add_option("--methods", e2.methods, "Method labels, default unlimited limited-6 additive-3");
  e2_cmd->add_flag("--all-images", e2.all_images);

  RenderOptions render;
  auto* render_cmd = app.add_subcommand("render-attn", "Render an attention map as PGM (and PNG)");
  render_cmd->add_option("--input", render.input, "caption --json output, {\"alpha\": [...]} or JSON lines")->required();
  render_cmd->add_option("--source", render.source, "Record in a JSON lines file (ann id or question_id:level)");
  render_cmd->add_option("--out", render.pgm)->required();
  render_cmd->add_option("--png", render.png);
  render_cmd->add_option("--step", render.step, "Render one step (0-based) instead of the sum");
  render_cmd->add_option("--upscale", render.upscale)->capture_default_str();

  PipelineOptions pipe;
  auto* pipe_cmd = app.add_subcommand("toy-run", "Generate, train and run both experiments in one directory");
  pipe_cmd->add_option("--out", pipe.config.dir)->required();
  pipe_cmd->add_option("--seed", pipe.config.synth.seed)->capture_default_str();
  pipe_cmd->add_option("--scenes", pipe.config.synth.scenes)->capture_default_str();
  pipe_cmd->add_option("--caption-epochs", pipe.config.captioner.epochs)->capture_default_str();
  pipe_cmd->add_option("--caption-lr", pipe.config.captioner.adam.lr)->capture_default_str();
  pipe_cmd->add_option("--vqa-epochs", pipe.config.vqa.epochs)->capture_default_str();
  pipe_cmd->add_flag("--quiet", pipe.quiet);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen_cmd) run_gen(gen);
    if (*vocab_cmd) {
      if (vocab.data.empty() && vocab.captions.empty()) throw UsageError("build-vocab needs --data or --captions");
      run_build_vocab(vocab);
    }
    if (*tcap_cmd) run_train_captioner(tcap);
    if (*tvqa_cmd) {
      tvqa.train.adaption = !no_adaption;
      run_train_vqa(tvqa);
    }
    if (*cap_cmd) run_caption(cap);
    if (*boxes_cmd) run_boxes(boxes);
    if (*e1_cmd) run_exp1_cmd(e1);
    if (*e2_cmd) run_exp2_cmd(e2);
    if (*render_cmd) run_render(render);
    if (*pipe_cmd) {
      pipe.config.vqa.seed = pipe.config.captioner.seed = pipe.config.synth.seed;
      run_pipeline_cmd(pipe);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const CorruptionError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
