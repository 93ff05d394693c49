#include "doctest.h"
#include "helpers.hpp"

#include "attnctl/checkpoint.hpp"

using namespace attnctl;

namespace {

Vocabulary small_vocab() { return Vocabulary({"red", "square", "circle"}); }

}  // namespace

TEST_CASE("captioner checkpoint round trip is byte stable") {
  Rng rng(3);
  auto config = testutil::tiny_captioner_config(9, 3, 5);
  const auto model = testutil::random_captioner(config, rng);
  testutil::TempDir dir("ckpt");
  save_captioner(dir / "a.ckpt", model, small_vocab());
  const auto bundle = load_captioner(dir / "a.ckpt");
  CHECK(bundle.vocab == small_vocab());
  CHECK(bundle.model.config() == config);
  save_captioner(dir / "b.ckpt", bundle.model, bundle.vocab);
  CHECK(testutil::slurp(dir / "a.ckpt") == testutil::slurp(dir / "b.ckpt"));

  for (const auto& [name, e] : model.params().entries()) {
    CHECK(bundle.model.params().value(name) == e.value);
  }
  const auto img = testutil::random_image(9, 3, rng);
  CHECK(bundle.model.greedy_decode(img, SelfAttending{}).tokens == model.greedy_decode(img, SelfAttending{}).tokens);

  CHECK_NOTHROW(load_captioner(dir / "a.ckpt", 9, 3));
  CHECK_THROWS_AS(load_captioner(dir / "a.ckpt", 196), DimensionError);
  CHECK_THROWS_AS(load_captioner(dir / "a.ckpt", 9, 32), DimensionError);
}

TEST_CASE("vqa checkpoint round trip") {
  Rng rng(4);
  VqaConfig config;
  config.regions = 4;
  config.feature_dim = 3;
  config.hidden_dim = 5;
  config.vocab_size = 6;
  config.max_question_len = 4;
  config.answers = 2;
  const auto model = testutil::random_vqa(config, rng);
  const Vocabulary qv({"what", "color", "is", "the"});
  testutil::TempDir dir("ckpt");
  save_vqa(dir / "v.ckpt", model, qv, {"red", "blue"});
  const auto bundle = load_vqa(dir / "v.ckpt");
  CHECK(bundle.model.config() == config);
  CHECK(bundle.question_vocab == qv);
  CHECK(bundle.answers == std::vector<std::string>{"red", "blue"});
  save_vqa(dir / "w.ckpt", bundle.model, bundle.question_vocab, bundle.answers);
  CHECK(testutil::slurp(dir / "v.ckpt") == testutil::slurp(dir / "w.ckpt"));
  CHECK_THROWS(load_captioner(dir / "v.ckpt"));
}

TEST_CASE("corrupted checkpoints are rejected") {
  Rng rng(5);
  const auto model = testutil::random_captioner(testutil::tiny_captioner_config(), rng);
  testutil::TempDir dir("ckpt");
  save_captioner(dir / "a.ckpt", model, small_vocab());
  const std::string bytes = testutil::slurp(dir / "a.ckpt");

  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, bytes.size() / 2, bytes.size() - 1}) {
    CAPTURE(cut);
    CHECK_THROWS(decode_checkpoint(bytes.substr(0, cut)));
  }
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() / 2)), CorruptionError);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad_magic), FormatError);

  std::string version = bytes;
  version[4] = 9;
  CHECK_THROWS_AS(decode_checkpoint(version), FormatError);

  CHECK_THROWS_AS(decode_checkpoint(bytes + "x"), CorruptionError);

  CHECK_THROWS(read_checkpoint(dir / "missing.ckpt"));
}

TEST_CASE("generic content round trip") {
  CheckpointContent c;
  c.kind = "test";
  c.config_json = "{}";
  c.extras["note"] = std::string("bytes\0with nul", 14);
  c.params.add("w", DenseArray({2, 3}, 0.25));
  c.params.add("b", DenseArray::vector({-1.0, 1e-300, 5e300}));
  const auto back = decode_checkpoint(encode_checkpoint(c));
  CHECK(back.kind == "test");
  CHECK(back.extras.at("note") == c.extras.at("note"));
  CHECK(back.params.value("w") == c.params.value("w"));
  CHECK(back.params.value("b") == c.params.value("b"));
  CHECK(encode_checkpoint(back) == encode_checkpoint(c));
}

TEST_CASE("parameter shapes that contradict the config are corruption") {
  Rng rng(6);
  const auto model = testutil::random_captioner(testutil::tiny_captioner_config(), rng);
  testutil::TempDir dir("ckpt");
  save_captioner(dir / "a.ckpt", model, small_vocab());
  auto content = read_checkpoint(dir / "a.ckpt");
  CheckpointContent broken;
  broken.kind = content.kind;
  broken.config_json = content.config_json;
  broken.extras = content.extras;
  for (const auto& [name, e] : content.params.entries()) {
    broken.params.add(name, name == "gate.b" ? DenseArray::vector({0.0, 0.0}) : e.value);
  }
  write_checkpoint(dir / "b.ckpt", broken);
  CHECK_THROWS_AS(load_captioner(dir / "b.ckpt"), CorruptionError);
}
