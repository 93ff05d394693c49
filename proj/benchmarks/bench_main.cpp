#include <benchmark/benchmark.h>

#include "attnctl/boxes.hpp"
#include "attnctl/captioner.hpp"
#include "attnctl/rng.hpp"
#include "attnctl/tensor.hpp"
#include "attnctl/vqa.hpp"

using namespace attnctl;

namespace {

DenseArray random_array(Shape shape, Rng& rng, double scale = 1.0) {
  DenseArray a(std::move(shape));
  for (auto& v : a.storage()) v = rng.uniform(-scale, scale);
  return a;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const auto a = random_array({n, n}, rng), b = random_array({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 256)->Complexity(benchmark::oNCubed);

void BM_GreedyDecode(benchmark::State& state) {
  CaptionerConfig cfg;
  cfg.regions = 196;
  cfg.feature_dim = 32;
  cfg.hidden_dim = 64;
  cfg.vocab_size = 40;
  cfg.max_len = 16;
  Rng rng(2);
  const Captioner model(cfg, rng);
  const ImageAnnotation img{random_array({196, 32}, rng)};
  const InterfaceMethod method = state.range(0) == 0 ? InterfaceMethod{SelfAttending{}}
                                                     : InterfaceMethod{Unlimited{uniform_attention(196)}};
  for (auto _ : state) benchmark::DoNotOptimize(model.greedy_decode(img, method));
}
BENCHMARK(BM_GreedyDecode)->Arg(0)->Arg(1);

void BM_BoxToAttention(benchmark::State& state) {
  const BoundingBox box{64, 96, 200, 180, 1, 1, 1};
  for (auto _ : state) benchmark::DoNotOptimize(box_to_attention(box, 448, 448));
}
BENCHMARK(BM_BoxToAttention);

void BM_CoAttentionForward(benchmark::State& state) {
  VqaConfig cfg;
  cfg.vocab_size = 30;
  cfg.answers = 12;
  Rng rng(3);
  const VqaModel model(cfg, rng);
  const auto img = random_array({196, 32}, rng);
  const std::vector<TokenId> question{3, 4, 5, 6, 7};
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(img, question));
}
BENCHMARK(BM_CoAttentionForward);

}  // namespace

BENCHMARK_MAIN();
