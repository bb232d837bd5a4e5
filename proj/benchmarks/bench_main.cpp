#include <benchmark/benchmark.h>

#include "distest/adaptive.hpp"
#include "distest/engine.hpp"
#include "distest/stats.hpp"

using namespace distest;

namespace {

ProblemConfig config(int d, int b, Coin coin) {
  ProblemConfig c;
  c.n = 10000;
  c.m = 64;
  c.d = d;
  c.b = b;
  c.alpha = 0.1;
  c.coin = coin;
  return c;
}

void BM_Chi2Cdf(benchmark::State& state) {
  const auto df = state.range(0);
  double x = 0.5 * static_cast<double>(df);
  for (auto _ : state) {
    benchmark::DoNotOptimize(stats::chi2_cdf(df, x));
    x += 1e-9;
  }
}
BENCHMARK(BM_Chi2Cdf)->Arg(1)->Arg(64)->Arg(4096)->Arg(100000);

void BM_HaarFrame(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  std::uint64_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(haar_frame(8, d, SeedNode(1).child("f", i++)));
}
BENCHMARK(BM_HaarFrame)->Arg(64)->Arg(256)->Arg(1024);

void run_protocol(benchmark::State& state, ProtocolKind kind, Coin coin, EngineKind engine) {
  const int d = static_cast<int>(state.range(0));
  const TestProtocol p(kind, config(d, 4, coin));
  const Signal f = Signal::zeros(d);
  std::uint64_t r = 0;
  for (auto _ : state) benchmark::DoNotOptimize(p.run(f, SeedNode(7).child("rep", r++), engine));
}

void BM_T1Exact(benchmark::State& s) { run_protocol(s, ProtocolKind::T1, Coin::Private, EngineKind::Exact); }
void BM_T1Fast(benchmark::State& s) { run_protocol(s, ProtocolKind::T1, Coin::Private, EngineKind::Fast); }
void BM_T2Exact(benchmark::State& s) { run_protocol(s, ProtocolKind::T2, Coin::Public, EngineKind::Exact); }
void BM_T2Fast(benchmark::State& s) { run_protocol(s, ProtocolKind::T2, Coin::Public, EngineKind::Fast); }
void BM_T3Exact(benchmark::State& s) { run_protocol(s, ProtocolKind::T3, Coin::Private, EngineKind::Exact); }
void BM_T3Fast(benchmark::State& s) { run_protocol(s, ProtocolKind::T3, Coin::Private, EngineKind::Fast); }
BENCHMARK(BM_T1Exact)->Arg(64)->Arg(1024);
BENCHMARK(BM_T1Fast)->Arg(64)->Arg(1024);
BENCHMARK(BM_T2Exact)->Arg(64)->Arg(256);
BENCHMARK(BM_T2Fast)->Arg(64)->Arg(256);
BENCHMARK(BM_T3Exact)->Arg(64)->Arg(256);
BENCHMARK(BM_T3Fast)->Arg(64)->Arg(256);

void BM_AdaptiveRun(benchmark::State& state) {
  ProblemConfig c;
  c.n = std::int64_t{1} << 20;
  c.m = 256;
  c.d = 1;
  c.b = 16;
  c.alpha = 0.1;
  c.coin = state.range(0) ? Coin::Public : Coin::Private;
  const AdaptiveTest test(c, 0.5, 2.0);
  const LeveledSignal zero = LeveledSignal::zeros(test.grid().levels.back());
  std::uint64_t r = 0;
  for (auto _ : state) benchmark::DoNotOptimize(test.run(zero, SeedNode(3).child("rep", r++)));
}
BENCHMARK(BM_AdaptiveRun)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
