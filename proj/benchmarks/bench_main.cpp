#include <benchmark/benchmark.h>

#include <random>

#include "support/fixtures.hpp"
#include "support/temp_dir.hpp"
#include "slideanno/pyramid.hpp"
#include "slideanno/screening.hpp"
#include "slideanno/stats.hpp"
#include "slideanno/synthetic.hpp"

using namespace slideanno;

namespace {

const testing::TempDir& bench_slide() {
  static testing::TempDir dir("bench");
  static const bool made = [] {
    generate_synthetic_slide(random_synthetic_spec(1, 4096, 4096, 4, 200), dir / "slide");
    return true;
  }();
  (void)made;
  return dir;
}

void BM_ReadRegionWarm(benchmark::State& state) {
  const PyramidSlide slide = open_slide(bench_slide() / "slide");
  const int size = static_cast<int>(state.range(0));
  std::mt19937_64 rng(1);
  for (auto _ : state) {
    const Point origin{static_cast<int64_t>(rng() % 3000), static_cast<int64_t>(rng() % 3000)};
    benchmark::DoNotOptimize(slide.read_region(0, origin, size, size));
  }
  state.SetItemsProcessed(state.iterations() * size * size);
}
BENCHMARK(BM_ReadRegionWarm)->Arg(256)->Arg(1024);

void BM_Otsu(benchmark::State& state) {
  std::mt19937_64 rng(2);
  Histogram h{};
  for (auto& v : h) v = rng() % 100000;
  for (auto _ : state) benchmark::DoNotOptimize(otsu_threshold(h));
}
BENCHMARK(BM_Otsu);

void BM_Close(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(3);
  BinaryMask m(n, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) m.set(x, y, rng() % 3 == 0);
  }
  for (auto _ : state) benchmark::DoNotOptimize(morphological_close(m, 2));
}
BENCHMARK(BM_Close)->Arg(256)->Arg(1024);

void BM_TissueMask(benchmark::State& state) {
  const PyramidSlide slide = open_slide(bench_slide() / "slide");
  for (auto _ : state) benchmark::DoNotOptimize(compute_tissue_mask(slide));
}
BENCHMARK(BM_TissueMask);

void BM_KappaFromStore(benchmark::State& state) {
  AnnotationStore s = testing::basic_store(2);
  testing::add_matrix_annotations(s, 1, 1, 2, testing::kStudyMatrix);
  for (auto _ : state) benchmark::DoNotOptimize(cohens_kappa(confusion_matrix(s, 1, 1, 2)));
}
BENCHMARK(BM_KappaFromStore)->Unit(benchmark::kMillisecond);

void BM_QueryViewport(benchmark::State& state) {
  AnnotationStore s = testing::basic_store(3);
  std::mt19937_64 rng(4);
  testing::add_random_annotations(s, 1, static_cast<int>(state.range(0)), rng);
  for (auto _ : state) {
    const Rect r{static_cast<int64_t>(rng() % 9000), static_cast<int64_t>(rng() % 7000), 1000, 1000};
    benchmark::DoNotOptimize(s.query_viewport(1, r));
  }
}
BENCHMARK(BM_QueryViewport)->Arg(1000)->Arg(20000);

}  // namespace

BENCHMARK_MAIN();
