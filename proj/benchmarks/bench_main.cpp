#include "shiftmae/evaluation.hpp"
#include "shiftmae/ops.hpp"
#include "shiftmae/phantom.hpp"
#include "shiftmae/scoring.hpp"

#include <benchmark/benchmark.h>

using namespace shiftmae;

namespace {

MaeConfig desk_model() {
    MaeConfig c;
    c.stage_depths = {1, 1, 1, 1};
    c.stage_widths = {16, 32, 64, 128};
    return c;
}

Tensor random_tensor(Shape shape, std::uint64_t seed) {
    auto rng = make_rng(seed);
    auto t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data()) v = static_cast<float>(uniform(rng, -1, 1));
    return t;
}

void BM_DepthwiseConv7x7(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0));
    const auto x = random_tensor({1, c, 32, 32}, 1);
    const auto w = random_tensor({c, 1, 7, 7}, 2);
    const auto b = random_tensor({c}, 3);
    NoGradGuard guard;
    Conv2dOptions o;
    o.padding = 3;
    o.groups = c;
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, o));
}
BENCHMARK(BM_DepthwiseConv7x7)->Arg(16)->Arg(64);

void BM_Forward(benchmark::State& state) {
    MaeModel<float> model(desk_model(), 1);
    const auto x = random_tensor({static_cast<long>(state.range(0)), 1, 128, 128}, 4);
    NoGradGuard guard;
    for (auto _ : state) benchmark::DoNotOptimize(model.forward(x));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
    MaeModel<float> model(desk_model(), 1);
    const auto x = random_tensor({16, 1, 128, 128}, 5);
    for (auto _ : state) {
        auto loss = reconstruction_loss(model.forward(x), x);
        loss.backward();
        for (auto& [name, p] : std::vector(model.named_parameters())) p.zero_grad();
    }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_PixelErrorFull(benchmark::State& state) {
    MaeModel<float> model(desk_model(), 1);
    PhantomParams p;
    auto rng = make_rng(6);
    const auto img = gen_normal(p, rng).image;
    const auto set = enumerate_mask_set(128, 128, 8, static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(pixel_error_full(model, img, set));
    state.counters["masks"] = static_cast<double>(set.count());
}
BENCHMARK(BM_PixelErrorFull)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_PixelAuc(benchmark::State& state) {
    auto rng = make_rng(7);
    std::vector<Image> maps(static_cast<std::size_t>(state.range(0)), Image(128, 128));
    std::vector<BinaryMask> gts(maps.size(), BinaryMask(128, 128, 0));
    for (std::size_t i = 0; i < maps.size(); ++i) {
        for (auto& v : maps[i].data) v = static_cast<float>(uniform(rng, 0, 1));
        for (int y = 40; y < 60; ++y) gts[i].at(y, 50) = 1;
    }
    for (auto _ : state) benchmark::DoNotOptimize(pixel_auc(maps, gts));
}
BENCHMARK(BM_PixelAuc)->Arg(8)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
