#include <benchmark/benchmark.h>

#include "pskd/data.hpp"
#include "pskd/losses.hpp"
#include "pskd/model.hpp"
#include "pskd/ops.hpp"
#include "pskd/rng.hpp"

using namespace pskd;

namespace {

DatasetMeta bench_meta() {
    DatasetMeta m;
    m.num_classes = 6;
    m.t_sk = 40;
    m.n_sk = 8;
    m.t_ac = 32;
    return m;
}

Tensor random_tensor(std::vector<int> shape, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t = Tensor::zeros(std::move(shape));
    for (Scalar& v : t.data) v = rng.gaussian();
    return t;
}

void BM_Conv1dForward(benchmark::State& state) {
    const int b = 32, cin = 48, cout = 16, t = 40, k = 5;
    const Tensor x = random_tensor({b, cin, t}, 1);
    const Tensor w = random_tensor({cout, cin, k}, 2);
    const Tensor bias = random_tensor({cout}, 3);
    for (auto _ : state) benchmark::DoNotOptimize(conv1d_same(x, w, bias));
}
BENCHMARK(BM_Conv1dForward);

void BM_TeacherFuForward(benchmark::State& state) {
    const EncoderSpec spec = EncoderSpec::for_role(Role::teacher_fu, bench_meta(), {16, 32}, 5, 64);
    const Model m = build_model(spec, 7);
    const Tensor batch = random_tensor({32, spec.in_channels, spec.in_length}, 11);
    for (auto _ : state) benchmark::DoNotOptimize(forward(m, batch));
}
BENCHMARK(BM_TeacherFuForward);

void BM_StudentTrainStep(benchmark::State& state) {
    const DatasetMeta meta = bench_meta();
    const Model student = build_model(EncoderSpec::for_role(Role::student, meta, {16, 32}, 5, 64), 5);
    const Model t_sk = build_model(EncoderSpec::for_role(Role::teacher_sk, meta, {16, 32}, 5, 64), 6);
    const Model t_fu = build_model(EncoderSpec::for_role(Role::teacher_fu, meta, {16, 32}, 5, 64), 7);
    const Tensor batch = random_tensor({32, 3, 32}, 12);
    TeacherBundle bundle;
    bundle.teachers.push_back(forward(t_sk, random_tensor({32, 24, 40}, 13)));
    bundle.teachers.push_back(forward(t_fu, random_tensor({32, 48, 40}, 14)));
    std::vector<int> labels(32);
    Rng rng(15);
    for (int& y : labels) y = rng.uniform_int(6);

    for (auto _ : state) {
        GradTape tape;
        const TapedForward out = forward(student, batch, tape);
        const TapedLoss loss = build_total_loss(tape, out, bundle, labels, LossWeights{});
        benchmark::DoNotOptimize(tape.backward(loss.total));
    }
}
BENCHMARK(BM_StudentTrainStep);

void BM_AdaptiveWeights(benchmark::State& state) {
    Rng rng(21);
    TeacherBundle bundle;
    for (int t = 0; t < 2; ++t) {
        ForwardOutput o;
        o.z = random_tensor({64, 6}, 22 + static_cast<std::uint64_t>(t));
        o.h = Tensor::zeros({64, 4});
        bundle.teachers.push_back(std::move(o));
    }
    std::vector<int> labels(64);
    for (int& y : labels) y = rng.uniform_int(6);
    const Tensor ce = teacher_ce(bundle, labels);
    for (auto _ : state) benchmark::DoNotOptimize(adaptive_weights(ce, bundle, labels));
}
BENCHMARK(BM_AdaptiveWeights);

void BM_SoftmaxTemp(benchmark::State& state) {
    const Tensor logits = random_tensor({64, 6}, 31);
    for (auto _ : state) benchmark::DoNotOptimize(softmax_temp(logits, 4.0));
}
BENCHMARK(BM_SoftmaxTemp);

void BM_GenerateDataset(benchmark::State& state) {
    GenConfig cfg;
    cfg.samples_per_class = 20;
    for (auto _ : state) benchmark::DoNotOptimize(generate_dataset(cfg));
}
BENCHMARK(BM_GenerateDataset);

void BM_FuseModalities(benchmark::State& state) {
    const Tensor sk = random_tensor({3, 40, 8}, 41);
    const Tensor ac = random_tensor({3, 1, 32}, 42);
    for (auto _ : state) benchmark::DoNotOptimize(fuse_modalities(sk, ac, 40));
}
BENCHMARK(BM_FuseModalities);

}  // namespace

BENCHMARK_MAIN();
