#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pskd/data.hpp"
#include "pskd/rng.hpp"

using namespace pskd;
namespace fs = std::filesystem;

namespace {

// Independent probe: nearest centroid over flattened features. Used to
// keep the noise defaults honest.
double centroid_accuracy(const Dataset& ds) {
    const auto train = ds.indices_of(Split::train);
    const auto test = ds.indices_of(Split::test);
    const int C = ds.meta.num_classes;
    const std::size_t dim = ds.samples[0].skeleton.data.size();
    std::vector<std::vector<double>> centroid(static_cast<std::size_t>(C), std::vector<double>(dim, 0.0));
    std::vector<int> count(static_cast<std::size_t>(C), 0);
    for (int i : train) {
        const auto& v = ds.samples[static_cast<std::size_t>(i)].skeleton.data;
        auto& c = centroid[static_cast<std::size_t>(ds.samples[static_cast<std::size_t>(i)].label)];
        for (std::size_t d = 0; d < dim; ++d) c[d] += v[d];
        ++count[static_cast<std::size_t>(ds.samples[static_cast<std::size_t>(i)].label)];
    }
    for (int c = 0; c < C; ++c)
        for (auto& x : centroid[static_cast<std::size_t>(c)]) x /= count[static_cast<std::size_t>(c)];
    int ok = 0;
    for (int i : test) {
        const auto& v = ds.samples[static_cast<std::size_t>(i)].skeleton.data;
        int best = 0;
        double best_d = 1e300;
        for (int c = 0; c < C; ++c) {
            double d2 = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
                const double df = v[d] - centroid[static_cast<std::size_t>(c)][d];
                d2 += df * df;
            }
            if (d2 < best_d) {
                best_d = d2;
                best = c;
            }
        }
        ok += best == ds.samples[static_cast<std::size_t>(i)].label;
    }
    return static_cast<double>(ok) / static_cast<double>(test.size());
}

fs::path temp_dir(const char* tag) {
    fs::path p = fs::temp_directory_path() / (std::string("pskd_test_") + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

bool datasets_equal(const Dataset& a, const Dataset& b) {
    if (a.samples.size() != b.samples.size()) return false;
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        if (a.samples[i].label != b.samples[i].label) return false;
        if (a.samples[i].subject != b.samples[i].subject) return false;
        if (!bitwise_equal(a.samples[i].skeleton, b.samples[i].skeleton)) return false;
        if (!bitwise_equal(a.samples[i].accel, b.samples[i].accel)) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("generate_dataset shapes, balance, determinism") {
    GenConfig cfg;
    cfg.num_classes = 5;
    cfg.samples_per_class = 40;
    cfg.t_sk = 40;
    cfg.n_sk = 8;
    cfg.t_ac = 30;
    cfg.seed = 7;

    const Dataset ds = generate_dataset(cfg);
    CHECK(ds.samples.size() == 200);
    std::vector<int> per_class(5, 0);
    for (const Sample& s : ds.samples) {
        CHECK(s.skeleton.shape == std::vector<int>{3, 40, 8});
        CHECK(s.accel.shape == std::vector<int>{3, 1, 30});
        ++per_class[static_cast<std::size_t>(s.label)];
    }
    for (int n : per_class) CHECK(n == 40);

    const Dataset again = generate_dataset(cfg);
    CHECK(datasets_equal(ds, again));
}

TEST_CASE("centroid probe clears the calibration bar on defaults") {
    Dataset ds = generate_dataset(GenConfig{});
    split_dataset(ds, 2.0 / 3.0, 11);
    const double acc = centroid_accuracy(ds);
    INFO("centroid accuracy ", acc);
    CHECK(acc > 1.0 / 6.0 + 0.2);
}

TEST_CASE("resample_time contracts") {
    SUBCASE("constant series stays constant") {
        const Tensor c = Tensor::full({2, 5}, 3.25);
        const Tensor r = resample_time(c, 9);
        CHECK(r.shape == std::vector<int>{2, 9});
        for (Scalar v : r.data) CHECK(v == 3.25);
    }
    SUBCASE("[0,1] to length 3 hits the midpoint") {
        const Tensor r = resample_time(Tensor({2}, {0.0, 1.0}), 3);
        CHECK(r.data[0] == 0.0);
        CHECK(r.data[1] == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(r.data[2] == 1.0);
    }
    SUBCASE("matching length returns the input unchanged") {
        const Tensor x({1, 4}, {1.0, 2.0, -1.0, 0.5});
        CHECK(bitwise_equal(resample_time(x, 4), x));
    }
    SUBCASE("too-short inputs are rejected") {
        CHECK_THROWS_AS(resample_time(Tensor({1}, {1.0}), 4), ParamError);
        CHECK_THROWS_AS(resample_time(Tensor({4}, {1.0, 2.0, 3.0, 4.0}), 1), ParamError);
    }
}

TEST_CASE("resample_time maps endpoints and never overshoots") {
    Rng rng(13);
    for (int trial = 0; trial < 500; ++trial) {
        const int t_in = 2 + rng.uniform_int(30);
        const int t_out = 2 + rng.uniform_int(30);
        Tensor x = Tensor::zeros({t_in});
        for (Scalar& v : x.data) v = rng.uniform(-5.0, 5.0);
        const Tensor y = resample_time(x, t_out);
        CHECK(y.dim(0) == t_out);
        CHECK(y.data.front() == x.data.front());
        CHECK(y.data.back() == x.data.back());
        const double lo = *std::min_element(x.data.begin(), x.data.end());
        const double hi = *std::max_element(x.data.begin(), x.data.end());
        for (Scalar v : y.data) {
            CHECK(v >= lo - 1e-12);
            CHECK(v <= hi + 1e-12);
        }
    }
}

TEST_CASE("fuse_modalities shape and concatenation semantics") {
    SUBCASE("declared shape") {
        Rng rng(3);
        Tensor sk = Tensor::zeros({3, 50, 20});
        Tensor ac = Tensor::zeros({3, 1, 30});
        for (Scalar& v : sk.data) v = rng.gaussian();
        for (Scalar& v : ac.data) v = rng.gaussian();
        CHECK(fuse_modalities(sk, ac, 50).shape == std::vector<int>{6, 50, 20});
    }
    SUBCASE("zeros and ones land in their channel blocks") {
        const int T = 12;
        const Tensor fused = fuse_modalities(Tensor::zeros({3, T, 1}), Tensor::full({3, 1, T}, 1.0), T);
        for (int c = 0; c < 3; ++c)
            for (int t = 0; t < T; ++t) {
                CHECK(fused.at(c, t, 0) == 0.0);
                CHECK(fused.at(3 + c, t, 0) == 1.0);
            }
    }
    SUBCASE("matched lengths mean no interpolation") {
        Rng rng(4);
        const int T = 10, N = 4;
        Tensor sk = Tensor::zeros({3, T, N});
        Tensor ac = Tensor::zeros({3, 1, T});
        for (Scalar& v : sk.data) v = rng.gaussian();
        for (Scalar& v : ac.data) v = rng.gaussian();
        const Tensor fused = fuse_modalities(sk, ac, T);
        for (int c = 0; c < 3; ++c)
            for (int t = 0; t < T; ++t) {
                for (int n = 0; n < N; ++n) CHECK(fused.at(c, t, n) == sk.at(c, t, n));
                for (int n = 0; n < N; ++n) CHECK(fused.at(3 + c, t, n) == ac.at(c, 0, t));
            }
    }
    SUBCASE("dimension violations are rejected") {
        CHECK_THROWS_AS(fuse_modalities(Tensor::zeros({2, 10, 4}), Tensor::zeros({3, 1, 10}), 10),
                        ParamError);
        CHECK_THROWS_AS(fuse_modalities(Tensor::zeros({3, 10, 4}), Tensor::zeros({3, 1, 10}), 1),
                        ParamError);
    }
}

TEST_CASE("split_dataset stratification and determinism") {
    GenConfig cfg;
    cfg.num_classes = 5;
    cfg.samples_per_class = 40;
    cfg.seed = 3;
    Dataset ds = generate_dataset(cfg);

    split_dataset(ds, 0.5, 21);
    std::vector<int> train_per_class(5, 0), test_per_class(5, 0);
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        (ds.split[i] == Split::train ? train_per_class : test_per_class)
            [static_cast<std::size_t>(ds.samples[i].label)]++;
    for (int c = 0; c < 5; ++c) {
        CHECK(train_per_class[static_cast<std::size_t>(c)] == 20);
        CHECK(test_per_class[static_cast<std::size_t>(c)] == 20);
    }

    Dataset ds2 = generate_dataset(cfg);
    split_dataset(ds2, 0.5, 21);
    CHECK(ds.split == ds2.split);

    SUBCASE("a one-sample class cannot be split") {
        Dataset tiny = ds;
        tiny.split.clear();
        // strip class 4 down to one sample
        std::vector<Sample> kept;
        int seen = 0;
        for (Sample& s : tiny.samples)
            if (s.label != 4 || seen++ == 0) kept.push_back(std::move(s));
        tiny.samples = std::move(kept);
        CHECK_THROWS_AS(split_dataset(tiny, 0.5, 1), ParamError);
    }
}

TEST_CASE("jsonl round trip and malformed inputs") {
    GenConfig cfg;
    cfg.num_classes = 3;
    cfg.samples_per_class = 4;
    cfg.t_sk = 8;
    cfg.n_sk = 2;
    cfg.t_ac = 6;
    cfg.seed = 9;
    const Dataset ds = generate_dataset(cfg);
    const fs::path dir = temp_dir("jsonl");
    const std::string data = (dir / "data.jsonl").string();
    const std::string meta = (dir / "meta.json").string();
    write_dataset(ds, data, meta);

    SUBCASE("round trip is lossless") {
        const Dataset back = ingest_jsonl(data, meta);
        CHECK(datasets_equal(ds, back));
        CHECK(back.meta.num_classes == 3);
        CHECK(back.meta.class_names.size() == 3);
    }
    SUBCASE("wrong joint count names the field and line") {
        // copy the good file, then append a record whose skeleton has 5
        // joints where the meta says 2
        std::string blob;
        {
            std::ifstream in(data, std::ios::binary);
            blob.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        }
        Dataset bad = ds;
        bad.samples.resize(1);
        bad.samples[0].skeleton = Tensor::zeros({3, 8, 5});
        bad.meta.n_sk = 5;
        const std::string tmp_data = (dir / "one.jsonl").string();
        write_dataset(bad, tmp_data, (dir / "one_meta.json").string());
        std::ifstream one(tmp_data, std::ios::binary);
        std::string bad_line;
        std::getline(one, bad_line);
        const std::string bad_data = (dir / "bad.jsonl").string();
        std::ofstream(bad_data, std::ios::binary) << blob << bad_line << "\n";
        try {
            ingest_jsonl(bad_data, meta);
            FAIL("expected a validation error");
        } catch (const ParamError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("skeleton") != std::string::npos);
            CHECK(msg.find("line 13") != std::string::npos);
        }
    }
    SUBCASE("truncated final line reports its line number") {
        std::string blob;
        {
            std::ifstream in(data, std::ios::binary);
            blob.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        }
        blob.resize(blob.size() - 40);  // cut into the last record
        const std::string trunc = (dir / "trunc.jsonl").string();
        std::ofstream(trunc, std::ios::binary) << blob;
        try {
            ingest_jsonl(trunc, meta);
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("line 12") != std::string::npos);
        }
    }
    SUBCASE("unknown keys in records are rejected") {
        const std::string weird = (dir / "weird.jsonl").string();
        std::ofstream(weird, std::ios::binary)
            << R"({"label":0,"subject":null,"skeleton":[],"accel":[],"extra":1})" << "\n";
        CHECK_THROWS_AS(ingest_jsonl(weird, meta), ParamError);
    }
    fs::remove_all(dir);
}

TEST_CASE("normalize uses train statistics only") {
    GenConfig cfg;
    cfg.num_classes = 3;
    cfg.samples_per_class = 10;
    cfg.t_sk = 10;
    cfg.n_sk = 2;
    cfg.t_ac = 8;
    cfg.seed = 5;

    SUBCASE("constant channel passes through") {
        Dataset ds = generate_dataset(cfg);
        for (Sample& s : ds.samples) {
            const std::int64_t plane = s.skeleton.numel() / 3;
            for (std::int64_t k = 0; k < plane; ++k) s.skeleton.data[static_cast<std::size_t>(plane + k)] = 2.5;
        }
        split_dataset(ds, 0.5, 1);
        normalize(ds);
        const std::int64_t plane = ds.samples[0].skeleton.numel() / 3;
        for (std::int64_t k = 0; k < plane; ++k)
            CHECK(ds.samples[0].skeleton.data[static_cast<std::size_t>(plane + k)] == 2.5);
    }
    SUBCASE("an already-standardized channel is left alone") {
        Dataset ds = generate_dataset(cfg);
        split_dataset(ds, 0.5, 1);
        NormStats st = normalize(ds);
        Dataset again = ds;  // already normalized
        NormStats st2 = normalize(again);
        for (int ch = 0; ch < 3; ++ch) {
            CHECK(st2.sk_mean[static_cast<std::size_t>(ch)] == doctest::Approx(0.0).epsilon(1e-9));
            CHECK(st2.sk_std[static_cast<std::size_t>(ch)] == doctest::Approx(1.0).epsilon(1e-9));
        }
        for (std::size_t i = 0; i < ds.samples.size(); ++i)
            for (std::size_t k = 0; k < ds.samples[i].skeleton.data.size(); ++k)
                CHECK(again.samples[i].skeleton.data[k] ==
                      doctest::Approx(ds.samples[i].skeleton.data[k]).epsilon(1e-9));
        (void)st;
    }
    SUBCASE("perturbing a test sample leaves the statistics unchanged") {
        Dataset ds = generate_dataset(cfg);
        split_dataset(ds, 0.5, 1);
        Dataset perturbed = ds;
        const auto test_idx = perturbed.indices_of(Split::test);
        for (Scalar& v : perturbed.samples[static_cast<std::size_t>(test_idx[0])].skeleton.data)
            v += 100.0;
        const NormStats a = normalize(ds);
        const NormStats b = normalize(perturbed);
        CHECK(a.sk_mean == b.sk_mean);
        CHECK(a.sk_std == b.sk_std);
        CHECK(a.ac_mean == b.ac_mean);
        CHECK(a.ac_std == b.ac_std);
    }
    SUBCASE("normalize requires a train split") {
        Dataset ds = generate_dataset(cfg);
        CHECK_THROWS_AS(normalize(ds), ParamError);
    }
}
