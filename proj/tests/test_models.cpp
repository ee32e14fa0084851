#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "pskd/model.hpp"
#include "pskd/rng.hpp"

using namespace pskd;
namespace fs = std::filesystem;

namespace {

DatasetMeta default_meta(int classes = 5) {
    DatasetMeta m;
    m.num_classes = classes;
    m.t_sk = 40;
    m.n_sk = 8;
    m.t_ac = 32;
    return m;
}

Tensor random_batch(const EncoderSpec& spec, int b, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t = Tensor::zeros({b, spec.in_channels, spec.in_length});
    for (Scalar& v : t.data) v = rng.gaussian();
    return t;
}

}  // namespace

TEST_CASE("spec arithmetic per role") {
    const DatasetMeta meta = default_meta();
    const EncoderSpec st = EncoderSpec::for_role(Role::student, meta, {16, 32}, 5, 64);
    CHECK(st.in_channels == 3);
    CHECK(st.in_length == 32);
    CHECK(st.num_classes == 5);

    const EncoderSpec sk = EncoderSpec::for_role(Role::teacher_sk, meta, {16, 32}, 5, 64);
    CHECK(sk.in_channels == 24);
    CHECK(sk.in_length == 40);

    const EncoderSpec fu = EncoderSpec::for_role(Role::teacher_fu, meta, {16, 32}, 5, 64);
    CHECK(fu.in_channels == 48);

    const Model m = build_model(st, 1);
    CHECK(m.param_count() == st.param_count());
    CHECK(m.params.back().dim(0) == 5);  // fc1 bias
    CHECK(m.param_count() <= 50000);
}

TEST_CASE("build_model is deterministic per seed") {
    const EncoderSpec spec = EncoderSpec::for_role(Role::student, default_meta(), {16, 32}, 5, 64);
    const Model a = build_model(spec, 42);
    const Model b = build_model(spec, 42);
    const Model c = build_model(spec, 43);
    CHECK(bitwise_equal(a.params, b.params));
    CHECK_FALSE(bitwise_equal(a.params, c.params));
}

TEST_CASE("forward shapes and purity") {
    const EncoderSpec spec = EncoderSpec::for_role(Role::student, default_meta(), {16, 32}, 5, 64);
    const Model m = build_model(spec, 11);
    const Tensor batch = random_batch(spec, 8, 2);

    const ForwardOutput out = forward(m, batch);
    CHECK(out.h.shape == std::vector<int>{8, 64});
    CHECK(out.z.shape == std::vector<int>{8, 5});

    const ForwardOutput again = forward(m, batch);
    CHECK(bitwise_equal(out.h, again.h));
    CHECK(bitwise_equal(out.z, again.z));

    CHECK_THROWS_AS(forward(m, Tensor::zeros({8, 7, 32})), ParamError);
}

TEST_CASE("zero input with zeroed hidden biases exposes the fc1 bias") {
    const EncoderSpec spec = EncoderSpec::for_role(Role::student, default_meta(), {8, 12}, 5, 16);
    Model m = build_model(spec, 3);
    // conv biases and the fc0 bias to zero; fc1 bias stays as initialized
    for (std::size_t i : {std::size_t(1), std::size_t(3), std::size_t(5)})
        for (Scalar& v : m.params[i].data) v = 0.0;

    const ForwardOutput out = forward(m, Tensor::zeros({4, 3, 32}));
    const Tensor& fc1_bias = m.params.back();
    for (int b = 0; b < 4; ++b) {
        for (int c = 0; c < 5; ++c) CHECK(out.z.at(b, c) == fc1_bias.data[static_cast<std::size_t>(c)]);
        for (int d = 0; d < 16; ++d) CHECK(out.h.at(b, d) == 0.0);
    }
}

TEST_CASE("taped forward registers parameters in declaration order") {
    const EncoderSpec spec = EncoderSpec::for_role(Role::student, default_meta(), {4, 6}, 3, 8);
    const Model m = build_model(spec, 17);
    GradTape tape;
    const TapedForward out = forward(m, random_batch(spec, 3, 5), tape);
    CHECK(tape.num_params() == static_cast<int>(m.params.size()));
    const ForwardOutput plain = forward(m, random_batch(spec, 3, 5));
    CHECK(bitwise_equal(tape.value(out.h), plain.h));
    CHECK(bitwise_equal(tape.value(out.z), plain.z));
}

TEST_CASE("checkpoint round trip is bit-exact") {
    const fs::path dir = fs::temp_directory_path() / "pskd_test_ckpt";
    fs::create_directories(dir);
    const std::string path = (dir / "model.pskd").string();

    const EncoderSpec spec = EncoderSpec::for_role(Role::teacher_fu, default_meta(), {16, 32}, 5, 64);
    const Model m = build_model(spec, 123);
    save_model(m, path);
    const Model back = load_model(path);

    CHECK(back.spec.in_channels == m.spec.in_channels);
    CHECK(back.spec.role == m.spec.role);
    CHECK(back.init_seed == m.init_seed);
    CHECK(bitwise_equal(back.params, m.params));

    const Tensor batch = random_batch(spec, 4, 9);
    CHECK(bitwise_equal(forward(m, batch).z, forward(back, batch).z));
    fs::remove_all(dir);
}

TEST_CASE("checkpoint corruption is detected") {
    const fs::path dir = fs::temp_directory_path() / "pskd_test_ckpt2";
    fs::create_directories(dir);
    const std::string path = (dir / "model.pskd").string();
    const EncoderSpec spec = EncoderSpec::for_role(Role::student, default_meta(), {4, 6}, 3, 8);
    save_model(build_model(spec, 1), path);

    std::string blob;
    {
        std::ifstream in(path, std::ios::binary);
        blob.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }

    auto write_blob = [&](const std::string& b, const char* name) {
        const std::string p = (dir / name).string();
        std::ofstream(p, std::ios::binary) << b;
        return p;
    };

    SUBCASE("bad magic") {
        std::string bad = blob;
        bad[0] = 'X';
        CHECK_THROWS_AS(load_model(write_blob(bad, "magic.pskd")), LoadError);
    }
    SUBCASE("truncation") {
        std::string bad = blob.substr(0, blob.size() - 13);
        CHECK_THROWS_AS(load_model(write_blob(bad, "trunc.pskd")), LoadError);
    }
    SUBCASE("flipped payload byte") {
        std::string bad = blob;
        bad[bad.size() / 2] = static_cast<char>(bad[bad.size() / 2] ^ 0x40);
        CHECK_THROWS_AS(load_model(write_blob(bad, "flip.pskd")), LoadError);
    }
    SUBCASE("spec disagrees with payload length") {
        // shrink the recorded parameter count and re-sign the checksum
        std::string bad = blob;
        const std::size_t spec_len = static_cast<std::size_t>(static_cast<unsigned char>(bad[8])) |
                                     static_cast<std::size_t>(static_cast<unsigned char>(bad[9])) << 8;
        const std::size_t count_off = 4 + 4 + 4 + spec_len + 8;
        bad[count_off] = static_cast<char>(static_cast<unsigned char>(bad[count_off]) ^ 1);
        std::uint64_t h = 0xCBF29CE484222325ULL;
        for (std::size_t i = 0; i + 8 < bad.size(); ++i) {
            h ^= static_cast<unsigned char>(bad[i]);
            h *= 0x100000001B3ULL;
        }
        for (int i = 0; i < 8; ++i) bad[bad.size() - 8 + static_cast<std::size_t>(i)] =
            static_cast<char>((h >> (8 * i)) & 0xFF);
        try {
            load_model(write_blob(bad, "count.pskd"));
            FAIL("expected a load error");
        } catch (const LoadError& e) {
            CHECK(std::string(e.what()).find("length") != std::string::npos);
        }
    }
    fs::remove_all(dir);
}

TEST_CASE("make_batch folds joints into channels") {
    GenConfig cfg;
    cfg.num_classes = 3;
    cfg.samples_per_class = 2;
    cfg.t_sk = 6;
    cfg.n_sk = 2;
    cfg.t_ac = 6;
    cfg.seed = 8;
    const Dataset ds = generate_dataset(cfg);

    const Tensor sk_batch = make_batch(ds, {0, 1}, Role::teacher_sk);
    CHECK(sk_batch.shape == std::vector<int>{2, 6, 6});
    // channel c*n_sk + n carries skeleton[c, :, n]
    for (int t = 0; t < 6; ++t)
        CHECK(sk_batch.at(0, 1 * 2 + 1, t) == ds.samples[0].skeleton.at(1, t, 1));

    const Tensor fu_batch = make_batch(ds, {0}, Role::teacher_fu);
    CHECK(fu_batch.shape == std::vector<int>{1, 12, 6});
    // t_sk == t_ac here, so the accel block is the raw stream broadcast
    for (int t = 0; t < 6; ++t)
        CHECK(fu_batch.at(0, 3 * 2 + 0, t) == ds.samples[0].accel.at(0, 0, t));

    const Tensor st_batch = make_batch(ds, {0, 1, 2}, Role::student);
    CHECK(st_batch.shape == std::vector<int>{3, 3, 6});
    for (int t = 0; t < 6; ++t)
        CHECK(st_batch.at(2, 1, t) == ds.samples[2].accel.at(1, 0, t));
}
