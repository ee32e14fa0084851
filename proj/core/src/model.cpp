#include "pskd/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "pskd/ops.hpp"
#include "pskd/rng.hpp"
#include <json.hpp>

namespace pskd {

using json = nlohmann::ordered_json;

const char* role_name(Role r) {
    switch (r) {
        case Role::teacher_sk: return "teacher_sk";
        case Role::teacher_fu: return "teacher_fu";
        case Role::student: return "student";
    }
    throw InternalError("role_name: bad role");
}

Role role_from_name(const std::string& name) {
    if (name == "teacher_sk") return Role::teacher_sk;
    if (name == "teacher_fu") return Role::teacher_fu;
    if (name == "student") return Role::student;
    throw ParamError("unknown role '" + name + "'");
}

void EncoderSpec::validate() const {
    if (in_channels < 1) throw ParamError("spec: in_channels must be >= 1");
    if (in_length < 2) throw ParamError("spec: in_length must be >= 2");
    if (conv_widths.empty()) throw ParamError("spec: need at least one conv layer");
    for (int w : conv_widths)
        if (w < 1) throw ParamError("spec: conv widths must be >= 1");
    if (kernel_size < 1 || kernel_size % 2 == 0)
        throw ParamError("spec: kernel_size must be odd and >= 1 for same padding");
    if (d_sem < 1) throw ParamError("spec: d_sem must be >= 1");
    if (num_classes < 2) throw ParamError("spec: num_classes must be >= 2");
}

std::int64_t EncoderSpec::param_count() const {
    std::int64_t n = 0;
    int cin = in_channels;
    for (int w : conv_widths) {
        n += static_cast<std::int64_t>(w) * cin * kernel_size + w;
        cin = w;
    }
    n += static_cast<std::int64_t>(cin) * d_sem + d_sem;
    n += static_cast<std::int64_t>(d_sem) * num_classes + num_classes;
    return n;
}

EncoderSpec EncoderSpec::for_role(Role r, const DatasetMeta& meta, std::vector<int> conv_widths,
                                  int kernel_size, int d_sem) {
    meta.validate();
    EncoderSpec s;
    s.role = r;
    s.conv_widths = std::move(conv_widths);
    s.kernel_size = kernel_size;
    s.d_sem = d_sem;
    s.num_classes = meta.num_classes;
    switch (r) {
        case Role::teacher_sk:
            s.in_channels = meta.c_sk * meta.n_sk;
            s.in_length = meta.t_sk;
            break;
        case Role::teacher_fu:
            s.in_channels = (meta.c_sk + meta.c_ac) * meta.n_sk;
            s.in_length = meta.t_sk;
            break;
        case Role::student:
            s.in_channels = meta.c_ac * meta.s_ac;
            s.in_length = meta.t_ac;
            break;
    }
    s.validate();
    return s;
}

std::int64_t Model::param_count() const {
    std::int64_t n = 0;
    for (const Tensor& p : params) n += p.numel();
    return n;
}

Model build_model(const EncoderSpec& spec, std::uint64_t seed) {
    spec.validate();
    Model m;
    m.spec = spec;
    m.init_seed = seed;
    Rng rng(derive_seed(seed, "init"));

    auto uniform_tensor = [&](std::vector<int> shape, int fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Tensor t = Tensor::zeros(std::move(shape));
        for (Scalar& v : t.data) v = rng.uniform_f32(-bound, bound);
        return t;
    };

    int cin = spec.in_channels;
    for (int w : spec.conv_widths) {
        m.params.push_back(uniform_tensor({w, cin, spec.kernel_size}, cin * spec.kernel_size));
        m.params.push_back(uniform_tensor({w}, cin * spec.kernel_size));
        cin = w;
    }
    m.params.push_back(uniform_tensor({cin, spec.d_sem}, cin));
    m.params.push_back(uniform_tensor({spec.d_sem}, cin));
    m.params.push_back(uniform_tensor({spec.d_sem, spec.num_classes}, spec.d_sem));
    m.params.push_back(uniform_tensor({spec.num_classes}, spec.d_sem));
    return m;
}

static void check_batch(const Model& m, const Tensor& batch) {
    if (batch.rank() != 3 || batch.dim(1) != m.spec.in_channels)
        throw ParamError(std::string("forward: batch layout ") + shape_str(batch.shape) +
                         " does not match role " + role_name(m.spec.role) + " (B," +
                         std::to_string(m.spec.in_channels) + ",T)");
}

ForwardOutput forward(const Model& m, const Tensor& batch) {
    check_batch(m, batch);
    const std::size_t nconv = m.spec.conv_widths.size();
    Tensor x = batch;
    for (std::size_t i = 0; i < nconv; ++i)
        x = relu(conv1d_same(x, m.params[2 * i], m.params[2 * i + 1]));
    x = global_avg_pool_time(x);
    ForwardOutput out;
    // H is the fc0 activation (post-ReLU), the tensor fc1 consumes.
    out.h = relu(linear(x, m.params[2 * nconv], m.params[2 * nconv + 1]));
    out.z = linear(out.h, m.params[2 * nconv + 2], m.params[2 * nconv + 3]);
    return out;
}

TapedForward forward(const Model& m, const Tensor& batch, GradTape& tape) {
    check_batch(m, batch);
    std::vector<Value> p;
    p.reserve(m.params.size());
    for (const Tensor& t : m.params) p.push_back(tape.param(t));

    const std::size_t nconv = m.spec.conv_widths.size();
    Value x = tape.constant(batch);
    for (std::size_t i = 0; i < nconv; ++i)
        x = tape.relu(tape.conv1d_same(x, p[2 * i], p[2 * i + 1]));
    x = tape.global_avg_pool_time(x);
    TapedForward out;
    out.h = tape.relu(tape.linear(x, p[2 * nconv], p[2 * nconv + 1]));
    out.z = tape.linear(out.h, p[2 * nconv + 2], p[2 * nconv + 3]);
    return out;
}

namespace {

constexpr char kMagic[4] = {'P', 'S', 'K', 'D'};
constexpr std::uint32_t kFormatVersion = 1;

std::uint64_t fnv1a64(const unsigned char* data, std::size_t n) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& buf, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + static_cast<std::size_t>(i)])) << (8 * i);
    return v;
}

std::uint64_t get_u64(const std::string& buf, std::size_t off) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[off + static_cast<std::size_t>(i)])) << (8 * i);
    return v;
}

json spec_to_json(const EncoderSpec& s) {
    json j;
    j["role"] = role_name(s.role);
    j["in_channels"] = s.in_channels;
    j["in_length"] = s.in_length;
    j["conv_widths"] = s.conv_widths;
    j["kernel_size"] = s.kernel_size;
    j["d_sem"] = s.d_sem;
    j["num_classes"] = s.num_classes;
    return j;
}

EncoderSpec spec_from_json(const json& j) {
    EncoderSpec s;
    s.role = role_from_name(j.at("role").get<std::string>());
    s.in_channels = j.at("in_channels").get<int>();
    s.in_length = j.at("in_length").get<int>();
    s.conv_widths = j.at("conv_widths").get<std::vector<int>>();
    s.kernel_size = j.at("kernel_size").get<int>();
    s.d_sem = j.at("d_sem").get<int>();
    s.num_classes = j.at("num_classes").get<int>();
    s.validate();
    return s;
}

}  // namespace

void save_model(const Model& m, const std::string& path) {
    std::string buf;
    buf.append(kMagic, 4);
    put_u32(buf, kFormatVersion);
    const std::string spec = spec_to_json(m.spec).dump();
    put_u32(buf, static_cast<std::uint32_t>(spec.size()));
    buf.append(spec);
    put_u64(buf, static_cast<std::uint64_t>(m.init_seed));
    put_u64(buf, static_cast<std::uint64_t>(m.param_count()));
    for (const Tensor& t : m.params)
        for (Scalar v : t.data) {
            const float f = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32(buf, bits);
        }
    put_u64(buf, fnv1a64(reinterpret_cast<const unsigned char*>(buf.data()), buf.size()));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (buf.size() < 4 + 4 + 4 + 8 + 8 + 8) throw LoadError(path + ": truncated checkpoint");
    if (std::memcmp(buf.data(), kMagic, 4) != 0) throw LoadError(path + ": bad checkpoint magic");

    const std::uint64_t want_sum = get_u64(buf, buf.size() - 8);
    const std::uint64_t have_sum =
        fnv1a64(reinterpret_cast<const unsigned char*>(buf.data()), buf.size() - 8);
    if (want_sum != have_sum) throw LoadError(path + ": checksum mismatch (corrupt or truncated)");

    std::size_t off = 4;
    const std::uint32_t version = get_u32(buf, off);
    off += 4;
    if (version != kFormatVersion)
        throw LoadError(path + ": unsupported checkpoint version " + std::to_string(version));

    const std::uint32_t spec_len = get_u32(buf, off);
    off += 4;
    if (off + spec_len > buf.size() - 8) throw LoadError(path + ": truncated spec block");
    json jspec;
    try {
        jspec = json::parse(buf.substr(off, spec_len));
    } catch (const json::exception& e) {
        throw LoadError(path + ": bad spec block: " + e.what());
    }
    off += spec_len;

    Model m;
    m.spec = spec_from_json(jspec);
    m.init_seed = get_u64(buf, off);
    off += 8;
    const std::uint64_t count = get_u64(buf, off);
    off += 8;
    if (count != static_cast<std::uint64_t>(m.spec.param_count()))
        throw LoadError(path + ": spec disagrees with payload length");
    if (off + count * 4 + 8 != buf.size()) throw LoadError(path + ": payload length mismatch");

    auto read_tensor = [&](std::vector<int> shape) {
        Tensor t = Tensor::zeros(std::move(shape));
        for (Scalar& v : t.data) {
            const std::uint32_t bits = get_u32(buf, off);
            off += 4;
            float f;
            std::memcpy(&f, &bits, 4);
            v = static_cast<Scalar>(f);
        }
        return t;
    };

    int cin = m.spec.in_channels;
    for (int w : m.spec.conv_widths) {
        m.params.push_back(read_tensor({w, cin, m.spec.kernel_size}));
        m.params.push_back(read_tensor({w}));
        cin = w;
    }
    m.params.push_back(read_tensor({cin, m.spec.d_sem}));
    m.params.push_back(read_tensor({m.spec.d_sem}));
    m.params.push_back(read_tensor({m.spec.d_sem, m.spec.num_classes}));
    m.params.push_back(read_tensor({m.spec.num_classes}));
    return m;
}

Tensor make_batch(const Dataset& ds, const std::vector<int>& indices, Role role) {
    if (indices.empty()) throw ParamError("make_batch: empty index list");
    const DatasetMeta& meta = ds.meta;
    const int B = static_cast<int>(indices.size());

    int channels = 0, length = 0;
    switch (role) {
        case Role::teacher_sk:
            channels = meta.c_sk * meta.n_sk;
            length = meta.t_sk;
            break;
        case Role::teacher_fu:
            channels = (meta.c_sk + meta.c_ac) * meta.n_sk;
            length = meta.t_sk;
            break;
        case Role::student:
            channels = meta.c_ac * meta.s_ac;
            length = meta.t_ac;
            break;
    }

    Tensor batch = Tensor::zeros({B, channels, length});
    for (int b = 0; b < B; ++b) {
        const Sample& s = ds.samples[static_cast<std::size_t>(indices[static_cast<std::size_t>(b)])];
        switch (role) {
            case Role::teacher_sk: {
                // (c, t, n) -> channel c*n_sk + n over time
                for (int c = 0; c < meta.c_sk; ++c)
                    for (int n = 0; n < meta.n_sk; ++n)
                        for (int t = 0; t < meta.t_sk; ++t)
                            batch.at(b, c * meta.n_sk + n, t) = s.skeleton.at(c, t, n);
                break;
            }
            case Role::teacher_fu: {
                const Tensor fused = fuse_modalities(s.skeleton, s.accel, meta.t_sk);
                const int cf = meta.c_sk + meta.c_ac;
                for (int c = 0; c < cf; ++c)
                    for (int n = 0; n < meta.n_sk; ++n)
                        for (int t = 0; t < meta.t_sk; ++t)
                            batch.at(b, c * meta.n_sk + n, t) = fused.at(c, t, n);
                break;
            }
            case Role::student: {
                for (int c = 0; c < meta.c_ac; ++c)
                    for (int sn = 0; sn < meta.s_ac; ++sn)
                        for (int t = 0; t < meta.t_ac; ++t)
                            batch.at(b, c * meta.s_ac + sn, t) = s.accel.at(c, sn, t);
                break;
            }
        }
    }
    return batch;
}

}  // namespace pskd
