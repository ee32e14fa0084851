#include "pskd/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "pskd/rng.hpp"
#include <json.hpp>

namespace pskd {

using json = nlohmann::ordered_json;

void DatasetMeta::validate() const {
    if (num_classes < 2) throw ParamError("meta: num_classes must be >= 2");
    if (c_sk != 3) throw ParamError("meta: c_sk must be 3 (x/y/z joint coordinates)");
    if (c_ac != 3) throw ParamError("meta: c_ac must be 3 (x/y/z acceleration)");
    if (t_sk < 2 || t_ac < 2) throw ParamError("meta: sequence lengths must be >= 2");
    if (n_sk < 1 || s_ac < 1) throw ParamError("meta: n_sk and s_ac must be >= 1");
    if (!class_names.empty() && static_cast<int>(class_names.size()) != num_classes)
        throw ParamError("meta: class_names length does not match num_classes");
}

void GenConfig::validate() const {
    if (num_classes < 2) throw ParamError("gen: num_classes must be >= 2");
    if (samples_per_class < 1) throw ParamError("gen: samples_per_class must be >= 1");
    if (t_sk < 3) throw ParamError("gen: t_sk must be >= 3 (second differences need 3 frames)");
    if (n_sk < 1) throw ParamError("gen: n_sk must be >= 1");
    if (t_ac < 2) throw ParamError("gen: t_ac must be >= 2");
    if (sigma_sk < 0.0 || sigma_ac < 0.0) throw ParamError("gen: noise levels must be >= 0");
    if (wrist_joint < 0 || wrist_joint >= n_sk) throw ParamError("gen: wrist_joint out of range");
}

std::vector<int> Dataset::indices_of(Split s) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < split.size(); ++i)
        if (split[i] == s) out.push_back(static_cast<int>(i));
    return out;
}

void Dataset::validate() const {
    meta.validate();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& s = samples[i];
        if (s.label < 0 || s.label >= meta.num_classes)
            throw ParamError("sample " + std::to_string(i) + ": label out of range");
        const std::vector<int> sk_shape{meta.c_sk, meta.t_sk, meta.n_sk};
        const std::vector<int> ac_shape{meta.c_ac, meta.s_ac, meta.t_ac};
        if (s.skeleton.shape != sk_shape)
            throw ParamError("sample " + std::to_string(i) + ": skeleton shape " +
                             shape_str(s.skeleton.shape) + " does not match meta " + shape_str(sk_shape));
        if (s.accel.shape != ac_shape)
            throw ParamError("sample " + std::to_string(i) + ": accel shape " +
                             shape_str(s.accel.shape) + " does not match meta " + shape_str(ac_shape));
    }
    if (!split.empty() && split.size() != samples.size())
        throw ParamError("dataset: split tags do not cover all samples");
}

namespace {

constexpr double kTwoPi = 6.283185307179586476925287;

struct Component {
    double freq, amp, phase;
};

// Sinusoid mixture per (joint, channel). The wrist motion is fully
// class-keyed, so the accelerometer stream carries the whole class
// identity and the student's gap is estimation noise, not missing
// information. The remaining joints are shared between body-paired
// classes up to a small deviation: the skeleton teacher has to read
// those pairs off its noisy wrist view, while the fused teacher gets
// the same wrist through the accelerometer as an independent second
// measurement. That asymmetry is the fused teacher's edge.
struct ClassProto {
    std::vector<std::vector<Component>> comps;  // index = joint * 3 + channel
    int max_components = 0;
};

constexpr double kDevAmpBody = 0.3;  // how far body-paired classes drift apart

ClassProto make_class_proto(const GenConfig& cfg, int cls) {
    static const double kFreqPool[] = {1.0, 1.5, 2.0, 2.5, 3.0, 3.5};
    const int body_group = ((cls + 1) / 2) % ((cfg.num_classes + 1) / 2);

    Rng wrist_rng(derive_seed(derive_seed(cfg.seed, "wrist-class"),
                              static_cast<std::uint64_t>(cls)));
    Rng body_rng(derive_seed(derive_seed(cfg.seed, "body-group"),
                             static_cast<std::uint64_t>(body_group)));
    Rng dev_rng(derive_seed(derive_seed(cfg.seed, "class-dev"), static_cast<std::uint64_t>(cls)));

    ClassProto p;
    p.comps.resize(static_cast<std::size_t>(cfg.n_sk) * 3);
    for (int joint = 0; joint < cfg.n_sk; ++joint) {
        const bool wrist = joint == cfg.wrist_joint;
        Rng& rng = wrist ? wrist_rng : body_rng;
        for (int ch = 0; ch < 3; ++ch) {
            auto& list = p.comps[static_cast<std::size_t>(joint) * 3 + static_cast<std::size_t>(ch)];
            const int shared = 2 + (wrist ? cls % 2 : body_group % 2);
            for (int i = 0; i < shared; ++i) {
                Component c;
                c.freq = kFreqPool[rng.uniform_int(6)];
                c.amp = rng.uniform(0.3, 1.2);
                // Most of the signal lives in a few joints, but the wrist
                // always moves: the accelerometer view depends on it.
                if (!wrist && rng.uniform() < 0.4) c.amp *= 0.15;
                if (rng.uniform() < 0.5) c.amp = -c.amp;
                c.phase = rng.uniform(0.0, kTwoPi);
                list.push_back(c);
            }
            // Body joints: the per-class deviation that tells body-paired
            // classes apart without the wrist.
            if (!wrist) {
                Component d;
                d.freq = kFreqPool[dev_rng.uniform_int(6)];
                d.amp = kDevAmpBody * dev_rng.uniform(0.5, 1.5);
                if (dev_rng.uniform() < 0.5) d.amp = -d.amp;
                d.phase = dev_rng.uniform(0.0, kTwoPi);
                list.push_back(d);
            }
            p.max_components = std::max(p.max_components, static_cast<int>(list.size()));
        }
    }
    return p;
}

}  // namespace

Dataset generate_dataset(const GenConfig& cfg) {
    cfg.validate();

    Dataset ds;
    ds.meta.num_classes = cfg.num_classes;
    ds.meta.c_sk = 3;
    ds.meta.t_sk = cfg.t_sk;
    ds.meta.n_sk = cfg.n_sk;
    ds.meta.c_ac = 3;
    ds.meta.s_ac = 1;
    ds.meta.t_ac = cfg.t_ac;
    for (int c = 0; c < cfg.num_classes; ++c) ds.meta.class_names.push_back("class_" + std::to_string(c));

    const int T = cfg.t_sk, N = cfg.n_sk;
    // Second differences of a unit sinusoid scale like (2*pi*f/(T-1))^2;
    // undo the (T-1)^2 so acceleration magnitudes stay O(f^2).
    const double accel_scale = static_cast<double>(T - 1) * static_cast<double>(T - 1) / (kTwoPi * kTwoPi);

    std::vector<ClassProto> protos;
    protos.reserve(static_cast<std::size_t>(cfg.num_classes));
    for (int c = 0; c < cfg.num_classes; ++c) protos.push_back(make_class_proto(cfg, c));

    const std::uint64_t sample_base = derive_seed(cfg.seed, "sample");
    for (int c = 0; c < cfg.num_classes; ++c) {
        const ClassProto& proto = protos[static_cast<std::size_t>(c)];
        for (int s = 0; s < cfg.samples_per_class; ++s) {
            Rng rng(derive_seed(sample_base, (static_cast<std::uint64_t>(c) << 32) |
                                                 static_cast<std::uint64_t>(s)));
            // Per-sample jitter, shared across joints by component slot so
            // the whole body moves coherently.
            std::vector<double> pj(static_cast<std::size_t>(proto.max_components));
            std::vector<double> aj(static_cast<std::size_t>(proto.max_components));
            for (int i = 0; i < proto.max_components; ++i) {
                pj[static_cast<std::size_t>(i)] = rng.uniform(-0.6, 0.6);
                aj[static_cast<std::size_t>(i)] = rng.uniform(0.7, 1.3);
            }

            // Latent trajectory per (channel, frame, joint).
            Tensor latent = Tensor::zeros({3, T, N});
            for (int n = 0; n < N; ++n) {
                for (int ch = 0; ch < 3; ++ch) {
                    const auto& comps =
                        proto.comps[static_cast<std::size_t>(n) * 3 + static_cast<std::size_t>(ch)];
                    for (std::size_t i = 0; i < comps.size(); ++i) {
                        const double a = comps[i].amp * aj[i];
                        const double ph = comps[i].phase + pj[i];
                        const double f = comps[i].freq;
                        for (int t = 0; t < T; ++t) {
                            const double tau = static_cast<double>(t) / (T - 1);
                            latent.at(ch, t, n) += a * std::sin(kTwoPi * f * tau + ph);
                        }
                    }
                }
            }

            Sample sample;
            sample.label = c;
            sample.skeleton = latent;
            for (Scalar& v : sample.skeleton.data) v += rng.gaussian(0.0, cfg.sigma_sk);

            // Acceleration of the wrist joint: second difference of the
            // latent trajectory, then resampled to the sensor rate.
            Tensor acc = Tensor::zeros({3, 1, T - 2});
            for (int ch = 0; ch < 3; ++ch)
                for (int t = 1; t + 1 < T; ++t)
                    acc.at(ch, 0, t - 1) = accel_scale * (latent.at(ch, t + 1, cfg.wrist_joint) -
                                                          2.0 * latent.at(ch, t, cfg.wrist_joint) +
                                                          latent.at(ch, t - 1, cfg.wrist_joint));
            sample.accel = resample_axis(acc, 2, cfg.t_ac);
            for (Scalar& v : sample.accel.data) v += rng.gaussian(0.0, cfg.sigma_ac);

            ds.samples.push_back(std::move(sample));
        }
    }
    return ds;
}

Tensor resample_axis(const Tensor& t, int axis, int target_len) {
    if (axis < 0 || axis >= t.rank()) throw ParamError("resample: axis out of range");
    const int t_in = t.dim(axis);
    if (t_in < 2) throw ParamError("resample: need at least 2 points along the time axis");
    if (target_len < 2) throw ParamError("resample: target length must be >= 2");
    if (target_len == t_in) return t;

    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= t.dim(i);
    for (int i = axis + 1; i < t.rank(); ++i) inner *= t.dim(i);

    std::vector<int> out_shape = t.shape;
    out_shape[static_cast<std::size_t>(axis)] = target_len;
    Tensor out = Tensor::zeros(out_shape);

    for (int j = 0; j < target_len; ++j) {
        // exact integer numerator keeps the endpoints exact
        const double pos = static_cast<double>(static_cast<std::int64_t>(j) * (t_in - 1)) /
                           (target_len - 1);
        int i0 = static_cast<int>(pos);
        if (i0 > t_in - 2) i0 = t_in - 2;
        const double frac = pos - i0;
        for (std::int64_t o = 0; o < outer; ++o) {
            const Scalar* a = &t.data[static_cast<std::size_t>((o * t_in + i0) * inner)];
            const Scalar* b = &t.data[static_cast<std::size_t>((o * t_in + i0 + 1) * inner)];
            Scalar* dst = &out.data[static_cast<std::size_t>((o * target_len + j) * inner)];
            for (std::int64_t k = 0; k < inner; ++k)
                dst[k] = a[k] * (1.0 - frac) + b[k] * frac;
        }
    }
    return out;
}

Tensor resample_time(const Tensor& series, int target_len) {
    return resample_axis(series, series.rank() - 1, target_len);
}

Tensor fuse_modalities(const Tensor& sk, const Tensor& ac, int t_common) {
    if (sk.rank() != 3 || sk.dim(0) != 3)
        throw ParamError("fuse: skeleton must be (3, T_sk, N_sk), got " + shape_str(sk.shape));
    if (ac.rank() != 3 || ac.dim(0) != 3)
        throw ParamError("fuse: accel must be (3, S_ac, T_ac), got " + shape_str(ac.shape));
    if (t_common < 2) throw ParamError("fuse: common length must be >= 2");

    const int n_sk = sk.dim(2);
    const Tensor sk_r = resample_axis(sk, 1, t_common);
    const Tensor ac_r = resample_axis(ac, 2, t_common);
    const int s_ac = ac_r.dim(1);

    Tensor out = Tensor::zeros({6, t_common, n_sk});
    for (int c = 0; c < 3; ++c)
        for (int t = 0; t < t_common; ++t)
            for (int n = 0; n < n_sk; ++n) out.at(c, t, n) = sk_r.at(c, t, n);
    // Sensor channels averaged over sensors (identity for s_ac = 1), then
    // broadcast across the joint axis.
    for (int c = 0; c < 3; ++c)
        for (int t = 0; t < t_common; ++t) {
            Scalar v = 0.0;
            for (int s = 0; s < s_ac; ++s) v += ac_r.at(c, s, t);
            v /= s_ac;
            for (int n = 0; n < n_sk; ++n) out.at(3 + c, t, n) = v;
        }
    return out;
}

void split_dataset(Dataset& ds, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ParamError("split: train_fraction must be in (0,1)");
    ds.validate();

    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(ds.meta.num_classes));
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        by_class[static_cast<std::size_t>(ds.samples[i].label)].push_back(static_cast<int>(i));

    for (int c = 0; c < ds.meta.num_classes; ++c)
        if (by_class[static_cast<std::size_t>(c)].size() < 2)
            throw ParamError("split: class " + std::to_string(c) +
                             " has fewer than 2 samples, cannot appear in both splits");

    ds.split.assign(ds.samples.size(), Split::test);
    const std::uint64_t base = derive_seed(seed, "split");
    for (int c = 0; c < ds.meta.num_classes; ++c) {
        auto& idx = by_class[static_cast<std::size_t>(c)];
        Rng rng(derive_seed(base, static_cast<std::uint64_t>(c)));
        rng.shuffle(idx);
        const int n = static_cast<int>(idx.size());
        int n_train = static_cast<int>(std::lround(train_fraction * n));
        n_train = std::clamp(n_train, 1, n - 1);
        for (int i = 0; i < n_train; ++i) ds.split[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = Split::train;
    }
}

namespace {

json tensor3_to_json(const Tensor& t) {
    json out = json::array();
    for (int a = 0; a < t.dim(0); ++a) {
        json ja = json::array();
        for (int b = 0; b < t.dim(1); ++b) {
            json jb = json::array();
            for (int c = 0; c < t.dim(2); ++c) jb.push_back(t.at(a, b, c));
            ja.push_back(std::move(jb));
        }
        out.push_back(std::move(ja));
    }
    return out;
}

Tensor tensor3_from_json(const json& j, const std::vector<int>& want, const char* field) {
    if (!j.is_array() || static_cast<int>(j.size()) != want[0])
        throw ParamError(std::string(field) + ": expected " + std::to_string(want[0]) + " channels");
    Tensor t = Tensor::zeros(want);
    for (int a = 0; a < want[0]; ++a) {
        const json& ja = j[static_cast<std::size_t>(a)];
        if (!ja.is_array() || static_cast<int>(ja.size()) != want[1])
            throw ParamError(std::string(field) + ": expected " + std::to_string(want[1]) +
                             " entries on axis 1, got " + std::to_string(ja.size()));
        for (int b = 0; b < want[1]; ++b) {
            const json& jb = ja[static_cast<std::size_t>(b)];
            if (!jb.is_array() || static_cast<int>(jb.size()) != want[2])
                throw ParamError(std::string(field) + ": expected " + std::to_string(want[2]) +
                                 " entries on axis 2, got " + std::to_string(jb.size()));
            for (int c = 0; c < want[2]; ++c) {
                const json& v = jb[static_cast<std::size_t>(c)];
                if (!v.is_number()) throw ParamError(std::string(field) + ": non-numeric entry");
                t.at(a, b, c) = v.get<double>();
            }
        }
    }
    return t;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::string& data_path, const std::string& meta_path) {
    ds.validate();
    {
        json meta;
        meta["num_classes"] = ds.meta.num_classes;
        meta["c_sk"] = ds.meta.c_sk;
        meta["t_sk"] = ds.meta.t_sk;
        meta["n_sk"] = ds.meta.n_sk;
        meta["c_ac"] = ds.meta.c_ac;
        meta["s_ac"] = ds.meta.s_ac;
        meta["t_ac"] = ds.meta.t_ac;
        meta["class_names"] = ds.meta.class_names;
        std::ofstream out(meta_path, std::ios::binary);
        if (!out) throw LoadError("cannot write " + meta_path);
        out << meta.dump(2) << "\n";
    }
    std::ofstream out(data_path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + data_path);
    for (const Sample& s : ds.samples) {
        json line;
        line["label"] = s.label;
        if (s.subject)
            line["subject"] = *s.subject;
        else
            line["subject"] = nullptr;
        line["skeleton"] = tensor3_to_json(s.skeleton);
        line["accel"] = tensor3_to_json(s.accel);
        out << line.dump() << "\n";
    }
}

Dataset ingest_jsonl(const std::string& data_path, const std::string& meta_path) {
    Dataset ds;
    {
        std::ifstream in(meta_path, std::ios::binary);
        if (!in) throw LoadError("cannot open " + meta_path);
        json meta;
        try {
            in >> meta;
        } catch (const json::exception& e) {
            throw ParseError(meta_path + ": " + e.what());
        }
        const char* keys[] = {"num_classes", "c_sk", "t_sk", "n_sk", "c_ac", "s_ac", "t_ac", "class_names"};
        for (const char* k : keys)
            if (!meta.contains(k)) throw ParseError(meta_path + ": missing key '" + k + "'");
        for (auto it = meta.begin(); it != meta.end(); ++it) {
            bool known = false;
            for (const char* k : keys) known = known || it.key() == k;
            if (!known) throw ParseError(meta_path + ": unknown key '" + it.key() + "'");
        }
        ds.meta.num_classes = meta["num_classes"].get<int>();
        ds.meta.c_sk = meta["c_sk"].get<int>();
        ds.meta.t_sk = meta["t_sk"].get<int>();
        ds.meta.n_sk = meta["n_sk"].get<int>();
        ds.meta.c_ac = meta["c_ac"].get<int>();
        ds.meta.s_ac = meta["s_ac"].get<int>();
        ds.meta.t_ac = meta["t_ac"].get<int>();
        ds.meta.class_names = meta["class_names"].get<std::vector<std::string>>();
        ds.meta.validate();
    }

    std::ifstream in(data_path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + data_path);
    std::string line;
    int line_no = 0;
    const std::vector<int> sk_shape{ds.meta.c_sk, ds.meta.t_sk, ds.meta.n_sk};
    const std::vector<int> ac_shape{ds.meta.c_ac, ds.meta.s_ac, ds.meta.t_ac};
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(data_path + " line " + std::to_string(line_no) + ": " + e.what());
        }
        try {
            for (auto it = j.begin(); it != j.end(); ++it)
                if (it.key() != "label" && it.key() != "subject" && it.key() != "skeleton" &&
                    it.key() != "accel")
                    throw ParamError("unknown key '" + it.key() + "'");
            if (!j.contains("label") || !j.contains("skeleton") || !j.contains("accel"))
                throw ParamError("record needs label, skeleton and accel");
            Sample s;
            s.label = j["label"].get<int>();
            if (s.label < 0 || s.label >= ds.meta.num_classes)
                throw ParamError("label " + std::to_string(s.label) + " out of range");
            if (j.contains("subject") && !j["subject"].is_null()) s.subject = j["subject"].get<int>();
            s.skeleton = tensor3_from_json(j["skeleton"], sk_shape, "skeleton");
            s.accel = tensor3_from_json(j["accel"], ac_shape, "accel");
            ds.samples.push_back(std::move(s));
        } catch (const ParamError& e) {
            throw ParamError(data_path + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    ds.validate();
    return ds;
}

NormStats normalize(Dataset& ds) {
    const auto train = ds.indices_of(Split::train);
    if (train.empty()) throw ParamError("normalize: train split is empty");

    NormStats st;
    st.sk_mean.assign(3, 0.0);
    st.sk_std.assign(3, 1.0);
    st.ac_mean.assign(3, 0.0);
    st.ac_std.assign(3, 1.0);

    auto channel_stats = [&](bool skeleton, int ch, double& mean, double& stddev) {
        double sum = 0.0;
        std::int64_t count = 0;
        for (int i : train) {
            const Tensor& t = skeleton ? ds.samples[static_cast<std::size_t>(i)].skeleton
                                       : ds.samples[static_cast<std::size_t>(i)].accel;
            const std::int64_t plane = t.numel() / t.dim(0);
            const Scalar* p = &t.data[static_cast<std::size_t>(ch * plane)];
            for (std::int64_t k = 0; k < plane; ++k) sum += p[k];
            count += plane;
        }
        mean = sum / static_cast<double>(count);
        double sq = 0.0;
        for (int i : train) {
            const Tensor& t = skeleton ? ds.samples[static_cast<std::size_t>(i)].skeleton
                                       : ds.samples[static_cast<std::size_t>(i)].accel;
            const std::int64_t plane = t.numel() / t.dim(0);
            const Scalar* p = &t.data[static_cast<std::size_t>(ch * plane)];
            for (std::int64_t k = 0; k < plane; ++k) sq += (p[k] - mean) * (p[k] - mean);
        }
        stddev = std::sqrt(sq / static_cast<double>(count));
    };

    for (int ch = 0; ch < 3; ++ch) {
        channel_stats(true, ch, st.sk_mean[static_cast<std::size_t>(ch)], st.sk_std[static_cast<std::size_t>(ch)]);
        channel_stats(false, ch, st.ac_mean[static_cast<std::size_t>(ch)], st.ac_std[static_cast<std::size_t>(ch)]);
    }

    auto apply = [&](Tensor& t, int ch, double mean, double stddev) {
        if (stddev < 1e-12) return;  // zero-variance guard: pass through
        const std::int64_t plane = t.numel() / t.dim(0);
        Scalar* p = &t.data[static_cast<std::size_t>(ch * plane)];
        for (std::int64_t k = 0; k < plane; ++k) p[k] = (p[k] - mean) / stddev;
    };
    for (Sample& s : ds.samples)
        for (int ch = 0; ch < 3; ++ch) {
            apply(s.skeleton, ch, st.sk_mean[static_cast<std::size_t>(ch)], st.sk_std[static_cast<std::size_t>(ch)]);
            apply(s.accel, ch, st.ac_mean[static_cast<std::size_t>(ch)], st.ac_std[static_cast<std::size_t>(ch)]);
        }
    return st;
}

void write_norm_stats(const NormStats& st, const std::string& path) {
    json j;
    j["skeleton"]["mean"] = st.sk_mean;
    j["skeleton"]["std"] = st.sk_std;
    j["accel"]["mean"] = st.ac_mean;
    j["accel"]["std"] = st.ac_std;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path);
    out << j.dump(2) << "\n";
}

}  // namespace pskd
