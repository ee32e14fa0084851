#include "pskd/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace pskd {

using json = nlohmann::ordered_json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw ParamError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw ParamError(where + ": unknown key '" + it.key() + "'");
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

GenConfig parse_gen(const json& j) {
    reject_unknown(j, {"num_classes", "samples_per_class", "t_sk", "n_sk", "t_ac", "sigma_sk",
                       "sigma_ac", "wrist_joint", "seed"},
                   "dataset.synthetic");
    GenConfig g;
    g.num_classes = get_or(j, "num_classes", g.num_classes);
    g.samples_per_class = get_or(j, "samples_per_class", g.samples_per_class);
    g.t_sk = get_or(j, "t_sk", g.t_sk);
    g.n_sk = get_or(j, "n_sk", g.n_sk);
    g.t_ac = get_or(j, "t_ac", g.t_ac);
    g.sigma_sk = get_or(j, "sigma_sk", g.sigma_sk);
    g.sigma_ac = get_or(j, "sigma_ac", g.sigma_ac);
    g.wrist_joint = get_or(j, "wrist_joint", g.wrist_joint);
    g.seed = get_or(j, "seed", g.seed);
    g.validate();
    return g;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (synthetic && (data_path || meta_path))
        throw ParamError("dataset: choose synthetic or files, not both");
    if (!synthetic) {
        if (!data_path || !meta_path)
            throw ParamError("dataset: need either a synthetic block or files.data + files.meta");
    }
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ParamError("dataset.train_fraction must be in (0,1)");
    if (synthetic) synthetic->validate();
    schedule.validate();
    if (model.d_sem < 1) throw ParamError("model.d_sem must be >= 1");
    if (model.kernel_size < 1 || model.kernel_size % 2 == 0)
        throw ParamError("model.kernel_size must be odd");
    if (model.conv_widths.empty()) throw ParamError("model.conv_widths must not be empty");
    if (seeds.empty()) throw ParamError("seeds: need at least one seed");
    if (output_dir.empty()) throw ParamError("output.dir must not be empty");
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(origin + ": " + e.what());
    }
    reject_unknown(j, {"dataset", "model", "loss", "schedule", "output", "seeds"}, origin);

    ExperimentConfig cfg;

    if (j.contains("dataset")) {
        const json& d = j["dataset"];
        reject_unknown(d, {"synthetic", "files", "train_fraction", "split_seed"}, "dataset");
        if (d.contains("synthetic")) cfg.synthetic = parse_gen(d["synthetic"]);
        if (d.contains("files")) {
            const json& f = d["files"];
            reject_unknown(f, {"data", "meta"}, "dataset.files");
            if (!f.contains("data") || !f.contains("meta"))
                throw ParamError("dataset.files needs both 'data' and 'meta'");
            cfg.data_path = f["data"].get<std::string>();
            cfg.meta_path = f["meta"].get<std::string>();
        }
        cfg.train_fraction = get_or(d, "train_fraction", cfg.train_fraction);
        cfg.split_seed = get_or(d, "split_seed", cfg.split_seed);
    } else {
        cfg.synthetic = GenConfig{};
    }

    if (j.contains("model")) {
        const json& m = j["model"];
        reject_unknown(m, {"conv_widths", "kernel_size", "d_sem"}, "model");
        cfg.model.conv_widths = get_or(m, "conv_widths", cfg.model.conv_widths);
        cfg.model.kernel_size = get_or(m, "kernel_size", cfg.model.kernel_size);
        cfg.model.d_sem = get_or(m, "d_sem", cfg.model.d_sem);
    }

    if (j.contains("loss")) {
        const json& l = j["loss"];
        reject_unknown(l, {"alpha", "beta", "gamma", "temperature", "mk_raw_logits", "kd_t_squared",
                           "gate_tau"},
                       "loss");
        cfg.schedule.weights.alpha = get_or(l, "alpha", cfg.schedule.weights.alpha);
        cfg.schedule.weights.beta = get_or(l, "beta", cfg.schedule.weights.beta);
        cfg.schedule.weights.gamma = get_or(l, "gamma", cfg.schedule.weights.gamma);
        cfg.schedule.weights.temperature = get_or(l, "temperature", cfg.schedule.weights.temperature);
        cfg.schedule.options.mk_raw_logits = get_or(l, "mk_raw_logits", cfg.schedule.options.mk_raw_logits);
        cfg.schedule.options.kd_t_squared = get_or(l, "kd_t_squared", cfg.schedule.options.kd_t_squared);
        if (l.contains("gate_tau") && !l["gate_tau"].is_null())
            cfg.schedule.options.gate_tau = l["gate_tau"].get<double>();
    }

    if (j.contains("schedule")) {
        const json& s = j["schedule"];
        reject_unknown(s, {"mode", "k", "epochs", "batch_size", "lr_teacher", "lr_student",
                           "teacher_warmup_epochs", "precision"},
                       "schedule");
        if (s.contains("mode")) cfg.schedule.mode = mode_from_name(s["mode"].get<std::string>());
        cfg.schedule.k = get_or(s, "k", cfg.schedule.k);
        cfg.schedule.epochs = get_or(s, "epochs", cfg.schedule.epochs);
        cfg.schedule.batch_size = get_or(s, "batch_size", cfg.schedule.batch_size);
        cfg.schedule.lr_teacher = get_or(s, "lr_teacher", cfg.schedule.lr_teacher);
        cfg.schedule.lr_student = get_or(s, "lr_student", cfg.schedule.lr_student);
        cfg.schedule.teacher_warmup_epochs =
            get_or(s, "teacher_warmup_epochs", cfg.schedule.teacher_warmup_epochs);
        if (s.contains("precision")) {
            const std::string p = s["precision"].get<std::string>();
            if (p == "f32")
                cfg.schedule.f32_params = true;
            else if (p == "f64")
                cfg.schedule.f32_params = false;
            else
                throw ParamError("schedule.precision must be 'f32' or 'f64'");
        }
    }

    if (j.contains("output")) {
        const json& o = j["output"];
        reject_unknown(o, {"dir"}, "output");
        cfg.output_dir = get_or(o, "dir", cfg.output_dir);
    }

    if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();

    cfg.validate();
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open config " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text, path);
}

std::string resolved_config_json(const ExperimentConfig& cfg) {
    json j;
    if (cfg.synthetic) {
        const GenConfig& g = *cfg.synthetic;
        json s;
        s["num_classes"] = g.num_classes;
        s["samples_per_class"] = g.samples_per_class;
        s["t_sk"] = g.t_sk;
        s["n_sk"] = g.n_sk;
        s["t_ac"] = g.t_ac;
        s["sigma_sk"] = g.sigma_sk;
        s["sigma_ac"] = g.sigma_ac;
        s["wrist_joint"] = g.wrist_joint;
        s["seed"] = g.seed;
        j["dataset"]["synthetic"] = s;
    } else {
        j["dataset"]["files"]["data"] = *cfg.data_path;
        j["dataset"]["files"]["meta"] = *cfg.meta_path;
    }
    j["dataset"]["train_fraction"] = cfg.train_fraction;
    j["dataset"]["split_seed"] = cfg.split_seed;

    j["model"]["conv_widths"] = cfg.model.conv_widths;
    j["model"]["kernel_size"] = cfg.model.kernel_size;
    j["model"]["d_sem"] = cfg.model.d_sem;

    j["loss"]["alpha"] = cfg.schedule.weights.alpha;
    j["loss"]["beta"] = cfg.schedule.weights.beta;
    j["loss"]["gamma"] = cfg.schedule.weights.gamma;
    j["loss"]["temperature"] = cfg.schedule.weights.temperature;
    j["loss"]["mk_raw_logits"] = cfg.schedule.options.mk_raw_logits;
    j["loss"]["kd_t_squared"] = cfg.schedule.options.kd_t_squared;
    if (cfg.schedule.options.gate_tau)
        j["loss"]["gate_tau"] = *cfg.schedule.options.gate_tau;
    else
        j["loss"]["gate_tau"] = nullptr;

    j["schedule"]["mode"] = mode_name(cfg.schedule.mode);
    j["schedule"]["k"] = cfg.schedule.k;
    j["schedule"]["epochs"] = cfg.schedule.epochs;
    j["schedule"]["batch_size"] = cfg.schedule.batch_size;
    j["schedule"]["lr_teacher"] = cfg.schedule.lr_teacher;
    j["schedule"]["lr_student"] = cfg.schedule.lr_student;
    j["schedule"]["teacher_warmup_epochs"] = cfg.schedule.teacher_warmup_epochs;
    j["schedule"]["precision"] = cfg.schedule.f32_params ? "f32" : "f64";

    j["output"]["dir"] = cfg.output_dir;
    j["seeds"] = cfg.seeds;
    return j.dump(2) + "\n";
}

std::pair<Dataset, NormStats> prepare_dataset(const ExperimentConfig& cfg) {
    Dataset ds = cfg.synthetic ? generate_dataset(*cfg.synthetic)
                               : ingest_jsonl(*cfg.data_path, *cfg.meta_path);
    split_dataset(ds, cfg.train_fraction, cfg.split_seed);
    NormStats st = normalize(ds);
    return {std::move(ds), std::move(st)};
}

}  // namespace pskd
