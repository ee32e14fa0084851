#include "pskd/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "pskd/eval.hpp"
#include "pskd/rng.hpp"

namespace pskd {

const char* mode_name(Mode m) {
    switch (m) {
        case Mode::no_distill: return "no_distill";
        case Mode::baseline_kd: return "baseline_kd";
        case Mode::pskd: return "pskd";
    }
    throw InternalError("mode_name: bad mode");
}

Mode mode_from_name(const std::string& name) {
    if (name == "no_distill") return Mode::no_distill;
    if (name == "baseline_kd") return Mode::baseline_kd;
    if (name == "pskd") return Mode::pskd;
    throw ParamError("unknown mode '" + name + "'");
}

void Schedule::validate() const {
    if (epochs < 0) throw ParamError("schedule: epochs must be >= 0");
    if (mode == Mode::pskd) {
        if (k < 1) throw ParamError("schedule: pskd needs k >= 1");
        if (k > epochs && epochs > 0) throw ParamError("schedule: k must be <= epochs");
    }
    if (batch_size < 1) throw ParamError("schedule: batch_size must be >= 1");
    if (!(lr_teacher > 0.0) || !(lr_student > 0.0))
        throw ParamError("schedule: learning rates must be positive");
    if (teacher_warmup_epochs < 0) throw ParamError("schedule: teacher_warmup_epochs must be >= 0");
    weights.validate();
}

const EpochRecord* TrainResult::last_record(Role r) const {
    const EpochRecord* out = nullptr;
    for (const EpochRecord& rec : records)
        if (rec.model == r && (!out || rec.epoch >= out->epoch)) out = &rec;
    return out;
}

double TrainResult::final_test_accuracy(Role r) const {
    const EpochRecord* rec = last_record(r);
    return rec ? rec->test.accuracy : 0.0;
}

double TrainResult::final_test_macro_f1(Role r) const {
    const EpochRecord* rec = last_record(r);
    return rec ? rec->test.macro_f1 : 0.0;
}

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::vector<int> labels_of(const Dataset& ds, const std::vector<int>& idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(ds.samples[static_cast<std::size_t>(i)].label);
    return out;
}

// Per-sample forward outputs of one frozen teacher over the whole
// dataset. Every op in the trunk is per-sample independent, so gathering
// cached rows is bitwise identical to running the batch through the
// model again; this only removes redundant forward passes within a
// snapshot window.
class SnapshotOutputs {
  public:
    SnapshotOutputs(const Model& m, const Dataset& ds) {
        const int n = static_cast<int>(ds.samples.size());
        const int d_sem = m.spec.d_sem, classes = m.spec.num_classes;
        h_ = Tensor::zeros({n, d_sem});
        z_ = Tensor::zeros({n, classes});
        constexpr int kChunk = 64;
        std::vector<int> chunk;
        for (int start = 0; start < n; start += kChunk) {
            chunk.clear();
            for (int i = start; i < std::min(n, start + kChunk); ++i) chunk.push_back(i);
            const ForwardOutput out = forward(m, make_batch(ds, chunk, m.spec.role));
            for (std::size_t b = 0; b < chunk.size(); ++b) {
                const int dst = chunk[b];
                for (int j = 0; j < d_sem; ++j) h_.at(dst, j) = out.h.at(static_cast<int>(b), j);
                for (int j = 0; j < classes; ++j) z_.at(dst, j) = out.z.at(static_cast<int>(b), j);
            }
        }
    }

    ForwardOutput gather(const std::vector<int>& idx) const {
        ForwardOutput out;
        out.h = Tensor::zeros({static_cast<int>(idx.size()), h_.dim(1)});
        out.z = Tensor::zeros({static_cast<int>(idx.size()), z_.dim(1)});
        for (std::size_t b = 0; b < idx.size(); ++b) {
            for (int j = 0; j < h_.dim(1); ++j) out.h.at(static_cast<int>(b), j) = h_.at(idx[b], j);
            for (int j = 0; j < z_.dim(1); ++j) out.z.at(static_cast<int>(b), j) = z_.at(idx[b], j);
        }
        return out;
    }

  private:
    Tensor h_, z_;
};

// Both frozen teachers of one snapshot window.
struct SnapshotPair {
    SnapshotOutputs sk;
    SnapshotOutputs fu;

    SnapshotPair(const Model& t_sk, const Model& t_fu, const Dataset& ds)
        : sk(t_sk, ds), fu(t_fu, ds) {}

    TeacherBundle bundle_for(const std::vector<int>& idx) const {
        TeacherBundle b;
        b.teachers.push_back(sk.gather(idx));
        b.teachers.push_back(fu.gather(idx));
        return b;
    }
};

SplitRecord eval_split_cached(const Dataset& ds, Split split, const Model& m,
                              const SnapshotPair* snap, const LossWeights& w,
                              const LossOptions& opt) {
    const std::vector<int> indices = ds.indices_of(split);
    if (indices.empty()) throw ParamError("eval_split: empty split");

    SplitRecord rec;
    ConfusionMatrix confusion(ds.meta.num_classes);
    constexpr int kChunk = 64;
    const double n = static_cast<double>(indices.size());
    for (std::size_t start = 0; start < indices.size(); start += kChunk) {
        const std::size_t end = std::min(indices.size(), start + kChunk);
        const std::vector<int> chunk(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                     indices.begin() + static_cast<std::ptrdiff_t>(end));
        const std::vector<int> labels = labels_of(ds, chunk);
        const ForwardOutput out = forward(m, make_batch(ds, chunk, m.spec.role));
        const double frac = static_cast<double>(chunk.size()) / n;

        if (snap) {
            const LossBreakdown lb = total_loss(out, snap->bundle_for(chunk), labels, w, opt);
            rec.l_c += frac * lb.l_c;
            rec.l_k += frac * lb.l_k;
            rec.l_kd += frac * lb.l_kd;
            rec.l_mk += frac * lb.l_mk;
            rec.l_s += frac * lb.l_s;
            rec.l_total += frac * lb.total;
        } else {
            const double l_c = cross_entropy(softmax(out.z), labels);
            rec.l_c += frac * l_c;
            rec.l_kd += frac * l_c;
            rec.l_total += frac * l_c;
        }
        for (int b = 0; b < out.z.dim(0); ++b) {
            int arg = 0;
            for (int c = 1; c < out.z.dim(1); ++c)
                if (out.z.at(b, c) > out.z.at(b, arg)) arg = c;
            ++confusion.at(labels[static_cast<std::size_t>(b)], arg);
        }
    }

    rec.accuracy = static_cast<double>(confusion.trace()) / static_cast<double>(confusion.total());
    double f1_sum = 0.0;
    for (int c = 0; c < ds.meta.num_classes; ++c) {
        std::int64_t tp = confusion.at(c, c), fp = 0, fn = 0;
        for (int o = 0; o < ds.meta.num_classes; ++o) {
            if (o == c) continue;
            fp += confusion.at(o, c);
            fn += confusion.at(c, o);
        }
        const double prec = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        const double recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        f1_sum += prec + recall > 0.0 ? 2.0 * prec * recall / (prec + recall) : 0.0;
    }
    rec.macro_f1 = f1_sum / ds.meta.num_classes;
    return rec;
}

// Owns every mutable piece of one training run. RNG streams are derived
// per (seed, purpose, model), never shared, so the student's trajectory
// is identical whether or not teachers train in the same run.
class Trainer {
  public:
    Trainer(const Dataset& ds, const ModelConfig& mc, const Schedule& sched)
        : ds_(ds), mc_(mc), sched_(sched) {
        sched_.validate();
        ds_.validate();
        if (ds_.split.empty()) throw ParamError("training: dataset has no train/test split");
        train_idx_ = ds_.indices_of(Split::train);
        if (train_idx_.empty()) throw ParamError("training: empty train split");
    }

    Model build_role_model(Role role) const {
        const EncoderSpec spec =
            EncoderSpec::for_role(role, ds_.meta, mc_.conv_widths, mc_.kernel_size, mc_.d_sem);
        return build_model(spec, derive_seed(sched_.seed, std::string("init-") + role_name(role)));
    }

    // One plain-CE epoch over the train split (teachers and the
    // no-distill student).
    void ce_epoch(Model& m, AdamState& opt, int epoch) {
        Rng rng(derive_seed(derive_seed(sched_.seed, std::string("shuffle-") + role_name(m.spec.role)),
                            static_cast<std::uint64_t>(epoch)));
        std::vector<int> order = train_idx_;
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(sched_.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(sched_.batch_size));
            const std::vector<int> batch_idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                             order.begin() + static_cast<std::ptrdiff_t>(end));
            GradTape tape;
            const TapedForward out = forward(m, make_batch(ds_, batch_idx, m.spec.role), tape);
            const Value loss = build_ce_loss(tape, out, labels_of(ds_, batch_idx));
            step(m, opt, tape, loss, epoch);
        }
    }

    // One student epoch minimizing the full objective against frozen
    // teacher snapshots; per-sample weights recomputed every batch from
    // the snapshot outputs.
    void distill_epoch(Model& student, AdamState& opt, const SnapshotPair& snap, int epoch) {
        Rng rng(derive_seed(derive_seed(sched_.seed, "shuffle-student"),
                            static_cast<std::uint64_t>(epoch)));
        std::vector<int> order = train_idx_;
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(sched_.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(sched_.batch_size));
            const std::vector<int> batch_idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                             order.begin() + static_cast<std::ptrdiff_t>(end));
            const TeacherBundle bundle = snap.bundle_for(batch_idx);

            GradTape tape;
            const TapedForward out = forward(student, make_batch(ds_, batch_idx, Role::student), tape);
            const TapedLoss loss = build_total_loss(tape, out, bundle, labels_of(ds_, batch_idx),
                                                    sched_.weights, sched_.options);
            step(student, opt, tape, loss.total, epoch);
        }
    }

    void step(Model& m, AdamState& opt, const GradTape& tape, Value loss, int epoch) {
        const Scalar value = tape.scalar_value(loss);
        if (!std::isfinite(value))
            throw RunError("epoch " + std::to_string(epoch) + ": " + role_name(m.spec.role) +
                           " loss diverged (non-finite)");
        try {
            adam_step(opt, m.params, tape.backward(loss));
        } catch (const NumericError& e) {
            throw RunError("epoch " + std::to_string(epoch) + ": " + role_name(m.spec.role) +
                           " diverged: " + e.what());
        }
    }

    EpochRecord record(int epoch, const Model& m, const SnapshotPair* snap, double wall_ms) const {
        EpochRecord rec;
        rec.epoch = epoch;
        rec.model = m.spec.role;
        rec.train = eval_split_cached(ds_, Split::train, m, snap, sched_.weights, sched_.options);
        rec.test = eval_split_cached(ds_, Split::test, m, snap, sched_.weights, sched_.options);
        rec.wall_ms = wall_ms;
        return rec;
    }

    AdamState make_opt(const Model& m, double lr) const {
        AdamConfig cfg;
        cfg.lr = lr;
        cfg.f32_params = sched_.f32_params;
        return make_adam(m.params, cfg);
    }

    const Dataset& ds_;
    ModelConfig mc_;
    Schedule sched_;
    std::vector<int> train_idx_;
};

struct TeacherTrack {
    Model model;
    AdamState opt;
    int next_epoch = 0;
};

void advance_teacher(Trainer& tr, TeacherTrack& t, int epochs, TrainResult& result) {
    for (int i = 0; i < epochs; ++i) {
        const double t0 = now_ms();
        tr.ce_epoch(t.model, t.opt, t.next_epoch);
        result.records.push_back(
            tr.record(t.next_epoch, t.model, nullptr, now_ms() - t0));
        ++t.next_epoch;
    }
}

}  // namespace

SplitRecord eval_split(const Dataset& ds, Split split, const Model& m, const Model* t_sk,
                       const Model* t_fu, const LossWeights& w, const LossOptions& opt) {
    if (t_sk && t_fu) {
        const SnapshotPair snap(*t_sk, *t_fu, ds);
        return eval_split_cached(ds, split, m, &snap, w, opt);
    }
    return eval_split_cached(ds, split, m, nullptr, w, opt);
}

TrainResult pretrain_teachers(const Dataset& ds, const ModelConfig& mc, const Schedule& sched) {
    Trainer tr(ds, mc, sched);
    TrainResult result;

    const int total = sched.epochs + sched.teacher_warmup_epochs;
    for (Role role : {Role::teacher_sk, Role::teacher_fu}) {
        TeacherTrack t{tr.build_role_model(role), AdamState{}, 0};
        t.opt = tr.make_opt(t.model, sched.lr_teacher);
        advance_teacher(tr, t, total, result);
        if (total == 0)
            result.records.push_back(tr.record(0, t.model, nullptr, 0.0));
        if (role == Role::teacher_sk)
            result.teacher_sk = std::move(t.model);
        else
            result.teacher_fu = std::move(t.model);
    }
    return result;
}

TrainResult train_student_against(const Dataset& ds, const ModelConfig& mc, const Schedule& sched,
                                  const Model& teacher_sk, const Model& teacher_fu) {
    Trainer tr(ds, mc, sched);
    TrainResult result;
    result.teacher_sk = teacher_sk;
    result.teacher_fu = teacher_fu;

    const SnapshotPair snap(teacher_sk, teacher_fu, ds);
    Model student = tr.build_role_model(Role::student);
    AdamState opt = tr.make_opt(student, sched.lr_student);
    for (int e = 0; e < sched.epochs; ++e) {
        const double t0 = now_ms();
        tr.distill_epoch(student, opt, snap, e);
        result.records.push_back(tr.record(e, student, &snap, now_ms() - t0));
    }
    if (sched.epochs == 0) result.records.push_back(tr.record(0, student, &snap, 0.0));
    result.student = std::move(student);
    return result;
}

TrainResult train_baseline_kd(const Dataset& ds, const ModelConfig& mc, const Schedule& sched) {
    TrainResult pre = pretrain_teachers(ds, mc, sched);
    TrainResult result = train_student_against(ds, mc, sched, *pre.teacher_sk, *pre.teacher_fu);
    // Teacher records first, then the student phase.
    result.records.insert(result.records.begin(), pre.records.begin(), pre.records.end());
    return result;
}

TrainResult train_pskd(const Dataset& ds, const ModelConfig& mc, const Schedule& sched) {
    Schedule s = sched;
    s.mode = Mode::pskd;
    Trainer tr(ds, mc, s);
    TrainResult result;

    TeacherTrack sk{tr.build_role_model(Role::teacher_sk), AdamState{}, 0};
    TeacherTrack fu{tr.build_role_model(Role::teacher_fu), AdamState{}, 0};
    sk.opt = tr.make_opt(sk.model, s.lr_teacher);
    fu.opt = tr.make_opt(fu.model, s.lr_teacher);
    Model student = tr.build_role_model(Role::student);
    AdamState sopt = tr.make_opt(student, s.lr_student);

    advance_teacher(tr, sk, s.teacher_warmup_epochs, result);
    advance_teacher(tr, fu, s.teacher_warmup_epochs, result);

    int done = 0;
    while (done < s.epochs) {
        const int window = std::min(s.k, s.epochs - done);
        advance_teacher(tr, sk, window, result);
        advance_teacher(tr, fu, window, result);

        // Byte-copy snapshots; the student only ever sees these.
        const Model snap_sk = sk.model;
        const Model snap_fu = fu.model;
        const SnapshotPair snap(snap_sk, snap_fu, ds);
        for (int i = 0; i < window; ++i) {
            const int e = done + i;
            const double t0 = now_ms();
            tr.distill_epoch(student, sopt, snap, e);
            result.records.push_back(tr.record(e, student, &snap, now_ms() - t0));
        }
        done += window;
    }
    if (s.epochs == 0) {
        const SnapshotPair snap(sk.model, fu.model, ds);
        result.records.push_back(tr.record(0, student, &snap, 0.0));
    }

    result.teacher_sk = std::move(sk.model);
    result.teacher_fu = std::move(fu.model);
    result.student = std::move(student);
    return result;
}

TrainResult train_no_distill(const Dataset& ds, const ModelConfig& mc, const Schedule& sched) {
    Trainer tr(ds, mc, sched);
    TrainResult result;
    Model student = tr.build_role_model(Role::student);
    AdamState opt = tr.make_opt(student, sched.lr_student);
    for (int e = 0; e < sched.epochs; ++e) {
        const double t0 = now_ms();
        tr.ce_epoch(student, opt, e);
        result.records.push_back(tr.record(e, student, nullptr, now_ms() - t0));
    }
    if (sched.epochs == 0)
        result.records.push_back(tr.record(0, student, nullptr, 0.0));
    result.student = std::move(student);
    return result;
}

TrainResult run_training(const Dataset& ds, const ModelConfig& mc, const Schedule& sched) {
    switch (sched.mode) {
        case Mode::no_distill: return train_no_distill(ds, mc, sched);
        case Mode::baseline_kd: return train_baseline_kd(ds, mc, sched);
        case Mode::pskd: return train_pskd(ds, mc, sched);
    }
    throw InternalError("run_training: bad mode");
}

std::vector<CellOutcome> grid_search(const Dataset& ds, const ModelConfig& mc,
                                     const Schedule& base, const std::vector<GridCell>& grid,
                                     const std::vector<std::uint64_t>& seeds) {
    if (grid.empty()) throw ParamError("grid_search: empty grid");
    if (seeds.empty()) throw ParamError("grid_search: need at least one seed");

    std::vector<CellOutcome> outcomes;
    outcomes.reserve(grid.size());
    for (std::size_t ci = 0; ci < grid.size(); ++ci) {
        CellOutcome out;
        out.cell = grid[ci];
        for (std::uint64_t seed : seeds) {
            Schedule s = base;
            s.weights.alpha = grid[ci].alpha;
            s.weights.beta = grid[ci].beta;
            s.weights.gamma = grid[ci].gamma;
            s.seed = derive_seed(seed, static_cast<std::uint64_t>(ci));
            try {
                const TrainResult r = run_training(ds, mc, s);
                out.accs.push_back(r.final_test_accuracy(Role::student));
                out.f1s.push_back(r.final_test_macro_f1(Role::student));
            } catch (const std::exception& e) {
                if (out.status == "ok") out.status = e.what();
            }
        }
        if (!out.accs.empty()) {
            double sa = 0.0, sf = 0.0;
            for (double a : out.accs) sa += a;
            for (double f : out.f1s) sf += f;
            out.mean_acc = sa / static_cast<double>(out.accs.size());
            out.mean_f1 = sf / static_cast<double>(out.f1s.size());
            double va = 0.0, vf = 0.0;
            for (double a : out.accs) va += (a - out.mean_acc) * (a - out.mean_acc);
            for (double f : out.f1s) vf += (f - out.mean_f1) * (f - out.mean_f1);
            out.std_acc = std::sqrt(va / static_cast<double>(out.accs.size()));
            out.std_f1 = std::sqrt(vf / static_cast<double>(out.f1s.size()));
        }
        outcomes.push_back(std::move(out));
    }
    return outcomes;
}

int best_cell(const std::vector<CellOutcome>& outcomes) {
    int best = -1;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const CellOutcome& o = outcomes[i];
        if (o.status != "ok" || o.accs.empty()) continue;
        if (best < 0) {
            best = static_cast<int>(i);
            continue;
        }
        const CellOutcome& b = outcomes[static_cast<std::size_t>(best)];
        if (o.mean_acc > b.mean_acc) {
            best = static_cast<int>(i);
        } else if (o.mean_acc == b.mean_acc) {
            const auto key = [](const CellOutcome& c) {
                return std::make_tuple(c.cell.alpha, c.cell.beta, c.cell.gamma);
            };
            if (key(o) < key(b)) best = static_cast<int>(i);
        }
    }
    return best;
}

}  // namespace pskd
