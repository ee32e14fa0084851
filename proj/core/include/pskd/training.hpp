#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pskd/data.hpp"
#include "pskd/losses.hpp"
#include "pskd/model.hpp"
#include "pskd/optimizer.hpp"

namespace pskd {

enum class Mode : std::uint8_t { no_distill, baseline_kd, pskd };

const char* mode_name(Mode m);
Mode mode_from_name(const std::string& name);

// Non-data knobs of the three encoders; input widths come from the
// dataset meta per role.
struct ModelConfig {
    std::vector<int> conv_widths{16, 32};
    int kernel_size = 5;
    int d_sem = 64;
};

struct Schedule {
    Mode mode = Mode::baseline_kd;
    int k = 1;  // progressive granularity: teacher epochs per window
    int epochs = 60;
    int batch_size = 32;
    double lr_teacher = 1e-3;
    double lr_student = 1e-3;
    LossWeights weights;
    LossOptions options;
    std::uint64_t seed = 1;
    int teacher_warmup_epochs = 0;
    bool f32_params = false;

    void validate() const;
};

// Loss breakdown plus classification metrics on one split.
struct SplitRecord {
    double l_c = 0.0, l_k = 0.0, l_kd = 0.0, l_mk = 0.0, l_s = 0.0, l_total = 0.0;
    double accuracy = 0.0, macro_f1 = 0.0;
};

struct EpochRecord {
    int epoch = 0;
    Role model = Role::student;
    SplitRecord train;
    SplitRecord test;
    double wall_ms = 0.0;  // measured; kept out of byte-compared artifacts
};

struct TrainResult {
    std::vector<EpochRecord> records;
    std::optional<Model> teacher_sk;
    std::optional<Model> teacher_fu;
    std::optional<Model> student;

    // Final test metrics of a model, from its last record.
    const EpochRecord* last_record(Role r) const;
    double final_test_accuracy(Role r) const;
    double final_test_macro_f1(Role r) const;
};

// Plain-CE training of both teachers on their own modality, to the
// epoch budget (plus warmup). Divergence raises RunError with the epoch.
TrainResult pretrain_teachers(const Dataset& ds, const ModelConfig& mc, const Schedule& sched);

// Student minimizes the full objective against a fixed teacher bundle
// for the whole budget. Teachers stay byte-identical throughout.
TrainResult train_baseline_kd(const Dataset& ds, const ModelConfig& mc, const Schedule& sched);

// Same, but against caller-supplied pretrained teachers; what
// train_baseline_kd runs after its internal pretraining. Exposed so
// ablation sweeps can share one teacher pretraining per seed.
TrainResult train_student_against(const Dataset& ds, const ModelConfig& mc, const Schedule& sched,
                                  const Model& teacher_sk, const Model& teacher_fu);

// Progressive schedule: all three models start from initialization;
// teachers advance k epochs toward the labels, a byte-copy snapshot is
// taken, the student distills against the snapshots for k epochs;
// repeat to the budget. Per-sample teacher weights are recomputed every
// batch from the current snapshots.
TrainResult train_pskd(const Dataset& ds, const ModelConfig& mc, const Schedule& sched);

// Control arm: student trained with plain cross-entropy only.
TrainResult train_no_distill(const Dataset& ds, const ModelConfig& mc, const Schedule& sched);

// Dispatch on sched.mode.
TrainResult run_training(const Dataset& ds, const ModelConfig& mc, const Schedule& sched);

struct GridCell {
    double alpha = 0.0, beta = 0.0, gamma = 0.0;
};

struct CellOutcome {
    GridCell cell;
    std::string status = "ok";  // or the first error encountered
    std::vector<double> accs, f1s;  // per-seed student test finals
    double mean_acc = 0.0, std_acc = 0.0;
    double mean_f1 = 0.0, std_f1 = 0.0;
};

// One training run per (cell, seed) with the run seed derived from
// (seed, cell index), so cells never perturb each other. A failed cell
// is recorded in its status, not fatal.
std::vector<CellOutcome> grid_search(const Dataset& ds, const ModelConfig& mc,
                                     const Schedule& base, const std::vector<GridCell>& grid,
                                     const std::vector<std::uint64_t>& seeds);

// Highest mean test accuracy; ties broken by lexicographic (alpha, beta,
// gamma). Returns -1 when every cell failed.
int best_cell(const std::vector<CellOutcome>& outcomes);

// Single-split evaluation used for the per-epoch records. Passing the
// teachers makes it a full-objective record; without them it is a
// plain-CE record.
SplitRecord eval_split(const Dataset& ds, Split split, const Model& m, const Model* t_sk,
                       const Model* t_fu, const LossWeights& w, const LossOptions& opt);

}  // namespace pskd
