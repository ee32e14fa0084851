#include <doctest.h>

#include <cmath>

#include "pskd/rng.hpp"
#include "pskd/training.hpp"

using namespace pskd;

namespace {

// Small corpus so the schedule tests stay in milliseconds-to-seconds
// territory; the full-scale experiments live in the acceptance suite.
Dataset small_dataset(std::uint64_t seed = 7) {
    GenConfig g;
    g.num_classes = 3;
    g.samples_per_class = 16;
    g.t_sk = 12;
    g.n_sk = 3;
    g.t_ac = 10;
    g.sigma_sk = 0.8;
    g.sigma_ac = 2.0;
    g.seed = seed;
    Dataset ds = generate_dataset(g);
    split_dataset(ds, 0.5, 3);
    normalize(ds);
    return ds;
}

ModelConfig small_models() {
    ModelConfig mc;
    mc.conv_widths = {4, 6};
    mc.kernel_size = 3;
    mc.d_sem = 8;
    return mc;
}

Schedule small_schedule(Mode mode, int epochs = 3) {
    Schedule s;
    s.mode = mode;
    s.epochs = epochs;
    s.batch_size = 8;
    s.seed = 5;
    return s;
}

bool records_equal(const std::vector<EpochRecord>& a, const std::vector<EpochRecord>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].epoch != b[i].epoch || a[i].model != b[i].model) return false;
        const auto eq = [](const SplitRecord& x, const SplitRecord& y) {
            return x.l_c == y.l_c && x.l_k == y.l_k && x.l_kd == y.l_kd && x.l_mk == y.l_mk &&
                   x.l_s == y.l_s && x.l_total == y.l_total && x.accuracy == y.accuracy &&
                   x.macro_f1 == y.macro_f1;
        };
        if (!eq(a[i].train, b[i].train) || !eq(a[i].test, b[i].test)) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("schedule validation") {
    Schedule s = small_schedule(Mode::pskd);
    s.k = 5;
    s.epochs = 3;
    CHECK_THROWS_AS(s.validate(), ParamError);
    s.k = 3;
    CHECK_NOTHROW(s.validate());
    s.batch_size = 0;
    CHECK_THROWS_AS(s.validate(), ParamError);
}

TEST_CASE("zeroed coefficients reduce baseline_kd to no_distill bit-exactly") {
    const Dataset ds = small_dataset();
    const ModelConfig mc = small_models();

    Schedule kd = small_schedule(Mode::baseline_kd, 4);
    kd.weights.alpha = 0.0;
    kd.weights.beta = 0.0;
    kd.weights.gamma = 0.0;
    const TrainResult a = train_baseline_kd(ds, mc, kd);

    const Schedule nd = small_schedule(Mode::no_distill, 4);
    const TrainResult b = train_no_distill(ds, mc, nd);

    REQUIRE(a.student.has_value());
    REQUIRE(b.student.has_value());
    CHECK(bitwise_equal(a.student->params, b.student->params));

    // the student's label-loss and accuracy traces agree exactly
    for (const EpochRecord& ra : a.records) {
        if (ra.model != Role::student) continue;
        const EpochRecord* rb = nullptr;
        for (const EpochRecord& r : b.records)
            if (r.model == Role::student && r.epoch == ra.epoch) rb = &r;
        REQUIRE(rb != nullptr);
        CHECK(ra.train.l_c == rb->train.l_c);
        CHECK(ra.test.l_c == rb->test.l_c);
        CHECK(ra.train.accuracy == rb->train.accuracy);
        CHECK(ra.test.accuracy == rb->test.accuracy);
    }
}

TEST_CASE("pskd with k = epochs collapses to baseline_kd") {
    const Dataset ds = small_dataset();
    const ModelConfig mc = small_models();

    Schedule p = small_schedule(Mode::pskd, 4);
    p.k = 4;
    const TrainResult a = train_pskd(ds, mc, p);
    const TrainResult b = train_baseline_kd(ds, mc, small_schedule(Mode::baseline_kd, 4));

    CHECK(bitwise_equal(a.student->params, b.student->params));
    CHECK(bitwise_equal(a.teacher_sk->params, b.teacher_sk->params));
    CHECK(bitwise_equal(a.teacher_fu->params, b.teacher_fu->params));
    CHECK(a.final_test_accuracy(Role::student) == b.final_test_accuracy(Role::student));
}

TEST_CASE("teachers stay byte-identical under student training") {
    const Dataset ds = small_dataset();
    const ModelConfig mc = small_models();
    const Schedule s = small_schedule(Mode::baseline_kd, 3);

    const TrainResult pre = pretrain_teachers(ds, mc, s);
    const std::vector<Tensor> sk_before = pre.teacher_sk->params;
    const std::vector<Tensor> fu_before = pre.teacher_fu->params;
    const TrainResult r = train_student_against(ds, mc, s, *pre.teacher_sk, *pre.teacher_fu);
    CHECK(bitwise_equal(r.teacher_sk->params, sk_before));
    CHECK(bitwise_equal(r.teacher_fu->params, fu_before));
}

TEST_CASE("identical config and seed reproduce the records bit-exactly") {
    const Dataset ds = small_dataset();
    const ModelConfig mc = small_models();
    for (Mode mode : {Mode::no_distill, Mode::baseline_kd, Mode::pskd}) {
        Schedule s = small_schedule(mode, 3);
        s.k = 1;
        const TrainResult a = run_training(ds, mc, s);
        const TrainResult b = run_training(ds, mc, s);
        CHECK(records_equal(a.records, b.records));
        CHECK(bitwise_equal(a.student->params, b.student->params));
    }
}

TEST_CASE("every logged total recomposes from its logged components") {
    const Dataset ds = small_dataset();
    const ModelConfig mc = small_models();
    Schedule s = small_schedule(Mode::pskd, 4);
    s.k = 2;
    s.weights.alpha = 0.4;
    s.weights.beta = 0.9;
    s.weights.gamma = 0.01;
    const TrainResult r = train_pskd(ds, mc, s);
    for (const EpochRecord& rec : r.records) {
        for (const SplitRecord* sr : {&rec.train, &rec.test}) {
            CHECK(sr->l_kd ==
                  doctest::Approx(sr->l_c + s.weights.alpha * sr->l_k).epsilon(1e-6));
            CHECK(sr->l_total ==
                  doctest::Approx(sr->l_kd + s.weights.beta * sr->l_mk +
                                  s.weights.gamma * sr->l_s)
                      .epsilon(1e-6));
        }
    }
}

TEST_CASE("a zero-epoch budget returns freshly initialized teachers") {
    const Dataset ds = small_dataset();
    const Schedule s = small_schedule(Mode::baseline_kd, 0);
    const TrainResult pre = pretrain_teachers(ds, small_models(), s);
    REQUIRE(pre.teacher_sk.has_value());
    const EncoderSpec spec =
        EncoderSpec::for_role(Role::teacher_sk, ds.meta, {4, 6}, 3, 8);
    const Model fresh = build_model(spec, derive_seed(s.seed, "init-teacher_sk"));
    CHECK(bitwise_equal(pre.teacher_sk->params, fresh.params));
    // untrained accuracy hovers near chance
    CHECK(pre.final_test_accuracy(Role::teacher_sk) < 0.75);
}

TEST_CASE("non-finite data turns into a run error naming the epoch") {
    Dataset ds = small_dataset();
    ds.samples[0].accel.data[0] = std::nan("");
    const ModelConfig mc = small_models();
    try {
        train_no_distill(ds, mc, small_schedule(Mode::no_distill, 2));
        FAIL("expected a run error");
    } catch (const RunError& e) {
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    } catch (const NumericError& e) {
        // forward itself may flag the poisoned batch first
        CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
    }
}

TEST_CASE("grid search bookkeeping") {
    const Dataset ds = small_dataset();
    const ModelConfig mc = small_models();
    Schedule base = small_schedule(Mode::baseline_kd, 2);

    SUBCASE("eight cells, all populated") {
        std::vector<GridCell> grid;
        for (double a : {0.5, 1.0})
            for (double b : {0.5, 1.0})
                for (double g : {0.001, 0.002}) grid.push_back(GridCell{a, b, g});
        const auto outcomes = grid_search(ds, mc, base, grid, {base.seed});
        REQUIRE(outcomes.size() == 8);
        for (const auto& o : outcomes) {
            CHECK(o.status == "ok");
            CHECK(o.accs.size() == 1);
        }
        CHECK(best_cell(outcomes) >= 0);
    }
    SUBCASE("a cell reproduces a standalone run with the derived seed") {
        const std::vector<GridCell> grid{{1.0, 0.0, 0.0}};
        const auto outcomes = grid_search(ds, mc, base, grid, {base.seed});
        REQUIRE(outcomes.size() == 1);

        Schedule standalone = base;
        standalone.weights.alpha = 1.0;
        standalone.weights.beta = 0.0;
        standalone.weights.gamma = 0.0;
        standalone.seed = derive_seed(base.seed, 0);
        const TrainResult r = run_training(ds, mc, standalone);
        CHECK(outcomes[0].accs[0] == r.final_test_accuracy(Role::student));
        CHECK(outcomes[0].mean_acc == r.final_test_accuracy(Role::student));
    }
    SUBCASE("ties break lexicographically") {
        std::vector<CellOutcome> outcomes(2);
        outcomes[0].cell = GridCell{1.0, 0.5, 0.0};
        outcomes[1].cell = GridCell{0.5, 1.0, 0.0};
        for (auto& o : outcomes) {
            o.mean_acc = 0.9;
            o.accs = {0.9};
        }
        CHECK(best_cell(outcomes) == 1);
    }
}

TEST_CASE("teacher warmup extends the teacher budget") {
    const Dataset ds = small_dataset();
    const ModelConfig mc = small_models();
    Schedule s = small_schedule(Mode::pskd, 2);
    s.k = 1;
    s.teacher_warmup_epochs = 2;
    const TrainResult r = train_pskd(ds, mc, s);
    int sk_epochs = 0, student_epochs = 0;
    for (const EpochRecord& rec : r.records) {
        sk_epochs += rec.model == Role::teacher_sk;
        student_epochs += rec.model == Role::student;
    }
    CHECK(sk_epochs == 4);  // warmup + budget
    CHECK(student_epochs == 2);
}
