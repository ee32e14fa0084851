#include "pskd/losses.hpp"

#include <cmath>

namespace pskd {

void LossWeights::validate() const {
    if (alpha < 0.0 || beta < 0.0 || gamma < 0.0)
        throw ParamError("loss weights: alpha, beta, gamma must be >= 0");
    if (!(temperature > 0.0)) throw ParamError("loss weights: temperature must be positive");
}

void TeacherBundle::validate() const {
    if (teachers.empty()) throw ParamError("teacher bundle: need at least one teacher");
    const Tensor& h0 = teachers[0].h;
    const Tensor& z0 = teachers[0].z;
    for (const ForwardOutput& t : teachers) {
        if (t.h.shape != h0.shape)
            throw ParamError("teacher bundle: inconsistent feature shapes across teachers");
        if (t.z.shape != z0.shape)
            throw ParamError("teacher bundle: inconsistent logit shapes across teachers");
        if (t.h.dim(0) != t.z.dim(0))
            throw ParamError("teacher bundle: batch size differs between features and logits");
    }
}

Tensor teacher_ce(const TeacherBundle& teachers, const std::vector<int>& labels) {
    teachers.validate();
    const int K = teachers.count();
    const int B = teachers.teachers[0].z.dim(0);
    const int C = teachers.teachers[0].z.dim(1);
    if (static_cast<int>(labels.size()) != B) throw ParamError("teacher_ce: label count mismatch");

    Tensor ce = Tensor::zeros({B, K});
    for (int k = 0; k < K; ++k) {
        const Tensor probs = softmax(teachers.teachers[static_cast<std::size_t>(k)].z);
        for (int b = 0; b < B; ++b) {
            const int y = labels[static_cast<std::size_t>(b)];
            if (y < 0 || y >= C) throw ParamError("teacher_ce: label out of range");
            ce.at(b, k) = -std::log(std::max(probs.at(b, y), kProbEps));
        }
    }
    return ce;
}

Tensor adaptive_weights(const Tensor& ce, const TeacherBundle& teachers,
                        const std::vector<int>& labels, const LossOptions& opt) {
    teachers.validate();
    const int K = teachers.count();
    const int B = teachers.teachers[0].z.dim(0);
    const int C = teachers.teachers[0].z.dim(1);
    if (ce.rank() != 2 || ce.dim(0) != B || ce.dim(1) != K)
        throw ParamError("adaptive_weights: ce must be (B,K)");
    if (static_cast<int>(labels.size()) != B) throw ParamError("adaptive_weights: label count mismatch");

    Tensor omega = Tensor::zeros({B, K});
    std::vector<int> eligible;
    eligible.reserve(static_cast<std::size_t>(K));
    for (int b = 0; b < B; ++b) {
        eligible.clear();
        for (int k = 0; k < K; ++k) {
            bool ok;
            if (opt.gate_tau) {
                ok = ce.at(b, k) < *opt.gate_tau;
            } else {
                // argmax-correctness, ties broken by lowest class index
                const Tensor& z = teachers.teachers[static_cast<std::size_t>(k)].z;
                int arg = 0;
                for (int c = 1; c < C; ++c)
                    if (z.at(b, c) > z.at(b, arg)) arg = c;
                ok = arg == labels[static_cast<std::size_t>(b)];
            }
            if (ok) eligible.push_back(k);
        }

        if (eligible.empty()) continue;  // row stays exactly zero
        if (eligible.size() == 1) {
            omega.at(b, eligible[0]) = 1.0;
            continue;
        }
        // Confidence shares among the survivors. A low cross-entropy
        // teacher has a small exp-share and therefore a large weight.
        Scalar denom = 0.0;
        for (int k : eligible) denom += std::exp(ce.at(b, k));
        Scalar raw_sum = 0.0;
        std::vector<Scalar> raw(eligible.size());
        for (std::size_t i = 0; i < eligible.size(); ++i) {
            const Scalar share = std::exp(ce.at(b, eligible[i])) / denom;
            raw[i] = (1.0 / (K - 1)) * (1.0 - share);
            raw_sum += raw[i];
        }
        // Renormalize so each surviving row sums to exactly 1: the last
        // survivor absorbs the rounding residue.
        Scalar acc = 0.0;
        for (std::size_t i = 0; i + 1 < eligible.size(); ++i) {
            const Scalar w = raw[i] / raw_sum;
            omega.at(b, eligible[i]) = w;
            acc += w;
        }
        omega.at(b, eligible.back()) = 1.0 - acc;
    }
    return omega;
}

namespace {

struct KdNodes {
    Value p1;  // softmax(Z_S)
    Value l_c;
    Value l_k;
    Value l_kd;
};

KdNodes build_kd_nodes(GradTape& tape, const TapedForward& student, const TeacherBundle& teachers,
                       const std::vector<int>& labels, const LossWeights& w,
                       const LossOptions& opt) {
    const int K = teachers.count();
    KdNodes out;
    out.p1 = tape.softmax_temp(student.z, 1.0);
    out.l_c = tape.nll_probs(out.p1, labels);

    const Value p_temp = tape.softmax_temp(student.z, w.temperature);
    std::vector<std::pair<Scalar, Value>> kl_terms;
    kl_terms.reserve(static_cast<std::size_t>(K));
    for (const ForwardOutput& t : teachers.teachers)
        kl_terms.emplace_back(1.0 / K, tape.kl_const_p(softmax_temp(t.z, w.temperature), p_temp));
    out.l_k = tape.weighted_sum(std::move(kl_terms));

    Scalar alpha_eff = w.alpha;
    if (opt.kd_t_squared) alpha_eff *= w.temperature * w.temperature;
    out.l_kd = tape.weighted_sum({{1.0, out.l_c}, {alpha_eff, out.l_k}});
    return out;
}

// Aggregated soft-target matrix M[b,c] = sum_k omega[b,k] * target_k[b,c].
Tensor aggregate_targets(const Tensor& omega, const TeacherBundle& teachers, Scalar temperature,
                         const LossOptions& opt) {
    const int K = teachers.count();
    const int B = teachers.teachers[0].z.dim(0);
    const int C = teachers.teachers[0].z.dim(1);
    Tensor m = Tensor::zeros({B, C});
    for (int k = 0; k < K; ++k) {
        const Tensor target = opt.mk_raw_logits
                                  ? teachers.teachers[static_cast<std::size_t>(k)].z
                                  : softmax_temp(teachers.teachers[static_cast<std::size_t>(k)].z,
                                                 temperature);
        for (int b = 0; b < B; ++b) {
            const Scalar wk = omega.at(b, k);
            if (wk == 0.0) continue;
            for (int c = 0; c < C; ++c) m.at(b, c) += wk * target.at(b, c);
        }
    }
    return m;
}

Value build_mk_node(GradTape& tape, const Tensor& omega, const TeacherBundle& teachers,
                    Value student_probs, Scalar temperature, const LossOptions& opt) {
    return tape.soft_ce_const(aggregate_targets(omega, teachers, temperature, opt), student_probs);
}

Value build_sem_node(GradTape& tape, const TeacherBundle& teachers, Value student_h) {
    const int K = teachers.count();
    std::vector<std::pair<Scalar, Value>> terms;
    terms.reserve(static_cast<std::size_t>(K));
    for (const ForwardOutput& t : teachers.teachers) {
        if (t.h.shape != tape.value(student_h).shape)
            throw ParamError("semantic loss: student and teacher d_sem differ");
        terms.emplace_back(1.0 / K, tape.sq_dist_const(t.h, student_h));
    }
    return tape.weighted_sum(std::move(terms));
}

void check_omega(const Tensor& omega) {
    if (omega.rank() != 2) throw ParamError("omega must be (B,K)");
    for (int b = 0; b < omega.dim(0); ++b) {
        Scalar sum = 0.0;
        for (int k = 0; k < omega.dim(1); ++k) {
            const Scalar v = omega.at(b, k);
            if (v < 0.0 || v > 1.0) throw ParamError("omega entries must lie in [0,1]");
            sum += v;
        }
        if (!(sum == 0.0 || std::abs(sum - 1.0) < 1e-9))
            throw ParamError("omega rows must sum to 1 or 0");
    }
}

}  // namespace

TapedLoss build_total_loss(GradTape& tape, const TapedForward& student,
                           const TeacherBundle& teachers, const std::vector<int>& labels,
                           const LossWeights& w, const LossOptions& opt) {
    w.validate();
    teachers.validate();

    const KdNodes kd = build_kd_nodes(tape, student, teachers, labels, w, opt);

    TapedLoss out;
    out.breakdown.ce = teacher_ce(teachers, labels);
    out.breakdown.omega = adaptive_weights(out.breakdown.ce, teachers, labels, opt);

    out.l_c = kd.l_c;
    out.l_k = kd.l_k;
    out.l_kd = kd.l_kd;
    out.l_mk = build_mk_node(tape, out.breakdown.omega, teachers, kd.p1, w.temperature, opt);
    out.l_s = build_sem_node(tape, teachers, student.h);
    out.total = tape.weighted_sum({{1.0, kd.l_kd}, {w.beta, out.l_mk}, {w.gamma, out.l_s}});

    out.breakdown.l_c = tape.scalar_value(kd.l_c);
    out.breakdown.l_k = tape.scalar_value(kd.l_k);
    out.breakdown.l_kd = tape.scalar_value(kd.l_kd);
    out.breakdown.l_mk = tape.scalar_value(out.l_mk);
    out.breakdown.l_s = tape.scalar_value(out.l_s);
    out.breakdown.total = tape.scalar_value(out.total);
    return out;
}

Value build_ce_loss(GradTape& tape, const TapedForward& out, const std::vector<int>& labels) {
    return tape.nll_probs(tape.softmax_temp(out.z, 1.0), labels);
}

KdTerms kd_loss(const ForwardOutput& student, const TeacherBundle& teachers,
                const std::vector<int>& labels, const LossWeights& w, const LossOptions& opt) {
    w.validate();
    teachers.validate();
    GradTape tape;
    TapedForward s{tape.constant(student.h), tape.constant(student.z)};
    const KdNodes kd = build_kd_nodes(tape, s, teachers, labels, w, opt);
    return KdTerms{tape.scalar_value(kd.l_c), tape.scalar_value(kd.l_k), tape.scalar_value(kd.l_kd)};
}

Scalar multi_teacher_loss(const Tensor& omega, const TeacherBundle& teachers,
                          const ForwardOutput& student, Scalar temperature,
                          const LossOptions& opt) {
    teachers.validate();
    check_omega(omega);
    GradTape tape;
    const Value probs = tape.softmax_temp(tape.constant(student.z), 1.0);
    return tape.scalar_value(build_mk_node(tape, omega, teachers, probs, temperature, opt));
}

Scalar semantic_loss(const ForwardOutput& student, const TeacherBundle& teachers) {
    teachers.validate();
    GradTape tape;
    return tape.scalar_value(build_sem_node(tape, teachers, tape.constant(student.h)));
}

LossBreakdown total_loss(const ForwardOutput& student, const TeacherBundle& teachers,
                         const std::vector<int>& labels, const LossWeights& w,
                         const LossOptions& opt) {
    GradTape tape;
    TapedForward s{tape.constant(student.h), tape.constant(student.z)};
    return build_total_loss(tape, s, teachers, labels, w, opt).breakdown;
}

Scalar plain_st_loss(const ForwardOutput& student, const ForwardOutput& teacher,
                     const std::vector<int>& labels, Scalar alpha, Scalar temperature) {
    // Written out directly so the equivalence with kd_loss(K=1) is a real
    // cross-check between two code paths.
    const Scalar l_c = cross_entropy(softmax(student.z), labels);
    const Scalar l_k =
        kl_div(softmax_temp(teacher.z, temperature), softmax_temp(student.z, temperature));
    return l_c + alpha * l_k;
}

}  // namespace pskd
