#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pskd/data.hpp"
#include "pskd/tape.hpp"
#include "pskd/tensor.hpp"

namespace pskd {

enum class Role : std::uint8_t { teacher_sk, teacher_fu, student };

const char* role_name(Role r);
Role role_from_name(const std::string& name);

// One trunk template for all three networks, with role-specific input
// widths: conv1d(k, same) -> ReLU -> conv1d(k) -> ReLU -> global average
// pool over time -> fc0(d_sem) -> ReLU -> fc1(num_classes). The joint /
// sensor axis is folded into channels, so teacher_sk consumes
// (c_sk*n_sk, t_sk), teacher_fu ((c_sk+c_ac)*n_sk, t_sk) and the student
// (c_ac*s_ac, t_ac).
struct EncoderSpec {
    Role role = Role::student;
    int in_channels = 0;
    int in_length = 0;
    std::vector<int> conv_widths{16, 32};
    int kernel_size = 5;
    int d_sem = 64;
    int num_classes = 0;

    void validate() const;
    std::int64_t param_count() const;

    static EncoderSpec for_role(Role r, const DatasetMeta& meta, std::vector<int> conv_widths,
                                int kernel_size, int d_sem);
};

// fc0 semantic features and fc1 logits for a batch.
struct ForwardOutput {
    Tensor h;  // (B, d_sem)
    Tensor z;  // (B, num_classes)
};

struct TapedForward {
    Value h;
    Value z;
};

struct Model {
    EncoderSpec spec;
    std::vector<Tensor> params;  // declaration order: conv w/b per layer, fc0 w/b, fc1 w/b
    std::uint64_t init_seed = 0;

    std::int64_t param_count() const;
};

// Fan-in-scaled uniform initialization, drawn through 32-bit floats so a
// fresh model survives the f32 checkpoint round trip bit-for-bit.
Model build_model(const EncoderSpec& spec, std::uint64_t seed);

// Inference-only forward; teacher outputs consumed by the student loss
// are produced this way.
ForwardOutput forward(const Model& m, const Tensor& batch);

// Recording forward: registers the model's parameters on the tape in
// declaration order, so backward() gradients line up with m.params.
TapedForward forward(const Model& m, const Tensor& batch, GradTape& tape);

// Checkpoint: "PSKD" magic, u32 format version, spec as embedded JSON,
// parameters as little-endian 32-bit floats in declaration order, then a
// 64-bit checksum footer over everything before it.
void save_model(const Model& m, const std::string& path);
Model load_model(const std::string& path);

// Assembles the role-appropriate input batch for the given samples.
Tensor make_batch(const Dataset& ds, const std::vector<int>& indices, Role role);

}  // namespace pskd
