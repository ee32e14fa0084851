#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "pskd/errors.hpp"

namespace pskd {

using Scalar = double;

// Dense row-major n-dimensional array. The universal value type of the
// engine; everything (sequences, batches, parameters, gradients) is one
// of these. 64-bit storage throughout; checkpoints narrow to 32-bit on
// disk, and training may round parameters to 32-bit via config.
struct Tensor {
    std::vector<int> shape;
    std::vector<Scalar> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<Scalar> d);

    static Tensor zeros(std::vector<int> s);
    static Tensor full(std::vector<int> s, Scalar v);
    static Tensor scalar(Scalar v);

    int rank() const { return static_cast<int>(shape.size()); }
    std::int64_t numel() const;
    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool is_scalar() const { return numel() == 1; }
    Scalar scalar_value() const;
    bool all_finite() const;

    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    // 2-D / 3-D accessors for the common layouts (rows x cols, B x C x T).
    Scalar& at(int i, int j) { return data[static_cast<std::size_t>(i) * dim(1) + j]; }
    Scalar at(int i, int j) const { return data[static_cast<std::size_t>(i) * dim(1) + j]; }
    Scalar& at(int i, int j, int k) {
        return data[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
    }
    Scalar at(int i, int j, int k) const {
        return data[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
    }
};

std::int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Raises NumericError naming `op` if any entry is NaN or infinite.
void ensure_finite(const Tensor& t, const char* op);

bool bitwise_equal(const Tensor& a, const Tensor& b);
bool bitwise_equal(const std::vector<Tensor>& a, const std::vector<Tensor>& b);

}  // namespace pskd
