#include "pskd/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace pskd {

std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ParamError("tensor shape entries must be positive, got " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

Tensor::Tensor(std::vector<int> s, std::vector<Scalar> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<std::int64_t>(data.size()) != shape_numel(shape))
        throw ParamError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
}

Tensor Tensor::zeros(std::vector<int> s) {
    auto n = shape_numel(s);
    Tensor t;
    t.shape = std::move(s);
    t.data.assign(static_cast<std::size_t>(n), 0.0);
    return t;
}

Tensor Tensor::full(std::vector<int> s, Scalar v) {
    auto n = shape_numel(s);
    Tensor t;
    t.shape = std::move(s);
    t.data.assign(static_cast<std::size_t>(n), v);
    return t;
}

Tensor Tensor::scalar(Scalar v) {
    Tensor t;
    t.shape = {1};
    t.data = {v};
    return t;
}

std::int64_t Tensor::numel() const {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

Scalar Tensor::scalar_value() const {
    if (!is_scalar()) throw ParamError("expected a scalar tensor, got shape " + shape_str(shape));
    return data[0];
}

bool Tensor::all_finite() const {
    for (Scalar v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

void ensure_finite(const Tensor& t, const char* op) {
    if (!t.all_finite()) throw NumericError(std::string(op) + ": non-finite value produced");
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) return false;
    if (a.data.size() != b.data.size()) return false;
    return a.data.empty() ||
           std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(Scalar)) == 0;
}

bool bitwise_equal(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!bitwise_equal(a[i], b[i])) return false;
    return true;
}

}  // namespace pskd
