#include "pskd/ops.hpp"

#include <algorithm>
#include <cmath>

namespace pskd {

static void require_matrix(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw ParamError(std::string(op) + ": expected a (B,C) tensor, got " + shape_str(t.shape));
}

Tensor softmax_temp(const Tensor& logits, Scalar temperature) {
    require_matrix(logits, "softmax_temp");
    if (!(temperature > 0.0)) throw ParamError("softmax_temp: temperature must be positive");
    ensure_finite(logits, "softmax_temp(input)");

    const int rows = logits.dim(0), cols = logits.dim(1);
    Tensor out = Tensor::zeros({rows, cols});
    for (int i = 0; i < rows; ++i) {
        Scalar mx = logits.at(i, 0) / temperature;
        for (int j = 1; j < cols; ++j) mx = std::max(mx, logits.at(i, j) / temperature);
        Scalar sum = 0.0;
        for (int j = 0; j < cols; ++j) {
            Scalar e = std::exp(logits.at(i, j) / temperature - mx);
            out.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < cols; ++j) out.at(i, j) /= sum;
    }
    ensure_finite(out, "softmax_temp");
    return out;
}

bool rows_are_probabilities(const Tensor& t, Scalar tol) {
    if (t.rank() != 2) return false;
    for (int i = 0; i < t.dim(0); ++i) {
        Scalar sum = 0.0;
        for (int j = 0; j < t.dim(1); ++j) {
            Scalar v = t.at(i, j);
            if (!(v >= 0.0)) return false;
            sum += v;
        }
        if (std::abs(sum - 1.0) > tol) return false;
    }
    return true;
}

Scalar kl_div(const Tensor& p, const Tensor& q) {
    require_matrix(p, "kl_div");
    if (p.shape != q.shape)
        throw ParamError("kl_div: shape mismatch " + shape_str(p.shape) + " vs " + shape_str(q.shape));
    if (!rows_are_probabilities(p) || !rows_are_probabilities(q))
        throw ParamError("kl_div: rows must be probability vectors");
    const int rows = p.dim(0), cols = p.dim(1);
    Scalar total = 0.0;
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            Scalar pv = p.at(i, j);
            if (pv <= 0.0) continue;  // 0*ln(0/q) = 0
            Scalar qv = std::max(q.at(i, j), kProbEps);
            total += pv * std::log(pv / qv);
        }
    }
    Scalar result = total / rows;
    if (!std::isfinite(result)) throw NumericError("kl_div: non-finite result");
    return result;
}

Scalar cross_entropy(const Tensor& probs, const std::vector<int>& labels) {
    require_matrix(probs, "cross_entropy");
    if (!rows_are_probabilities(probs))
        throw ParamError("cross_entropy: rows must be probability vectors");
    const int rows = probs.dim(0), cols = probs.dim(1);
    if (static_cast<int>(labels.size()) != rows)
        throw ParamError("cross_entropy: got " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
    Scalar total = 0.0;
    for (int i = 0; i < rows; ++i) {
        int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= cols)
            throw ParamError("cross_entropy: label " + std::to_string(y) + " out of range [0," +
                             std::to_string(cols) + ")");
        total += -std::log(std::max(probs.at(i, y), kProbEps));
    }
    Scalar result = total / rows;
    if (!std::isfinite(result)) throw NumericError("cross_entropy: non-finite result");
    return result;
}

Tensor conv1d_same(const Tensor& x, const Tensor& w, const Tensor& bias) {
    if (x.rank() != 3) throw ParamError("conv1d_same: input must be (B,Cin,T), got " + shape_str(x.shape));
    if (w.rank() != 3) throw ParamError("conv1d_same: kernel must be (Cout,Cin,k), got " + shape_str(w.shape));
    const int B = x.dim(0), cin = x.dim(1), T = x.dim(2);
    const int cout = w.dim(0), k = w.dim(2);
    if (w.dim(1) != cin)
        throw ParamError("conv1d_same: kernel expects " + std::to_string(w.dim(1)) +
                         " input channels, batch has " + std::to_string(cin));
    if (bias.rank() != 1 || bias.dim(0) != cout) throw ParamError("conv1d_same: bias shape mismatch");
    const int pad = k / 2;

    Tensor y = Tensor::zeros({B, cout, T});
    for (int b = 0; b < B; ++b) {
        for (int co = 0; co < cout; ++co) {
            Scalar* yrow = &y.data[(static_cast<std::size_t>(b) * cout + co) * T];
            const Scalar bv = bias.data[static_cast<std::size_t>(co)];
            for (int t = 0; t < T; ++t) yrow[t] = bv;
            for (int ci = 0; ci < cin; ++ci) {
                const Scalar* xrow = &x.data[(static_cast<std::size_t>(b) * cin + ci) * T];
                const Scalar* wrow = &w.data[(static_cast<std::size_t>(co) * cin + ci) * k];
                for (int kk = 0; kk < k; ++kk) {
                    const Scalar c = wrow[kk];
                    const int off = kk - pad;
                    const int t0 = std::max(0, -off);
                    const int t1 = std::min(T, T - off);
                    for (int t = t0; t < t1; ++t) yrow[t] += c * xrow[t + off];
                }
            }
        }
    }
    ensure_finite(y, "conv1d_same");
    return y;
}

Tensor relu(const Tensor& x) {
    ensure_finite(x, "relu(input)");  // NaN would silently launder to 0 below
    Tensor y = x;
    for (Scalar& v : y.data) v = v > 0.0 ? v : 0.0;
    return y;
}

Tensor global_avg_pool_time(const Tensor& x) {
    if (x.rank() != 3) throw ParamError("global_avg_pool_time: input must be (B,C,T)");
    const int B = x.dim(0), C = x.dim(1), T = x.dim(2);
    Tensor y = Tensor::zeros({B, C});
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
            const Scalar* row = &x.data[(static_cast<std::size_t>(b) * C + c) * T];
            Scalar s = 0.0;
            for (int t = 0; t < T; ++t) s += row[t];
            y.at(b, c) = s / T;
        }
    }
    ensure_finite(y, "global_avg_pool_time");
    return y;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    if (x.rank() != 2 || w.rank() != 2) throw ParamError("linear: expected (B,D) x (D,E)");
    const int B = x.dim(0), D = x.dim(1), E = w.dim(1);
    if (w.dim(0) != D)
        throw ParamError("linear: weight expects " + std::to_string(w.dim(0)) + " inputs, batch has " +
                         std::to_string(D));
    if (bias.rank() != 1 || bias.dim(0) != E) throw ParamError("linear: bias shape mismatch");

    Tensor y = Tensor::zeros({B, E});
    for (int b = 0; b < B; ++b) {
        Scalar* yrow = &y.data[static_cast<std::size_t>(b) * E];
        for (int e = 0; e < E; ++e) yrow[e] = bias.data[static_cast<std::size_t>(e)];
        const Scalar* xrow = &x.data[static_cast<std::size_t>(b) * D];
        for (int d = 0; d < D; ++d) {
            const Scalar xv = xrow[d];
            const Scalar* wrow = &w.data[static_cast<std::size_t>(d) * E];
            for (int e = 0; e < E; ++e) yrow[e] += xv * wrow[e];
        }
    }
    ensure_finite(y, "linear");
    return y;
}

}  // namespace pskd
