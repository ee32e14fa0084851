#include "pskd/tape.hpp"

#include <algorithm>
#include <cmath>

#include "pskd/ops.hpp"

namespace pskd {

Value GradTape::push(Node n) {
    nodes_.push_back(std::move(n));
    return Value{static_cast<int>(nodes_.size()) - 1};
}

const GradTape::Node& GradTape::node(Value v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
        throw InternalError("tape: dangling value handle");
    return nodes_[static_cast<std::size_t>(v.id)];
}

const Tensor& GradTape::value(Value v) const { return node(v).val; }

Value GradTape::constant(Tensor t) {
    Node n;
    n.op = Op::kConst;
    n.val = std::move(t);
    return push(std::move(n));
}

Value GradTape::param(const Tensor& t) {
    Node n;
    n.op = Op::kParam;
    n.val = t;
    Value v = push(std::move(n));
    param_nodes_.push_back(v.id);
    return v;
}

Value GradTape::add(Value a, Value b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) throw ParamError("add: shape mismatch");
    Node n;
    n.op = Op::kAdd;
    n.parents = {a.id, b.id};
    n.val = ta;
    for (std::size_t i = 0; i < n.val.data.size(); ++i) n.val.data[i] += tb.data[i];
    return push(std::move(n));
}

Value GradTape::mul(Value a, Value b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) throw ParamError("mul: shape mismatch");
    Node n;
    n.op = Op::kMul;
    n.parents = {a.id, b.id};
    n.val = ta;
    for (std::size_t i = 0; i < n.val.data.size(); ++i) n.val.data[i] *= tb.data[i];
    return push(std::move(n));
}

Value GradTape::scale(Value a, Scalar c) {
    Node n;
    n.op = Op::kScale;
    n.parents = {a.id};
    n.c = c;
    n.val = value(a);
    for (Scalar& v : n.val.data) v *= c;
    return push(std::move(n));
}

Value GradTape::sum(Value a) {
    Node n;
    n.op = Op::kSum;
    n.parents = {a.id};
    Scalar s = 0.0;
    for (Scalar v : value(a).data) s += v;
    n.val = Tensor::scalar(s);
    return push(std::move(n));
}

Value GradTape::relu(Value a) {
    Node n;
    n.op = Op::kRelu;
    n.parents = {a.id};
    n.val = pskd::relu(value(a));
    return push(std::move(n));
}

Value GradTape::conv1d_same(Value x, Value w, Value b) {
    Node n;
    n.op = Op::kConv1d;
    n.parents = {x.id, w.id, b.id};
    n.val = pskd::conv1d_same(value(x), value(w), value(b));
    return push(std::move(n));
}

Value GradTape::global_avg_pool_time(Value x) {
    Node n;
    n.op = Op::kGap;
    n.parents = {x.id};
    n.val = pskd::global_avg_pool_time(value(x));
    return push(std::move(n));
}

Value GradTape::linear(Value x, Value w, Value b) {
    Node n;
    n.op = Op::kLinear;
    n.parents = {x.id, w.id, b.id};
    n.val = pskd::linear(value(x), value(w), value(b));
    return push(std::move(n));
}

Value GradTape::softmax_temp(Value logits, Scalar temperature) {
    Node n;
    n.op = Op::kSoftmaxTemp;
    n.parents = {logits.id};
    n.c = temperature;
    n.val = pskd::softmax_temp(value(logits), temperature);
    return push(std::move(n));
}

Value GradTape::nll_probs(Value probs, std::vector<int> labels) {
    Node n;
    n.op = Op::kNllProbs;
    n.parents = {probs.id};
    n.labels = std::move(labels);
    n.val = Tensor::scalar(pskd::cross_entropy(value(probs), n.labels));
    return push(std::move(n));
}

Value GradTape::kl_const_p(Tensor p, Value q) {
    Node n;
    n.op = Op::kKlConstP;
    n.parents = {q.id};
    n.val = Tensor::scalar(pskd::kl_div(p, value(q)));
    n.aux = std::move(p);
    return push(std::move(n));
}

Value GradTape::soft_ce_const(Tensor targets, Value probs) {
    const Tensor& pr = value(probs);
    if (targets.shape != pr.shape) throw ParamError("soft_ce_const: shape mismatch");
    Node n;
    n.op = Op::kSoftCeConst;
    n.parents = {probs.id};
    const int rows = pr.dim(0), cols = pr.dim(1);
    Scalar total = 0.0;
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
            Scalar m = targets.at(i, j);
            if (m == 0.0) continue;  // rows gated to zero contribute exactly 0
            total += -m * std::log(std::max(pr.at(i, j), kProbEps));
        }
    n.val = Tensor::scalar(total / rows);
    ensure_finite(n.val, "soft_ce_const");
    n.aux = std::move(targets);
    return push(std::move(n));
}

Value GradTape::sq_dist_const(Tensor ref, Value h) {
    const Tensor& th = value(h);
    if (ref.shape != th.shape) throw ParamError("sq_dist_const: shape mismatch");
    Node n;
    n.op = Op::kSqDistConst;
    n.parents = {h.id};
    const int rows = th.dim(0);
    Scalar total = 0.0;
    for (std::size_t i = 0; i < th.data.size(); ++i) {
        Scalar d = th.data[i] - ref.data[i];
        total += d * d;
    }
    n.val = Tensor::scalar(total / rows);
    ensure_finite(n.val, "sq_dist_const");
    n.aux = std::move(ref);
    return push(std::move(n));
}

Value GradTape::weighted_sum(std::vector<std::pair<Scalar, Value>> terms) {
    Node n;
    n.op = Op::kWeightedSum;
    Scalar total = 0.0;
    for (auto& [c, v] : terms) {
        n.parents.push_back(v.id);
        n.coeffs.push_back(c);
        total += c * scalar_value(v);
    }
    n.val = Tensor::scalar(total);
    return push(std::move(n));
}

std::vector<Tensor> GradTape::backward(Value loss) const {
    const Node& top = node(loss);
    if (!top.val.is_scalar()) throw ParamError("backward: loss must be a scalar node");

    // One gradient slot per node, allocated on first touch.
    std::vector<Tensor> grads(nodes_.size());
    std::vector<bool> touched(nodes_.size(), false);
    auto grad_of = [&](int id) -> Tensor& {
        if (!touched[static_cast<std::size_t>(id)]) {
            grads[static_cast<std::size_t>(id)] =
                Tensor::zeros(nodes_[static_cast<std::size_t>(id)].val.shape);
            touched[static_cast<std::size_t>(id)] = true;
        }
        return grads[static_cast<std::size_t>(id)];
    };

    grad_of(loss.id).data[0] = 1.0;

    for (int id = loss.id; id >= 0; --id) {
        if (!touched[static_cast<std::size_t>(id)]) continue;
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        const Tensor& g = grads[static_cast<std::size_t>(id)];
        switch (n.op) {
            case Op::kConst:
            case Op::kParam:
                break;
            case Op::kAdd: {
                for (int p : n.parents) {
                    Tensor& pg = grad_of(p);
                    for (std::size_t i = 0; i < g.data.size(); ++i) pg.data[i] += g.data[i];
                }
                break;
            }
            case Op::kMul: {
                const Tensor& a = nodes_[static_cast<std::size_t>(n.parents[0])].val;
                const Tensor& b = nodes_[static_cast<std::size_t>(n.parents[1])].val;
                Tensor& ga = grad_of(n.parents[0]);
                Tensor& gb = grad_of(n.parents[1]);
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                    ga.data[i] += g.data[i] * b.data[i];
                    gb.data[i] += g.data[i] * a.data[i];
                }
                break;
            }
            case Op::kScale: {
                Tensor& pg = grad_of(n.parents[0]);
                for (std::size_t i = 0; i < g.data.size(); ++i) pg.data[i] += n.c * g.data[i];
                break;
            }
            case Op::kSum: {
                Tensor& pg = grad_of(n.parents[0]);
                const Scalar gs = g.data[0];
                for (Scalar& v : pg.data) v += gs;
                break;
            }
            case Op::kRelu: {
                const Tensor& x = nodes_[static_cast<std::size_t>(n.parents[0])].val;
                Tensor& pg = grad_of(n.parents[0]);
                const Scalar k = corrupt_backward_ ? 1.01 : 1.0;
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    if (x.data[i] > 0.0) pg.data[i] += k * g.data[i];
                break;
            }
            case Op::kConv1d: {
                const Tensor& x = nodes_[static_cast<std::size_t>(n.parents[0])].val;
                const Tensor& w = nodes_[static_cast<std::size_t>(n.parents[1])].val;
                Tensor& gx = grad_of(n.parents[0]);
                Tensor& gw = grad_of(n.parents[1]);
                Tensor& gb = grad_of(n.parents[2]);
                const int B = x.dim(0), cin = x.dim(1), T = x.dim(2);
                const int cout = w.dim(0), k = w.dim(2), pad = k / 2;
                for (int b = 0; b < B; ++b) {
                    for (int co = 0; co < cout; ++co) {
                        const Scalar* grow = &g.data[(static_cast<std::size_t>(b) * cout + co) * T];
                        Scalar gsum = 0.0;
                        for (int t = 0; t < T; ++t) gsum += grow[t];
                        gb.data[static_cast<std::size_t>(co)] += gsum;
                        for (int ci = 0; ci < cin; ++ci) {
                            const Scalar* xrow = &x.data[(static_cast<std::size_t>(b) * cin + ci) * T];
                            const Scalar* wrow = &w.data[(static_cast<std::size_t>(co) * cin + ci) * k];
                            Scalar* gxrow = &gx.data[(static_cast<std::size_t>(b) * cin + ci) * T];
                            Scalar* gwrow = &gw.data[(static_cast<std::size_t>(co) * cin + ci) * k];
                            for (int kk = 0; kk < k; ++kk) {
                                const int off = kk - pad;
                                const int t0 = std::max(0, -off);
                                const int t1 = std::min(T, T - off);
                                Scalar acc = 0.0;
                                const Scalar wv = wrow[kk];
                                for (int t = t0; t < t1; ++t) {
                                    acc += grow[t] * xrow[t + off];
                                    gxrow[t + off] += wv * grow[t];
                                }
                                gwrow[kk] += acc;
                            }
                        }
                    }
                }
                break;
            }
            case Op::kGap: {
                const Tensor& x = nodes_[static_cast<std::size_t>(n.parents[0])].val;
                Tensor& pg = grad_of(n.parents[0]);
                const int B = x.dim(0), C = x.dim(1), T = x.dim(2);
                for (int b = 0; b < B; ++b)
                    for (int c = 0; c < C; ++c) {
                        const Scalar gv = g.at(b, c) / T;
                        Scalar* row = &pg.data[(static_cast<std::size_t>(b) * C + c) * T];
                        for (int t = 0; t < T; ++t) row[t] += gv;
                    }
                break;
            }
            case Op::kLinear: {
                const Tensor& x = nodes_[static_cast<std::size_t>(n.parents[0])].val;
                const Tensor& w = nodes_[static_cast<std::size_t>(n.parents[1])].val;
                Tensor& gx = grad_of(n.parents[0]);
                Tensor& gw = grad_of(n.parents[1]);
                Tensor& gb = grad_of(n.parents[2]);
                const int B = x.dim(0), D = x.dim(1), E = w.dim(1);
                for (int b = 0; b < B; ++b) {
                    const Scalar* grow = &g.data[static_cast<std::size_t>(b) * E];
                    const Scalar* xrow = &x.data[static_cast<std::size_t>(b) * D];
                    for (int e = 0; e < E; ++e) gb.data[static_cast<std::size_t>(e)] += grow[e];
                    for (int d = 0; d < D; ++d) {
                        const Scalar* wrow = &w.data[static_cast<std::size_t>(d) * E];
                        Scalar* gwrow = &gw.data[static_cast<std::size_t>(d) * E];
                        Scalar acc = 0.0;
                        const Scalar xv = xrow[d];
                        for (int e = 0; e < E; ++e) {
                            acc += grow[e] * wrow[e];
                            gwrow[e] += xv * grow[e];
                        }
                        gx.data[static_cast<std::size_t>(b) * D + d] += acc;
                    }
                }
                break;
            }
            case Op::kSoftmaxTemp: {
                // dL/dz_j = p_j (g_j - sum_i g_i p_i) / T, per row.
                const Tensor& p = n.val;
                Tensor& pg = grad_of(n.parents[0]);
                const int rows = p.dim(0), cols = p.dim(1);
                for (int i = 0; i < rows; ++i) {
                    Scalar dot = 0.0;
                    for (int j = 0; j < cols; ++j) dot += g.at(i, j) * p.at(i, j);
                    for (int j = 0; j < cols; ++j)
                        pg.at(i, j) += p.at(i, j) * (g.at(i, j) - dot) / n.c;
                }
                break;
            }
            case Op::kNllProbs: {
                const Tensor& p = nodes_[static_cast<std::size_t>(n.parents[0])].val;
                Tensor& pg = grad_of(n.parents[0]);
                const int rows = p.dim(0);
                const Scalar gs = g.data[0];
                for (int i = 0; i < rows; ++i) {
                    const int y = n.labels[static_cast<std::size_t>(i)];
                    const Scalar pv = p.at(i, y);
                    if (pv > kProbEps) pg.at(i, y) += -gs / (rows * pv);
                }
                break;
            }
            case Op::kKlConstP: {
                const Tensor& q = nodes_[static_cast<std::size_t>(n.parents[0])].val;
                Tensor& pg = grad_of(n.parents[0]);
                const int rows = q.dim(0), cols = q.dim(1);
                const Scalar gs = g.data[0];
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < cols; ++j) {
                        const Scalar pv = n.aux.at(i, j);
                        const Scalar qv = q.at(i, j);
                        if (pv > 0.0 && qv > kProbEps) pg.at(i, j) += -gs * pv / (rows * qv);
                    }
                break;
            }
            case Op::kSoftCeConst: {
                const Tensor& p = nodes_[static_cast<std::size_t>(n.parents[0])].val;
                Tensor& pg = grad_of(n.parents[0]);
                const int rows = p.dim(0), cols = p.dim(1);
                const Scalar gs = g.data[0];
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < cols; ++j) {
                        const Scalar m = n.aux.at(i, j);
                        const Scalar pv = p.at(i, j);
                        if (m != 0.0 && pv > kProbEps) pg.at(i, j) += -gs * m / (rows * pv);
                    }
                break;
            }
            case Op::kSqDistConst: {
                const Tensor& h = nodes_[static_cast<std::size_t>(n.parents[0])].val;
                Tensor& pg = grad_of(n.parents[0]);
                const int rows = h.dim(0);
                const Scalar gs = g.data[0];
                for (std::size_t i = 0; i < h.data.size(); ++i)
                    pg.data[i] += gs * 2.0 * (h.data[i] - n.aux.data[i]) / rows;
                break;
            }
            case Op::kWeightedSum: {
                const Scalar gs = g.data[0];
                for (std::size_t i = 0; i < n.parents.size(); ++i)
                    grad_of(n.parents[i]).data[0] += gs * n.coeffs[i];
                break;
            }
            default:
                throw InternalError("backward: op without a backward rule");
        }
    }

    std::vector<Tensor> result;
    result.reserve(param_nodes_.size());
    for (int pid : param_nodes_) {
        if (touched[static_cast<std::size_t>(pid)])
            result.push_back(std::move(grads[static_cast<std::size_t>(pid)]));
        else
            result.push_back(Tensor::zeros(nodes_[static_cast<std::size_t>(pid)].val.shape));
    }
    return result;
}

}  // namespace pskd
