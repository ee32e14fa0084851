#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "pskd/tensor.hpp"

namespace pskd {

// Handle to a value recorded on a GradTape.
struct Value {
    int id = -1;
};

// Reverse-mode gradient tape. Operations append nodes (op kind, parent
// refs, values needed for backward); the graph is acyclic by
// construction since parents always precede children. backward() walks
// the nodes in reverse and returns one gradient per registered
// parameter, in registration order.
//
// Tensors entering through constant() are treated as constants: no
// gradient flows into them. Teacher outputs enter the student loss this
// way.
class GradTape {
  public:
    // Leaves.
    Value constant(Tensor t);
    Value param(const Tensor& t);

    // Elementwise / reductions.
    Value add(Value a, Value b);
    Value mul(Value a, Value b);
    Value scale(Value a, Scalar c);
    Value sum(Value a);                       // -> scalar
    Value relu(Value a);

    // Network layers.
    Value conv1d_same(Value x, Value w, Value b);
    Value global_avg_pool_time(Value x);
    Value linear(Value x, Value w, Value b);

    // Probability / loss heads. Constant-side inputs are plain Tensors.
    Value softmax_temp(Value logits, Scalar temperature);
    Value nll_probs(Value probs, std::vector<int> labels);              // -> scalar
    Value kl_const_p(Tensor p, Value q);                                // -> scalar
    Value soft_ce_const(Tensor targets, Value probs);                   // -> scalar
    Value sq_dist_const(Tensor ref, Value h);                           // -> scalar
    Value weighted_sum(std::vector<std::pair<Scalar, Value>> terms);    // -> scalar

    const Tensor& value(Value v) const;
    Scalar scalar_value(Value v) const { return value(v).scalar_value(); }

    int num_params() const { return static_cast<int>(param_nodes_.size()); }
    std::size_t num_nodes() const { return nodes_.size(); }

    // Gradient of `loss` (must be scalar) w.r.t. every registered
    // parameter, in registration order.
    std::vector<Tensor> backward(Value loss) const;

    // Negative control for the finite-difference harness: deliberately
    // mis-scales the relu backward rule.
    void set_corrupt_backward(bool on) { corrupt_backward_ = on; }

  private:
    enum class Op : std::uint8_t {
        kConst,
        kParam,
        kAdd,
        kMul,
        kScale,
        kSum,
        kRelu,
        kConv1d,
        kGap,
        kLinear,
        kSoftmaxTemp,
        kNllProbs,
        kKlConstP,
        kSoftCeConst,
        kSqDistConst,
        kWeightedSum,
    };

    struct Node {
        Op op;
        Tensor val;
        std::vector<int> parents;
        Tensor aux;                   // constant operand (p / targets / ref)
        Scalar c = 0.0;               // scale factor or temperature
        std::vector<int> labels;
        std::vector<Scalar> coeffs;   // weighted_sum coefficients
    };

    Value push(Node n);
    const Node& node(Value v) const;

    std::vector<Node> nodes_;
    std::vector<int> param_nodes_;
    bool corrupt_backward_ = false;
};

}  // namespace pskd
