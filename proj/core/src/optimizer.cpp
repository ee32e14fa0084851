#include "pskd/optimizer.hpp"

#include <cmath>

namespace pskd {

AdamState make_adam(const std::vector<Tensor>& params, AdamConfig cfg) {
    if (!(cfg.lr > 0.0)) throw ParamError("adam: learning rate must be positive");
    AdamState st;
    st.cfg = cfg;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const Tensor& p : params) {
        st.m.push_back(Tensor::zeros(p.shape));
        st.v.push_back(Tensor::zeros(p.shape));
    }
    return st;
}

void adam_step(AdamState& state, std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ParamError("adam_step: parameter/gradient count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].same_shape(grads[i]))
            throw ParamError("adam_step: gradient shape mismatch at slot " + std::to_string(i));
        // Refuse before mutating anything.
        if (!grads[i].all_finite())
            throw NumericError("adam_step: non-finite gradient at slot " + std::to_string(i) +
                               ", step refused");
    }

    state.step += 1;
    const Scalar b1 = state.cfg.beta1, b2 = state.cfg.beta2;
    const Scalar c1 = 1.0 - std::pow(b1, static_cast<Scalar>(state.step));
    const Scalar c2 = 1.0 - std::pow(b2, static_cast<Scalar>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Scalar* p = params[i].data.data();
        Scalar* m = state.m[i].data.data();
        Scalar* v = state.v[i].data.data();
        const Scalar* g = grads[i].data.data();
        const std::size_t n = params[i].data.size();
        for (std::size_t j = 0; j < n; ++j) {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            const Scalar mhat = m[j] / c1;
            const Scalar vhat = v[j] / c2;
            p[j] -= state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.eps);
            if (state.cfg.f32_params) p[j] = static_cast<Scalar>(static_cast<float>(p[j]));
        }
    }
}

}  // namespace pskd
