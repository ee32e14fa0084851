#include "pskd/eval.hpp"

#include <algorithm>

namespace pskd {

std::int64_t ConfusionMatrix::total() const {
    std::int64_t s = 0;
    for (std::int64_t v : counts) s += v;
    return s;
}

std::int64_t ConfusionMatrix::trace() const {
    std::int64_t s = 0;
    for (int c = 0; c < num_classes; ++c) s += at(c, c);
    return s;
}

std::vector<int> predict(const Model& m, const Dataset& ds, const std::vector<int>& indices) {
    std::vector<int> preds;
    preds.reserve(indices.size());
    constexpr int kChunk = 64;
    for (std::size_t start = 0; start < indices.size(); start += kChunk) {
        const std::size_t end = std::min(indices.size(), start + kChunk);
        const std::vector<int> chunk(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                     indices.begin() + static_cast<std::ptrdiff_t>(end));
        const ForwardOutput out = forward(m, make_batch(ds, chunk, m.spec.role));
        for (int b = 0; b < out.z.dim(0); ++b) {
            int arg = 0;
            for (int c = 1; c < out.z.dim(1); ++c)
                if (out.z.at(b, c) > out.z.at(b, arg)) arg = c;
            preds.push_back(arg);
        }
    }
    return preds;
}

Evaluation evaluate_predictions(const std::vector<int>& labels, const std::vector<int>& preds,
                                int num_classes) {
    if (labels.empty()) throw ParamError("evaluate: empty split");
    if (labels.size() != preds.size()) throw ParamError("evaluate: label/prediction count mismatch");

    Evaluation ev{Metrics{}, ConfusionMatrix(num_classes)};
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int t = labels[i], p = preds[i];
        if (t < 0 || t >= num_classes || p < 0 || p >= num_classes)
            throw ParamError("evaluate: class index out of range");
        ++ev.confusion.at(t, p);
    }

    ev.metrics.accuracy =
        static_cast<double>(ev.confusion.trace()) / static_cast<double>(ev.confusion.total());
    ev.metrics.precision.assign(static_cast<std::size_t>(num_classes), 0.0);
    ev.metrics.recall.assign(static_cast<std::size_t>(num_classes), 0.0);
    ev.metrics.f1.assign(static_cast<std::size_t>(num_classes), 0.0);

    double f1_sum = 0.0;
    for (int c = 0; c < num_classes; ++c) {
        std::int64_t tp = ev.confusion.at(c, c), fp = 0, fn = 0;
        for (int o = 0; o < num_classes; ++o) {
            if (o == c) continue;
            fp += ev.confusion.at(o, c);
            fn += ev.confusion.at(c, o);
        }
        const double prec = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        const double rec = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        const double f1 = prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
        ev.metrics.precision[static_cast<std::size_t>(c)] = prec;
        ev.metrics.recall[static_cast<std::size_t>(c)] = rec;
        ev.metrics.f1[static_cast<std::size_t>(c)] = f1;
        f1_sum += f1;
    }
    ev.metrics.macro_f1 = f1_sum / num_classes;
    return ev;
}

Evaluation evaluate(const Model& m, const Dataset& ds, Split split) {
    const auto indices = ds.indices_of(split);
    if (indices.empty()) throw ParamError("evaluate: empty split");
    std::vector<int> labels;
    labels.reserve(indices.size());
    for (int i : indices) labels.push_back(ds.samples[static_cast<std::size_t>(i)].label);
    return evaluate_predictions(labels, predict(m, ds, indices), ds.meta.num_classes);
}

}  // namespace pskd
