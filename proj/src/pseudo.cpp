#include "idmne/pseudo.hpp"

namespace idmne {

PseudoLabelSet assign_from_probs(const std::vector<std::vector<double>>& probs, double tau,
                                 int epoch) {
    if (!(tau > 0.0 && tau <= 1.0)) {
        throw ConfigError("assign_from_probs: tau must lie in (0, 1], got " + std::to_string(tau));
    }
    PseudoLabelSet set;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const auto& p = probs[i];
        const int best = argmax_index(p.data(), p.size());
        const double conf = p[static_cast<std::size_t>(best)];
        if (conf >= tau) {
            set.entries.push_back(PseudoEntry{i, best, conf, epoch});
        }
    }
    return set;
}

PseudoLabelSet assign_pseudo_labels(const UnlabeledSet& unlabeled, const ModelParams& params,
                                    double tau, int epoch) {
    std::vector<std::vector<double>> probs;
    probs.reserve(unlabeled.size());
    if (unlabeled.size() > 0) {
        Tensor p = predict_batch(params, Tensor::from_rows(unlabeled.x));
        const std::size_t k = p.cols();
        for (std::size_t i = 0; i < unlabeled.size(); ++i) {
            probs.emplace_back(p.data.begin() + static_cast<long>(i * k),
                               p.data.begin() + static_cast<long>((i + 1) * k));
        }
    }
    return assign_from_probs(probs, tau, epoch);
}

PseudoStats pseudo_label_accuracy(const PseudoLabelSet& set, const std::vector<int>& audit_y) {
    PseudoStats stats;
    stats.count = set.size();
    std::size_t evaluable = 0;
    for (const auto& e : set.entries) {
        const int truth = audit_y.at(e.index);
        if (truth < 0) continue;
        ++evaluable;
        if (truth == e.label) ++stats.correct;
    }
    if (evaluable > 0) {
        stats.accuracy = static_cast<double>(stats.correct) / static_cast<double>(evaluable);
    }
    return stats;
}

LabeledSet expand_labeled_set(const LabeledSet& labeled, const UnlabeledSet& unlabeled,
                              const PseudoLabelSet& pseudo) {
    LabeledSet out = labeled;
    for (const auto& e : pseudo.entries) {
        out.ids.push_back(unlabeled.ids.at(e.index));
        out.x.push_back(unlabeled.x.at(e.index));
        out.y.push_back(e.label);
    }
    return out;
}

}  // namespace idmne
