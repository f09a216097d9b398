#pragma once

#include <optional>
#include <vector>

#include "idmne/data.hpp"
#include "idmne/model.hpp"

namespace idmne {

struct PseudoEntry {
    std::size_t index = 0;  // position in D_u
    int label = 0;
    double confidence = 0.0;
    int epoch = 0;
};

// The epoch's assignment, rebuilt from scratch each epoch. Pseudo-labeled
// samples stay in D_u; D_l' is D_l plus these entries.
struct PseudoLabelSet {
    std::vector<PseudoEntry> entries;
    std::size_t size() const { return entries.size(); }
};

struct PseudoStats {
    std::size_t count = 0;
    std::size_t correct = 0;
    std::optional<double> accuracy;  // absent when nothing is evaluable
};

// Threshold filter on per-sample confidence vectors; boundary inclusive
// (max p >= tau). Output ordered by sample index.
PseudoLabelSet assign_from_probs(const std::vector<std::vector<double>>& probs, double tau,
                                 int epoch);

PseudoLabelSet assign_pseudo_labels(const UnlabeledSet& unlabeled, const ModelParams& params,
                                    double tau, int epoch);

// Evaluation-only: compares entries against available audit labels.
PseudoStats pseudo_label_accuracy(const PseudoLabelSet& set, const std::vector<int>& audit_y);

// D_l' = D_l plus the pseudo-labeled samples drawn from D_u.
LabeledSet expand_labeled_set(const LabeledSet& labeled, const UnlabeledSet& unlabeled,
                              const PseudoLabelSet& pseudo);

}  // namespace idmne
