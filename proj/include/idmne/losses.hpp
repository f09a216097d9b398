#pragma once

#include <optional>
#include <vector>

#include "idmne/data.hpp"
#include "idmne/model.hpp"

namespace idmne {

// Per-term scalar values plus the weighted total:
// total = l_sup + beta*(l_sdm + l_mdm) + gamma*(l_psr + l_nsr + l_pa).
struct LossBreakdown {
    double l_sup = 0.0;
    double l_sdm = 0.0;
    double l_mdm = 0.0;
    double l_psr = 0.0;
    double l_nsr = 0.0;
    double l_pa = 0.0;
    double total = 0.0;
};

// One-to-one paired source / expanded-target samples with their per-pair
// mixup ratios. The sample-level and manifold-level ratios are drawn
// independently; the pairing is shared.
struct PairBatch {
    Tensor xs;  // [n_pair x d_in]
    std::vector<int> ys;
    Tensor xt;  // [n_pair x d_in]
    std::vector<int> yt;
    std::vector<double> lambda_sdm;
    std::vector<double> lambda_mdm;
    std::size_t size() const { return ys.size(); }
};

// Probability floor applied before every log.
inline constexpr double kProbEpsilon = 1e-7;

// Soft-label cross-entropy of a probability matrix against constant label
// rows: -(1/n) sum_ij y[i][j] log(max(p[i][j], eps)).
Tensor soft_cross_entropy(const Tensor& probs, const std::vector<std::vector<double>>& soft_labels);

// Mean cross-entropy over the union of both labeled batches (Eq. 2 style
// normalization restricted to the mini-batch).
Tensor loss_sup(const BoundModel& m, const LabeledBatch& batch_s, const LabeledBatch& batch_l);

// Cross-entropy on sample-level mixed inputs with mixed labels.
Tensor loss_sdm(const BoundModel& m, const PairBatch& pairs, std::size_t k);

// Cross-entropy on manifold-level mixed features with mixed labels.
Tensor loss_mdm(const BoundModel& m, const PairBatch& pairs, std::size_t k);

// Consistency of perturbed-input predictions with clean pseudo-labels over
// samples whose clean confidence reaches tau. Mask and pseudo-labels come
// from a detached clean pass.
Tensor loss_psr(const BoundModel& m, const ModelParams& detached, const UnlabeledBatch& batch_u,
                double tau);

// Complementary-label penalty over samples below tau: pushes the least
// likely class's probability toward zero.
Tensor loss_nsr(const BoundModel& m, const ModelParams& detached, const UnlabeledBatch& batch_u,
                double tau);

// Pairwise binary cross-entropy on prediction inner products between
// confident unlabeled samples and the expanded labeled batch, normalized by
// the confident-sample count.
Tensor loss_pa(const BoundModel& m, const ModelParams& detached, const UnlabeledBatch& batch_u,
               const LabeledBatch& batch_lp, double tau);

struct LossSwitches {
    bool sdm = true;
    bool mdm = true;
    bool psr = true;
    bool nsr = true;
    bool pa = true;
};

struct LossWeights {
    double beta = 1.0;
    double gamma = 0.1;
};

struct StepBatches {
    LabeledBatch batch_s;
    LabeledBatch batch_l;
    LabeledBatch batch_lp;
    UnlabeledBatch batch_u;
    PairBatch pairs;
};

struct StepLoss {
    LossBreakdown breakdown;
    Tensor total;          // scalar on the step tape
    bool degenerate_pairs = false;  // n_pair was zero this step
};

// Assembles the weighted total. A term is evaluated only when its switch is
// on and its group weight is nonzero, so disabling a switch and zeroing the
// weight take the same code path (bit-identical trajectories).
StepLoss loss_total(const BoundModel& m, const ModelParams& detached, const StepBatches& batches,
                    const LossSwitches& switches, const LossWeights& weights, double tau,
                    std::size_t k);

}  // namespace idmne
