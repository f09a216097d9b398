#include "idmne/losses.hpp"

#include <cmath>

#include "idmne/mixup.hpp"

namespace idmne {

namespace {

// Collects clean-pass confidences and argmax labels without touching any
// tape; the mask and pseudo-labels are constants of the step.
struct DetachedPredictions {
    std::vector<double> confidence;
    std::vector<int> argmax;
    std::vector<int> argmin;
};

DetachedPredictions detached_pass(const ModelParams& params, const Tensor& x) {
    Tensor p = predict_batch(params, x);
    const std::size_t n = p.rows(), k = p.cols();
    DetachedPredictions d;
    d.confidence.resize(n);
    d.argmax.resize(n);
    d.argmin.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = &p.data[i * k];
        d.argmax[i] = argmax_index(row, k);
        d.argmin[i] = argmin_index(row, k);
        d.confidence[i] = row[static_cast<std::size_t>(d.argmax[i])];
    }
    return d;
}

Tensor select_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
    Tensor out = Tensor::zeros({rows.size(), x.cols()});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) out.at(i, j) = x.at(rows[i], j);
    }
    return out;
}

}  // namespace

Tensor soft_cross_entropy(const Tensor& probs, const std::vector<std::vector<double>>& soft_labels) {
    const std::size_t n = probs.rows();
    if (soft_labels.size() != n) {
        throw DimensionError("soft_cross_entropy: " + std::to_string(soft_labels.size()) +
                             " label rows for " + std::to_string(n) + " prediction rows");
    }
    Tensor labels = Tensor::from_rows(soft_labels);
    Tensor logp = log(clamp(probs, kProbEpsilon, 1.0));
    return scale(sum(mul(logp, labels)), -1.0 / static_cast<double>(n));
}

Tensor loss_sup(const BoundModel& m, const LabeledBatch& batch_s, const LabeledBatch& batch_l) {
    const std::size_t n = batch_s.size() + batch_l.size();
    if (n == 0) throw ConfigError("loss_sup: empty union of labeled batches");
    const std::size_t k = m.prototypes.cols();

    std::vector<std::vector<double>> xs;
    std::vector<std::vector<double>> labels;
    for (std::size_t i = 0; i < batch_s.size(); ++i) {
        xs.emplace_back(batch_s.x.data.begin() + static_cast<long>(i * batch_s.x.cols()),
                        batch_s.x.data.begin() + static_cast<long>((i + 1) * batch_s.x.cols()));
        labels.push_back(one_hot(k, batch_s.y[i]));
    }
    for (std::size_t i = 0; i < batch_l.size(); ++i) {
        xs.emplace_back(batch_l.x.data.begin() + static_cast<long>(i * batch_l.x.cols()),
                        batch_l.x.data.begin() + static_cast<long>((i + 1) * batch_l.x.cols()));
        labels.push_back(one_hot(k, batch_l.y[i]));
    }
    return soft_cross_entropy(m.probs(Tensor::from_rows(xs)), labels);
}

Tensor loss_sdm(const BoundModel& m, const PairBatch& pairs, std::size_t k) {
    if (pairs.size() == 0) return Tensor::scalar(0.0);
    std::vector<std::vector<double>> mixed_x(pairs.size());
    std::vector<std::vector<double>> mixed_y(pairs.size());
    const std::size_t d = pairs.xs.cols();
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double lam = pairs.lambda_sdm[i];
        std::vector<double> xs_row(d), xt_row(d);
        for (std::size_t j = 0; j < d; ++j) {
            xs_row[j] = pairs.xs.at(i, j);
            xt_row[j] = pairs.xt.at(i, j);
        }
        auto mix = mix_samples(xs_row, one_hot(k, pairs.ys[i]), xt_row, one_hot(k, pairs.yt[i]), lam);
        mixed_x[i] = std::move(mix.x);
        mixed_y[i] = std::move(mix.y);
    }
    return soft_cross_entropy(m.probs(Tensor::from_rows(mixed_x)), mixed_y);
}

Tensor loss_mdm(const BoundModel& m, const PairBatch& pairs, std::size_t k) {
    if (pairs.size() == 0) return Tensor::scalar(0.0);
    Tensor fs = m.extract(pairs.xs);
    Tensor ft = m.extract(pairs.xt);
    Tensor fm = mix_rows(fs, ft, pairs.lambda_mdm);
    std::vector<std::vector<double>> mixed_y(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double lam = pairs.lambda_mdm[i];
        auto ys = one_hot(k, pairs.ys[i]);
        auto yt = one_hot(k, pairs.yt[i]);
        std::vector<double> ym(k);
        for (std::size_t c = 0; c < k; ++c) ym[c] = lam * ys[c] + (1.0 - lam) * yt[c];
        mixed_y[i] = std::move(ym);
    }
    return soft_cross_entropy(m.probs_from_features(fm), mixed_y);
}

Tensor loss_psr(const BoundModel& m, const ModelParams& detached, const UnlabeledBatch& batch_u,
                double tau) {
    auto clean = detached_pass(detached, batch_u.x);
    std::vector<std::size_t> masked;
    for (std::size_t i = 0; i < clean.confidence.size(); ++i) {
        if (clean.confidence[i] >= tau) masked.push_back(i);
    }
    if (masked.empty()) return Tensor::scalar(0.0);
    const std::size_t k = m.prototypes.cols();
    std::vector<std::vector<double>> labels;
    labels.reserve(masked.size());
    for (std::size_t i : masked) labels.push_back(one_hot(k, clean.argmax[i]));
    Tensor x_pert = select_rows(batch_u.x_perturbed, masked);
    return soft_cross_entropy(m.probs(x_pert), labels);
}

Tensor loss_nsr(const BoundModel& m, const ModelParams& detached, const UnlabeledBatch& batch_u,
                double tau) {
    auto clean = detached_pass(detached, batch_u.x);
    std::vector<std::size_t> masked;
    for (std::size_t i = 0; i < clean.confidence.size(); ++i) {
        if (clean.confidence[i] < tau) masked.push_back(i);
    }
    if (masked.empty()) return Tensor::scalar(0.0);
    const std::size_t k = m.prototypes.cols();
    std::vector<std::vector<double>> labels;
    labels.reserve(masked.size());
    for (std::size_t i : masked) labels.push_back(one_hot(k, clean.argmin[i]));
    Tensor p = m.probs(select_rows(batch_u.x, masked));
    // -(1/n) sum_i log(1 - p_{complementary label}): one-hot rows pick the
    // complementary component out of log(1 - p).
    Tensor one_minus = add_scalar(scale(p, -1.0), 1.0);
    const std::size_t n = masked.size();
    Tensor logq = log(clamp(one_minus, kProbEpsilon, 1.0));
    return scale(sum(mul(logq, Tensor::from_rows(labels))), -1.0 / static_cast<double>(n));
}

Tensor loss_pa(const BoundModel& m, const ModelParams& detached, const UnlabeledBatch& batch_u,
               const LabeledBatch& batch_lp, double tau) {
    auto clean = detached_pass(detached, batch_u.x);
    std::vector<std::size_t> masked;
    for (std::size_t i = 0; i < clean.confidence.size(); ++i) {
        if (clean.confidence[i] >= tau) masked.push_back(i);
    }
    if (masked.empty() || batch_lp.size() == 0) return Tensor::scalar(0.0);

    Tensor pu = m.probs(select_rows(batch_u.x, masked));  // [n_u x K]
    Tensor pl = m.probs(batch_lp.x);                      // [n_l x K]
    Tensor inner = matmul(pu, transpose(pl));             // [n_u x n_l]
    Tensor mclamped = clamp(inner, kProbEpsilon, 1.0 - kProbEpsilon);

    std::vector<std::vector<double>> nu(masked.size(), std::vector<double>(batch_lp.size(), 0.0));
    std::vector<std::vector<double>> not_nu(masked.size(),
                                            std::vector<double>(batch_lp.size(), 0.0));
    for (std::size_t i = 0; i < masked.size(); ++i) {
        for (std::size_t j = 0; j < batch_lp.size(); ++j) {
            const bool same = clean.argmax[masked[i]] == batch_lp.y[j];
            nu[i][j] = same ? 1.0 : 0.0;
            not_nu[i][j] = same ? 0.0 : 1.0;
        }
    }
    Tensor pos = mul(log(mclamped), Tensor::from_rows(nu));
    Tensor neg = mul(log(add_scalar(scale(mclamped, -1.0), 1.0)), Tensor::from_rows(not_nu));
    return scale(sum(add(pos, neg)), -1.0 / static_cast<double>(masked.size()));
}

StepLoss loss_total(const BoundModel& m, const ModelParams& detached, const StepBatches& batches,
                    const LossSwitches& switches, const LossWeights& weights, double tau,
                    std::size_t k) {
    StepLoss out;
    Tensor total = loss_sup(m, batches.batch_s, batches.batch_l);
    out.breakdown.l_sup = total.value();

    const bool idm_active = weights.beta != 0.0;
    const bool ne_active = weights.gamma != 0.0;
    out.degenerate_pairs = batches.pairs.size() == 0;

    if (switches.sdm && idm_active && !out.degenerate_pairs) {
        Tensor t = loss_sdm(m, batches.pairs, k);
        out.breakdown.l_sdm = t.value();
        total = add(total, scale(t, weights.beta));
    }
    if (switches.mdm && idm_active && !out.degenerate_pairs) {
        Tensor t = loss_mdm(m, batches.pairs, k);
        out.breakdown.l_mdm = t.value();
        total = add(total, scale(t, weights.beta));
    }
    if (switches.psr && ne_active) {
        Tensor t = loss_psr(m, detached, batches.batch_u, tau);
        out.breakdown.l_psr = t.value();
        if (t.on_tape()) total = add(total, scale(t, weights.gamma));
    }
    if (switches.nsr && ne_active) {
        Tensor t = loss_nsr(m, detached, batches.batch_u, tau);
        out.breakdown.l_nsr = t.value();
        if (t.on_tape()) total = add(total, scale(t, weights.gamma));
    }
    if (switches.pa && ne_active) {
        Tensor t = loss_pa(m, detached, batches.batch_u, batches.batch_lp, tau);
        out.breakdown.l_pa = t.value();
        if (t.on_tape()) total = add(total, scale(t, weights.gamma));
    }
    out.breakdown.total = total.value();
    out.total = std::move(total);
    return out;
}

}  // namespace idmne
