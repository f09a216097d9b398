#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "idmne/tensor.hpp"

namespace idmne {

enum class Domain { source, target };
enum class SplitTag { train, eval };

// Raw sample container as produced by generators or the CSV loader.
// label == -1 means unlabeled.
struct Dataset {
    std::size_t k = 0;
    std::size_t d_in = 0;
    std::vector<long> ids;
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    std::vector<Domain> domain;
    std::vector<SplitTag> split;

    std::size_t size() const { return x.size(); }
    void push(long id, Domain dom, SplitTag sp, int label, std::vector<double> features);
};

// D_s / D_l / D_l' style sets: every sample carries a class index.
struct LabeledSet {
    std::size_t k = 0;
    std::size_t d_in = 0;
    std::vector<long> ids;
    std::vector<std::vector<double>> x;
    std::vector<int> y;

    std::size_t size() const { return x.size(); }
};

// D_u: samples without training labels. audit_y keeps the ground truth for
// evaluation-only statistics (-1 when unknown); it never reaches a loss.
struct UnlabeledSet {
    std::size_t k = 0;
    std::size_t d_in = 0;
    std::vector<long> ids;
    std::vector<std::vector<double>> x;
    std::vector<int> audit_y;

    std::size_t size() const { return x.size(); }
};

struct ShotSpec {
    std::size_t shots_per_class = 3;
    std::uint64_t seed = 11;
};

struct BatchPlan {
    std::size_t source = 24;
    std::size_t target_labeled = 24;
    std::size_t target_expanded = 24;
    std::size_t target_unlabeled = 48;
};

struct LabeledBatch {
    Tensor x;  // [n x d_in]
    std::vector<int> y;
    std::size_t size() const { return y.size(); }
};

struct UnlabeledBatch {
    Tensor x;            // [n x d_in] clean inputs
    Tensor x_perturbed;  // [n x d_in] jittered inputs for the consistency term
    std::vector<std::size_t> indices;  // positions in D_u (for audit)
    std::size_t size() const { return indices.size(); }
};

struct FewShotSplit {
    LabeledSet labeled;      // D_l, shots_per_class per class
    UnlabeledSet unlabeled;  // D_u, labels stripped (kept for audit)
    LabeledSet eval;         // held out, never trained on
};

struct BlobsSpec {
    std::size_t k = 5;
    std::size_t d_in = 8;
    std::size_t n_source = 2000;
    std::size_t n_target = 2000;
    std::vector<double> shift;  // added to every target class mean
    double scale = 1.0;         // target noise std relative to source
    double class_sep = 1.0;     // std of class-mean placement
    std::uint64_t seed = 7;
};

// Two interleaved half-moons; the target domain applies a rotation about the
// origin to every generated point. K = 2, d_in = 2.
std::pair<Dataset, Dataset> gen_two_moons_shift(std::size_t n_source, std::size_t n_target,
                                                double rotation_deg, double noise_sigma,
                                                std::uint64_t seed);

// Gaussian class blobs with a covariate shift: target class means are the
// source means plus a shared shift vector, target noise scaled.
std::pair<Dataset, Dataset> gen_blobs_shift(const BlobsSpec& spec);

// Stratified few-shot split of a fully labeled target dataset. Picks
// shots_per_class labeled samples per class, then per class an eval_fraction
// share of the remainder for the eval set; everything else becomes D_u.
FewShotSplit split_few_shot(const Dataset& target, const ShotSpec& spec, double eval_fraction);

LabeledSet as_labeled(const Dataset& ds);

// Per-feature standard deviation (population) of a sample pool.
std::vector<double> feature_std(const std::vector<std::vector<double>>& x);

// x + Gaussian noise with per-dimension std = strength * fstd[j].
std::vector<double> perturb(const std::vector<double>& x, double strength,
                            const std::vector<double>& fstd, std::mt19937_64& rng);

// Mini-batch sampling per the training loop: without replacement when the
// pool is at least as large as the batch, with replacement otherwise.
std::vector<std::size_t> sample_indices(std::size_t pool, std::size_t n, std::mt19937_64& rng);
LabeledBatch sample_labeled(const LabeledSet& set, std::size_t n, std::mt19937_64& rng);
UnlabeledBatch sample_unlabeled(const UnlabeledSet& set, std::size_t n, double perturb_strength,
                                const std::vector<double>& fstd, std::mt19937_64& rng);

// The four mini-batches of one training step, drawn in a fixed order
// (source, labeled target, expanded target, unlabeled target) so the rng
// stream is reproducible.
struct MiniBatches {
    LabeledBatch source;
    LabeledBatch target_labeled;
    LabeledBatch target_expanded;
    UnlabeledBatch target_unlabeled;
};

MiniBatches sample_batches(const LabeledSet& source, const LabeledSet& labeled,
                           const LabeledSet& expanded, const UnlabeledSet& unlabeled,
                           const BatchPlan& plan, double perturb_strength,
                           const std::vector<double>& fstd, std::mt19937_64& rng);

// Dataset CSV: header `id,domain,split,label,f0,...,f{d-1}`; label empty for
// unlabeled rows. Errors carry the offending line number.
void save_csv(const std::string& path, const Dataset& ds);
Dataset load_csv(const std::string& path);
std::pair<Dataset, Dataset> split_by_domain(const Dataset& ds);

}  // namespace idmne
