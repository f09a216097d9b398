#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "idmne/losses.hpp"
#include "idmne/metrics.hpp"
#include "idmne/pseudo.hpp"

namespace idmne {

struct TrainConfig {
    std::size_t epochs = 40;
    std::size_t iters_per_epoch = 25;
    double lr_eta0 = 0.001;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double tau = 0.95;
    double alpha = 2.0;
    double beta = 1.0;
    double gamma = 0.1;
    double temperature = 0.05;
    BatchPlan batch;
    double perturb_strength = 0.1;
    std::uint64_t seed = 1;
    LossSwitches switches;
    bool enable_pseudo = true;
    bool decay_prototypes = true;  // weight decay on the prototype matrix
    std::size_t checkpoint_every = 0;  // epochs; 0 = final checkpoint only
    std::vector<std::size_t> hidden = {64, 64};

    void validate() const;  // throws ConfigError
};

// eta_0 / (1 + 0.0001 t)^0.75
double lr_at(std::size_t t, double eta0);

// Mutable optimization state. The three rng streams are independent so that
// toggling one loss switch leaves every other random draw untouched: batch
// order and perturbation noise come from rng_data, pairing and mixup ratios
// from rng_mixup, and the (already consumed) initialization from seed+2.
struct TrainState {
    ModelParams params;
    std::vector<std::vector<double>> velocity;  // one buffer per parameter tensor
    std::size_t epoch = 0;  // completed epochs
    std::size_t t = 0;      // global iteration counter
    std::mt19937_64 rng_data;
    std::mt19937_64 rng_mixup;
};

struct TrainDatasets {
    LabeledSet source;        // D_s
    LabeledSet target_labeled;  // D_l
    UnlabeledSet target_unlabeled;  // D_u
    LabeledSet eval;
};

TrainState init_state(const TrainConfig& cfg, const TrainDatasets& data);

// Canonical parameter order: layer0.weight, layer0.bias, ..., prototypes.
std::vector<Tensor*> param_tensors(ModelParams& params);
std::vector<std::vector<double>> collect_gradients(const Tape& tape, const BoundModel& bound);

// Heavy-ball update with the decay folded into the gradient:
// v <- momentum*v + (g + wd*theta); theta <- theta - lr_at(t)*v.
// The temperature is a constant and is never touched.
void sgd_step(TrainState& state, const std::vector<std::vector<double>>& grads, std::size_t t,
              const TrainConfig& cfg);

struct EpochResult {
    EpochMetrics metrics;
    PseudoLabelSet pseudo;
};

EpochResult train_epoch(TrainState& state, const TrainDatasets& data, const TrainConfig& cfg,
                        AccdState& accd_state, const std::vector<double>& fstd);

struct RunResult {
    ModelParams params;
    std::vector<EpochMetrics> history;
    std::vector<PseudoLabelSet> pseudo_history;  // one entry per epoch
};

// Hook invoked after each finished epoch; the CLI layer uses it for
// cadenced checkpoints.
using EpochHook = std::function<void(const TrainState&, const AccdState&, const EpochResult&)>;

RunResult run(const TrainConfig& cfg, const TrainDatasets& data, const EpochHook& hook = {});
RunResult run_from(TrainState state, const TrainConfig& cfg, const TrainDatasets& data,
                   AccdState accd_state, const EpochHook& hook = {});

// Checkpoint file, magic "IDMNE1". Model section always present; the
// optional trainer section carries everything needed to resume bit-exactly
// at an epoch boundary (velocity buffers, counters, rng streams, accd
// baselines).
struct CheckpointExtra {
    bool present = false;
    std::vector<std::vector<double>> velocity;
    std::size_t epoch = 0;
    std::size_t t = 0;
    std::string rng_data_state;
    std::string rng_mixup_state;
    std::vector<double> accd_initial;
};

struct Checkpoint {
    ModelParams params;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
    CheckpointExtra extra;
};

void save_checkpoint(const std::string& path, const ModelParams& params, std::uint64_t seed,
                     std::uint64_t config_hash, const CheckpointExtra* extra = nullptr);
Checkpoint load_checkpoint(const std::string& path);

CheckpointExtra make_checkpoint_extra(const TrainState& state, const AccdState& accd_state);

// Rebuilds (state, accd baselines) from a checkpoint carrying trainer state;
// continuing with run_from reproduces the uninterrupted trajectory bit-exactly.
std::pair<TrainState, AccdState> resume_from_checkpoint(const Checkpoint& ck);

}  // namespace idmne
