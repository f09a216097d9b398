#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "idmne/data.hpp"
#include "idmne/model.hpp"

namespace idmne {

double accuracy(const ModelParams& params, const LabeledSet& eval_set);

// Per-class source/target centroid distances of the normalized features,
// each divided by its value under the initial model. The first update call
// freezes the baselines and returns exactly 1.
class AccdState {
public:
    // Returns the averaged normalized centroid distance for this epoch.
    double update(const ModelParams& params, const LabeledSet& source, const Tensor& target_x,
                  const std::vector<int>& target_y);

    bool initialized() const { return initialized_; }

    // Checkpoint plumbing: the frozen d_k^0 values.
    const std::vector<double>& baselines() const { return initial_; }
    void restore(std::vector<double> baselines);

private:
    bool initialized_ = false;
    std::vector<double> initial_;  // d_k^0, <= 0 marks an unusable class
};

inline constexpr std::size_t kCalibrationBins = 100;

struct CalibrationBin {
    std::size_t count = 0;
    double conf_sum = 0.0;
    std::size_t correct = 0;
};

// Equal-width histogram over max-probability confidences; bins are
// left-closed right-open with the final bin closed at 1.
struct CalibrationReport {
    std::array<CalibrationBin, kCalibrationBins> bins{};
    std::size_t n = 0;
    double ece = 0.0;
};

CalibrationReport calibration(const ModelParams& params, const LabeledSet& eval_set);

// One metrics row per epoch, written with 9 significant digits.
struct EpochMetrics {
    std::size_t epoch = 0;
    std::size_t iter = 0;  // last global iteration of the epoch
    double lr = 0.0;
    double l_sup = 0.0, l_sdm = 0.0, l_mdm = 0.0, l_psr = 0.0, l_nsr = 0.0, l_pa = 0.0;
    double l_total = 0.0;
    double acc_eval = 0.0;
    double accd = 0.0;
    double ece = 0.0;
    std::size_t pl_count = 0;
    std::size_t pl_correct = 0;
    std::optional<double> pl_acc;
};

extern const char* const kMetricsHeader;

std::string format_sig9(double v);
std::string metrics_row(const EpochMetrics& m);
void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& history);
std::vector<EpochMetrics> read_metrics_csv(const std::string& path);

}  // namespace idmne
