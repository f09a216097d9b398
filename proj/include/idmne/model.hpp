#pragma once

#include <cstdint>
#include <vector>

#include "idmne/tensor.hpp"

namespace idmne {

enum class Activation { linear, relu };

struct Layer {
    Tensor weight;  // [in x out]
    Tensor bias;    // [out]
    Activation act = Activation::linear;
};

// Architecture description: d_in -> widths[0] -> ... -> widths.back().
// ReLU after every layer except the last, which stays linear so features
// cover the full sphere after normalization.
struct ModelSpec {
    std::size_t d_in = 0;
    std::vector<std::size_t> widths = {64, 64};
    std::size_t k = 0;  // class count, >= 2
    double temperature = 0.05;
};

// Feature extractor layers plus the unbiased prototypical classifier:
// prototype matrix W [d_feat x K] and fixed temperature T. T is a constant
// of the model, not a trainable parameter.
struct ModelParams {
    std::vector<Layer> layers;
    Tensor prototypes;
    double temperature = 0.05;

    std::size_t d_in() const { return layers.front().weight.shape[0]; }
    std::size_t d_feat() const { return layers.back().weight.shape[1]; }
    std::size_t k() const { return prototypes.shape[1]; }
};

struct Prediction {
    std::vector<double> probs;
    double confidence = 0.0;
    int argmax_class = 0;
};

// He-uniform extractor weights, zero biases, unit-Gaussian prototype
// columns normalized to unit length. Deterministic given the seed.
ModelParams init_params(const ModelSpec& spec, std::uint64_t seed);

// Model bound to a tape (parameters registered as differentiable leaves) or,
// with tape == nullptr, a plain inference view producing identical values.
struct BoundModel {
    Tape* tape = nullptr;
    std::vector<Layer> layers;
    Tensor prototypes;
    double temperature = 0.05;

    // [n x d_in] -> [n x d_feat], pre-normalization features.
    Tensor extract(const Tensor& x) const;
    // Classifier on given features: softmax((1/T) W^T f/||f||), row-wise.
    Tensor probs_from_features(const Tensor& f) const;
    // Full forward pass [n x d_in] -> [n x K].
    Tensor probs(const Tensor& x) const;
};

BoundModel bind(Tape& tape, const ModelParams& params);
BoundModel bind_inference(const ModelParams& params);

// Batched forward without a tape.
Tensor predict_batch(const ModelParams& params, const Tensor& x);
Prediction predict(const ModelParams& params, const std::vector<double>& x);

// Ties broken toward the lowest index.
int argmax_index(const double* v, std::size_t n);
int argmin_index(const double* v, std::size_t n);

}  // namespace idmne
