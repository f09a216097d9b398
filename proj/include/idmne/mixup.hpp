#pragma once

#include <random>
#include <vector>

#include "idmne/tensor.hpp"

namespace idmne {

struct MixedSample {
    std::vector<double> x;  // lambda*x_s + (1-lambda)*x_t
    std::vector<double> y;  // mixed label probability vector
    double lambda = 0.0;
};

struct MixedFeature {
    std::vector<double> f;
    std::vector<double> y;
    double lambda = 0.0;
};

std::vector<double> one_hot(std::size_t k, int label);

// Draw from the symmetric Beta(alpha, alpha) via two gamma draws.
double sample_lambda(double alpha, std::mt19937_64& rng);

MixedSample mix_samples(const std::vector<double>& xs, const std::vector<double>& ys_onehot,
                        const std::vector<double>& xt, const std::vector<double>& yt_onehot,
                        double lambda);

MixedFeature mix_features(const std::vector<double>& fs, const std::vector<double>& ys_onehot,
                          const std::vector<double>& ft, const std::vector<double>& yt_onehot,
                          double lambda);

// Graph-level row mixing used by the manifold-level loss:
// out row i = lambdas[i]*a row i + (1-lambdas[i])*b row i. Gradients flow
// into both feature matrices; the ratios are constants.
Tensor mix_rows(const Tensor& a, const Tensor& b, const std::vector<double>& lambdas);

}  // namespace idmne
