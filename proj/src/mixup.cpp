#include "idmne/mixup.hpp"

namespace idmne {

namespace {

std::vector<double> mix_vec(const std::vector<double>& a, const std::vector<double>& b,
                            double lambda, const char* what) {
    if (a.size() != b.size()) {
        throw DimensionError(std::string("mix: ") + what + " width mismatch " +
                             std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = lambda * a[i] + (1.0 - lambda) * b[i];
    return out;
}

}  // namespace

std::vector<double> one_hot(std::size_t k, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
        throw std::out_of_range("one_hot: label " + std::to_string(label) + " out of range [0," +
                                std::to_string(k) + ")");
    }
    std::vector<double> v(k, 0.0);
    v[static_cast<std::size_t>(label)] = 1.0;
    return v;
}

double sample_lambda(double alpha, std::mt19937_64& rng) {
    if (!(alpha > 0.0)) {
        throw ConfigError("sample_lambda: alpha must be positive, got " + std::to_string(alpha));
    }
    std::gamma_distribution<double> gamma(alpha, 1.0);
    const double g1 = gamma(rng);
    const double g2 = gamma(rng);
    const double s = g1 + g2;
    if (s == 0.0) return 0.5;  // both draws underflowed; the symmetric midpoint
    return g1 / s;
}

MixedSample mix_samples(const std::vector<double>& xs, const std::vector<double>& ys_onehot,
                        const std::vector<double>& xt, const std::vector<double>& yt_onehot,
                        double lambda) {
    MixedSample m;
    m.x = mix_vec(xs, xt, lambda, "input");
    m.y = mix_vec(ys_onehot, yt_onehot, lambda, "label");
    m.lambda = lambda;
    return m;
}

MixedFeature mix_features(const std::vector<double>& fs, const std::vector<double>& ys_onehot,
                          const std::vector<double>& ft, const std::vector<double>& yt_onehot,
                          double lambda) {
    MixedFeature m;
    m.f = mix_vec(fs, ft, lambda, "feature");
    m.y = mix_vec(ys_onehot, yt_onehot, lambda, "label");
    m.lambda = lambda;
    return m;
}

Tensor mix_rows(const Tensor& a, const Tensor& b, const std::vector<double>& lambdas) {
    if (a.shape != b.shape || a.rank() != 2 || a.rows() != lambdas.size()) {
        throw DimensionError("mix_rows: shapes " + shape_str(a.shape) + ", " + shape_str(b.shape) +
                             " with " + std::to_string(lambdas.size()) + " ratios");
    }
    const std::size_t n = a.rows(), d = a.cols();
    Tensor la = Tensor::zeros({n, d});
    Tensor lb = Tensor::zeros({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            la.at(i, j) = lambdas[i];
            lb.at(i, j) = 1.0 - lambdas[i];
        }
    }
    return add(mul(a, la), mul(b, lb));
}

}  // namespace idmne
