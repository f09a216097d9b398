#include "idmne/model.hpp"

#include <cmath>
#include <random>

namespace idmne {

int argmax_index(const double* v, std::size_t n) {
    int best = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (v[i] > v[best]) best = static_cast<int>(i);
    }
    return best;
}

int argmin_index(const double* v, std::size_t n) {
    int best = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (v[i] < v[best]) best = static_cast<int>(i);
    }
    return best;
}

ModelParams init_params(const ModelSpec& spec, std::uint64_t seed) {
    if (spec.d_in == 0 || spec.widths.empty()) {
        throw DimensionError("init_params: extractor needs an input width and at least one layer");
    }
    if (spec.k < 2) throw DimensionError("init_params: k must be >= 2");
    if (!(spec.temperature > 0.0)) throw NumericError("init_params: temperature must be positive");

    std::mt19937_64 rng(seed);
    ModelParams p;
    p.temperature = spec.temperature;

    std::size_t in = spec.d_in;
    for (std::size_t li = 0; li < spec.widths.size(); ++li) {
        const std::size_t out = spec.widths[li];
        const double limit = std::sqrt(6.0 / static_cast<double>(in));
        std::uniform_real_distribution<double> u(-limit, limit);
        // Nonzero bias init keeps the feature vector away from exact zero
        // even when a whole relu layer goes dead on some input.
        const double bias_limit = 1.0 / std::sqrt(static_cast<double>(in));
        std::uniform_real_distribution<double> ub(-bias_limit, bias_limit);
        Layer layer;
        layer.weight = Tensor::zeros({in, out});
        for (double& w : layer.weight.data) w = u(rng);
        layer.bias = Tensor::zeros({out});
        for (double& b : layer.bias.data) b = ub(rng);
        layer.act = (li + 1 < spec.widths.size()) ? Activation::relu : Activation::linear;
        p.layers.push_back(std::move(layer));
        in = out;
    }

    const std::size_t d_feat = spec.widths.back();
    p.prototypes = Tensor::zeros({d_feat, spec.k});
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t kcol = 0; kcol < spec.k; ++kcol) {
        std::vector<double> col(d_feat);
        double s = 0.0;
        for (std::size_t j = 0; j < d_feat; ++j) {
            col[j] = gauss(rng);
            s += col[j] * col[j];
        }
        const double norm = std::sqrt(s);
        for (std::size_t j = 0; j < d_feat; ++j) {
            p.prototypes.at(j, kcol) = col[j] / norm;
        }
    }
    return p;
}

Tensor BoundModel::extract(const Tensor& x) const {
    if (x.rank() != 2 || x.shape[1] != layers.front().weight.shape[0]) {
        throw DimensionError("extract: input shape " + shape_str(x.shape) +
                             " does not match extractor input width " +
                             std::to_string(layers.front().weight.shape[0]));
    }
    Tensor h = x;
    for (const Layer& layer : layers) {
        h = add_bias(matmul(h, layer.weight), layer.bias);
        if (layer.act == Activation::relu) h = relu(h);
    }
    return h;
}

Tensor BoundModel::probs_from_features(const Tensor& f) const {
    Tensor fn = l2_normalize(f);
    Tensor logits = scale(matmul(fn, prototypes), 1.0 / temperature);
    return softmax(logits);
}

Tensor BoundModel::probs(const Tensor& x) const { return probs_from_features(extract(x)); }

BoundModel bind(Tape& tape, const ModelParams& params) {
    BoundModel m;
    m.tape = &tape;
    m.temperature = params.temperature;
    for (const Layer& layer : params.layers) {
        m.layers.push_back(Layer{tape.leaf(layer.weight), tape.leaf(layer.bias), layer.act});
    }
    m.prototypes = tape.leaf(params.prototypes);
    return m;
}

BoundModel bind_inference(const ModelParams& params) {
    BoundModel m;
    m.temperature = params.temperature;
    m.layers = params.layers;
    m.prototypes = params.prototypes;
    return m;
}

Tensor predict_batch(const ModelParams& params, const Tensor& x) {
    return bind_inference(params).probs(x);
}

Prediction predict(const ModelParams& params, const std::vector<double>& x) {
    Tensor row({1, x.size()}, x);
    Tensor p = predict_batch(params, row);
    Prediction pred;
    pred.probs = p.data;
    pred.argmax_class = argmax_index(pred.probs.data(), pred.probs.size());
    pred.confidence = pred.probs[static_cast<std::size_t>(pred.argmax_class)];
    return pred;
}

}  // namespace idmne
