#include "oracle.hpp"

#include <cassert>
#include <cmath>

namespace oracle {

namespace {

double clamp_prob(double p) { return p < kProbEps ? kProbEps : (p > 1.0 ? 1.0 : p); }

Vec softmax_naive(const Vec& z) {
    double m = z[0];
    for (double v : z) m = m > v ? m : v;
    Vec e(z.size());
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        e[i] = std::exp(z[i] - m);
        s += e[i];
    }
    for (double& v : e) v /= s;
    return e;
}

int top_index(const Vec& p) {
    int best = 0;
    for (std::size_t i = 1; i < p.size(); ++i) {
        if (p[i] > p[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    }
    return best;
}

int bottom_index(const Vec& p) {
    int best = 0;
    for (std::size_t i = 1; i < p.size(); ++i) {
        if (p[i] < p[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    }
    return best;
}

Vec mix(const Vec& a, const Vec& b, double lam) {
    assert(a.size() == b.size());
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = lam * a[i] + (1.0 - lam) * b[i];
    return out;
}

Vec onehot(std::size_t k, int y) {
    Vec v(k, 0.0);
    v[static_cast<std::size_t>(y)] = 1.0;
    return v;
}

// Soft-label cross-entropy of one prediction.
double ce(const Vec& label, const Vec& p) {
    double s = 0.0;
    for (std::size_t i = 0; i < label.size(); ++i) s -= label[i] * std::log(clamp_prob(p[i]));
    return s;
}

Vec classify_features(const Vec& f, const Mat& prototypes, double temperature) {
    const std::size_t d = f.size();
    const std::size_t k = prototypes[0].size();
    double norm = 0.0;
    for (double v : f) norm += v * v;
    norm = std::sqrt(norm);
    Vec z(k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += prototypes[j][c] * f[j] / norm;
        z[c] = dot / temperature;
    }
    return softmax_naive(z);
}

}  // namespace

Vec features(const Vec& x, const std::vector<OLayer>& layers) {
    Vec h = x;
    for (const OLayer& layer : layers) {
        const std::size_t out = layer.bias.size();
        Vec next(out, 0.0);
        for (std::size_t j = 0; j < out; ++j) {
            double acc = layer.bias[j];
            for (std::size_t i = 0; i < h.size(); ++i) acc += h[i] * layer.weight[i][j];
            next[j] = layer.relu && acc < 0.0 ? 0.0 : acc;
        }
        h = std::move(next);
    }
    return h;
}

Vec predict(const Vec& x, const std::vector<OLayer>& layers, const Mat& prototypes,
            double temperature) {
    return classify_features(features(x, layers), prototypes, temperature);
}

OracleResult loss_sup(const Mat& xs, const std::vector<int>& ys, const Mat& xl,
                      const std::vector<int>& yl, const std::vector<OLayer>& layers,
                      const Mat& prototypes, double temperature, std::size_t k) {
    OracleResult r;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        r.contributions.push_back(ce(onehot(k, ys[i]), predict(xs[i], layers, prototypes,
                                                               temperature)));
    }
    for (std::size_t i = 0; i < xl.size(); ++i) {
        r.contributions.push_back(ce(onehot(k, yl[i]), predict(xl[i], layers, prototypes,
                                                               temperature)));
    }
    for (double c : r.contributions) r.value += c;
    r.value /= static_cast<double>(r.contributions.size());
    return r;
}

OracleResult loss_sdm(const Mat& xs, const std::vector<int>& ys, const Mat& xt,
                      const std::vector<int>& yt, const Vec& lambdas,
                      const std::vector<OLayer>& layers, const Mat& prototypes, double temperature,
                      std::size_t k) {
    OracleResult r;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const Vec xm = mix(xs[i], xt[i], lambdas[i]);
        const Vec ym = mix(onehot(k, ys[i]), onehot(k, yt[i]), lambdas[i]);
        r.contributions.push_back(ce(ym, predict(xm, layers, prototypes, temperature)));
    }
    for (double c : r.contributions) r.value += c;
    r.value /= static_cast<double>(r.contributions.size());
    return r;
}

OracleResult loss_mdm(const Mat& xs, const std::vector<int>& ys, const Mat& xt,
                      const std::vector<int>& yt, const Vec& lambdas,
                      const std::vector<OLayer>& layers, const Mat& prototypes, double temperature,
                      std::size_t k) {
    OracleResult r;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const Vec fm = mix(features(xs[i], layers), features(xt[i], layers), lambdas[i]);
        const Vec ym = mix(onehot(k, ys[i]), onehot(k, yt[i]), lambdas[i]);
        r.contributions.push_back(ce(ym, classify_features(fm, prototypes, temperature)));
    }
    for (double c : r.contributions) r.value += c;
    r.value /= static_cast<double>(r.contributions.size());
    return r;
}

OracleResult loss_psr(const Mat& xu, const Mat& xu_perturbed, double tau,
                      const std::vector<OLayer>& layers, const Mat& prototypes,
                      double temperature) {
    OracleResult r;
    for (std::size_t i = 0; i < xu.size(); ++i) {
        const Vec clean = predict(xu[i], layers, prototypes, temperature);
        const int pseudo = top_index(clean);
        if (clean[static_cast<std::size_t>(pseudo)] < tau) continue;
        const Vec pert = predict(xu_perturbed[i], layers, prototypes, temperature);
        r.contributions.push_back(-std::log(clamp_prob(pert[static_cast<std::size_t>(pseudo)])));
    }
    if (r.contributions.empty()) return r;
    for (double c : r.contributions) r.value += c;
    r.value /= static_cast<double>(r.contributions.size());
    return r;
}

OracleResult loss_nsr(const Mat& xu, double tau, const std::vector<OLayer>& layers,
                      const Mat& prototypes, double temperature) {
    OracleResult r;
    for (std::size_t i = 0; i < xu.size(); ++i) {
        const Vec p = predict(xu[i], layers, prototypes, temperature);
        if (p[static_cast<std::size_t>(top_index(p))] >= tau) continue;
        const int comp = bottom_index(p);
        r.contributions.push_back(
            -std::log(clamp_prob(1.0 - p[static_cast<std::size_t>(comp)])));
    }
    if (r.contributions.empty()) return r;
    for (double c : r.contributions) r.value += c;
    r.value /= static_cast<double>(r.contributions.size());
    return r;
}

OracleResult loss_pa(const Mat& xu, const Mat& xl, const std::vector<int>& yl, double tau,
                     const std::vector<OLayer>& layers, const Mat& prototypes,
                     double temperature) {
    OracleResult r;
    std::size_t masked = 0;
    for (std::size_t i = 0; i < xu.size(); ++i) {
        const Vec pi = predict(xu[i], layers, prototypes, temperature);
        const int pseudo = top_index(pi);
        if (pi[static_cast<std::size_t>(pseudo)] < tau) continue;
        ++masked;
        double contribution = 0.0;
        for (std::size_t j = 0; j < xl.size(); ++j) {
            const Vec pj = predict(xl[j], layers, prototypes, temperature);
            double inner = 0.0;
            for (std::size_t c = 0; c < pi.size(); ++c) inner += pi[c] * pj[c];
            if (inner < kProbEps) inner = kProbEps;
            if (inner > 1.0 - kProbEps) inner = 1.0 - kProbEps;
            if (pseudo == yl[j]) contribution -= std::log(inner);
            else contribution -= std::log(1.0 - inner);
        }
        r.contributions.push_back(contribution);
    }
    if (masked == 0) return r;
    for (double c : r.contributions) r.value += c;
    r.value /= static_cast<double>(masked);
    return r;
}

Vec accd_distances(const Mat& source_features, const std::vector<int>& source_labels,
                   const Mat& target_features, const std::vector<int>& target_labels,
                   std::size_t k) {
    const std::size_t d = source_features[0].size();
    Vec out(k, -1.0);
    for (std::size_t c = 0; c < k; ++c) {
        Vec cs(d, 0.0), ct(d, 0.0);
        std::size_t ns = 0, nt = 0;
        for (std::size_t i = 0; i < source_features.size(); ++i) {
            if (source_labels[i] != static_cast<int>(c)) continue;
            double norm = 0.0;
            for (double v : source_features[i]) norm += v * v;
            norm = std::sqrt(norm);
            for (std::size_t j = 0; j < d; ++j) cs[j] += source_features[i][j] / norm;
            ++ns;
        }
        for (std::size_t i = 0; i < target_features.size(); ++i) {
            if (target_labels[i] != static_cast<int>(c)) continue;
            double norm = 0.0;
            for (double v : target_features[i]) norm += v * v;
            norm = std::sqrt(norm);
            for (std::size_t j = 0; j < d; ++j) ct[j] += target_features[i][j] / norm;
            ++nt;
        }
        if (ns == 0 || nt == 0) continue;
        double dist = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = cs[j] / static_cast<double>(ns) - ct[j] / static_cast<double>(nt);
            dist += diff * diff;
        }
        out[c] = std::sqrt(dist);
    }
    return out;
}

CalibrationOracle calibration(const Vec& confidences, const std::vector<bool>& correct) {
    CalibrationOracle rep;
    rep.counts.assign(100, 0);
    std::vector<double> conf_sum(100, 0.0);
    std::vector<std::size_t> n_correct(100, 0);
    for (std::size_t i = 0; i < confidences.size(); ++i) {
        std::size_t b = static_cast<std::size_t>(confidences[i] * 100.0);
        if (b >= 100) b = 99;
        rep.counts[b] += 1;
        conf_sum[b] += confidences[i];
        if (correct[i]) n_correct[b] += 1;
    }
    for (std::size_t b = 0; b < 100; ++b) {
        if (rep.counts[b] == 0) continue;
        const double conf = conf_sum[b] / static_cast<double>(rep.counts[b]);
        const double acc = static_cast<double>(n_correct[b]) / static_cast<double>(rep.counts[b]);
        rep.ece += (static_cast<double>(rep.counts[b]) / static_cast<double>(confidences.size())) *
                   std::fabs(acc - conf);
    }
    return rep;
}

}  // namespace oracle
