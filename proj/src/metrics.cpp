#include "idmne/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace idmne {

double accuracy(const ModelParams& params, const LabeledSet& eval_set) {
    if (eval_set.size() == 0) throw ConfigError("accuracy: empty evaluation set");
    Tensor p = predict_batch(params, Tensor::from_rows(eval_set.x));
    const std::size_t k = p.cols();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < eval_set.size(); ++i) {
        if (argmax_index(&p.data[i * k], k) == eval_set.y[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(eval_set.size());
}

namespace {

// Per-class centroids of the l2-normalized features; classifier geometry
// lives on the sphere, so alignment is measured there.
std::vector<std::vector<double>> class_centroids(const ModelParams& params, const Tensor& x,
                                                 const std::vector<int>& y, std::size_t k) {
    Tensor f = l2_normalize(bind_inference(params).extract(x));
    const std::size_t d = f.cols();
    std::vector<std::vector<double>> centroids(k);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] < 0) continue;
        auto& c = centroids[static_cast<std::size_t>(y[i])];
        if (c.empty()) c.assign(d, 0.0);
        for (std::size_t j = 0; j < d; ++j) c[j] += f.at(i, j);
        ++counts[static_cast<std::size_t>(y[i])];
    }
    for (std::size_t kc = 0; kc < k; ++kc) {
        for (double& v : centroids[kc]) v /= static_cast<double>(counts[kc]);
    }
    return centroids;
}

double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double d = a[j] - b[j];
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace

void AccdState::restore(std::vector<double> baselines) {
    initial_ = std::move(baselines);
    initialized_ = !initial_.empty();
}

double AccdState::update(const ModelParams& params, const LabeledSet& source,
                         const Tensor& target_x, const std::vector<int>& target_y) {
    const std::size_t k = params.k();
    auto cs = class_centroids(params, Tensor::from_rows(source.x), source.y, k);
    auto ct = class_centroids(params, target_x, target_y, k);

    std::vector<double> dist(k, -1.0);
    for (std::size_t c = 0; c < k; ++c) {
        if (cs[c].empty() || ct[c].empty()) {
            std::cerr << "warning: accd skipping class " << c << " (absent in a domain)\n";
            continue;
        }
        dist[c] = euclidean(cs[c], ct[c]);
    }

    if (!initialized_) {
        initial_ = dist;
        for (std::size_t c = 0; c < k; ++c) {
            if (initial_[c] == 0.0) {
                std::cerr << "warning: accd class " << c
                          << " has zero initial centroid distance, skipping it\n";
                initial_[c] = -1.0;
            }
        }
        initialized_ = true;
    }

    double acc = 0.0;
    std::size_t used = 0;
    for (std::size_t c = 0; c < k; ++c) {
        if (dist[c] < 0.0 || initial_[c] <= 0.0) continue;
        acc += dist[c] / initial_[c];
        ++used;
    }
    if (used == 0) throw NumericError("accd: no class present in both domains");
    return acc / static_cast<double>(used);
}

CalibrationReport calibration(const ModelParams& params, const LabeledSet& eval_set) {
    CalibrationReport rep;
    if (eval_set.size() == 0) return rep;
    Tensor p = predict_batch(params, Tensor::from_rows(eval_set.x));
    const std::size_t k = p.cols();
    for (std::size_t i = 0; i < eval_set.size(); ++i) {
        const int pred = argmax_index(&p.data[i * k], k);
        const double conf = p.at(i, static_cast<std::size_t>(pred));
        std::size_t b = static_cast<std::size_t>(conf * static_cast<double>(kCalibrationBins));
        if (b >= kCalibrationBins) b = kCalibrationBins - 1;  // conf == 1 lands in the last bin
        rep.bins[b].count += 1;
        rep.bins[b].conf_sum += conf;
        if (pred == eval_set.y[i]) rep.bins[b].correct += 1;
    }
    rep.n = eval_set.size();
    double ece = 0.0;
    for (const auto& bin : rep.bins) {
        if (bin.count == 0) continue;
        const double conf = bin.conf_sum / static_cast<double>(bin.count);
        const double acc = static_cast<double>(bin.correct) / static_cast<double>(bin.count);
        ece += (static_cast<double>(bin.count) / static_cast<double>(rep.n)) * std::fabs(acc - conf);
    }
    rep.ece = ece;
    return rep;
}

const char* const kMetricsHeader =
    "epoch,iter,lr,l_sup,l_sdm,l_mdm,l_psr,l_nsr,l_pa,l_total,acc_eval,accd,ece,pl_count,"
    "pl_correct,pl_acc";

std::string format_sig9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string metrics_row(const EpochMetrics& m) {
    std::ostringstream os;
    os << m.epoch << ',' << m.iter << ',' << format_sig9(m.lr) << ',' << format_sig9(m.l_sup) << ','
       << format_sig9(m.l_sdm) << ',' << format_sig9(m.l_mdm) << ',' << format_sig9(m.l_psr) << ','
       << format_sig9(m.l_nsr) << ',' << format_sig9(m.l_pa) << ',' << format_sig9(m.l_total) << ','
       << format_sig9(m.acc_eval) << ',' << format_sig9(m.accd) << ',' << format_sig9(m.ece) << ','
       << m.pl_count << ',' << m.pl_correct << ',';
    if (m.pl_acc) os << format_sig9(*m.pl_acc);
    return os.str();
}

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& history) {
    std::ofstream out(path);
    if (!out) throw ParseError("write_metrics_csv: cannot open " + path);
    out << kMetricsHeader << "\n";
    for (const auto& m : history) out << metrics_row(m) << "\n";
}

std::vector<EpochMetrics> read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("read_metrics_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader) {
        throw ParseError("read_metrics_csv: " + path + ": unexpected header");
    }
    std::vector<EpochMetrics> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cur;
        for (char ch : line) {
            if (ch == ',') {
                cells.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(ch);
            }
        }
        cells.push_back(cur);
        if (cells.size() != 16) {
            throw ParseError("read_metrics_csv: line " + std::to_string(lineno) + ": expected 16 fields");
        }
        try {
            EpochMetrics m;
            m.epoch = std::stoul(cells[0]);
            m.iter = std::stoul(cells[1]);
            m.lr = std::stod(cells[2]);
            m.l_sup = std::stod(cells[3]);
            m.l_sdm = std::stod(cells[4]);
            m.l_mdm = std::stod(cells[5]);
            m.l_psr = std::stod(cells[6]);
            m.l_nsr = std::stod(cells[7]);
            m.l_pa = std::stod(cells[8]);
            m.l_total = std::stod(cells[9]);
            m.acc_eval = std::stod(cells[10]);
            m.accd = std::stod(cells[11]);
            m.ece = std::stod(cells[12]);
            m.pl_count = std::stoul(cells[13]);
            m.pl_correct = std::stoul(cells[14]);
            if (!cells[15].empty()) m.pl_acc = std::stod(cells[15]);
            out.push_back(m);
        } catch (const std::exception& e) {
            throw ParseError("read_metrics_csv: line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace idmne
