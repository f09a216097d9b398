#include "idmne/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace idmne {

void Dataset::push(long id, Domain dom, SplitTag sp, int label, std::vector<double> features) {
    ids.push_back(id);
    domain.push_back(dom);
    split.push_back(sp);
    y.push_back(label);
    x.push_back(std::move(features));
}

namespace {

void rotate2(std::vector<double>& p, double cos_t, double sin_t) {
    const double x0 = p[0], y0 = p[1];
    p[0] = cos_t * x0 - sin_t * y0;
    p[1] = sin_t * x0 + cos_t * y0;
}

std::vector<double> moon_point(int label, double t, double noise_sigma, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> p(2);
    if (label == 0) {
        p[0] = std::cos(t);
        p[1] = std::sin(t);
    } else {
        p[0] = 1.0 - std::cos(t);
        p[1] = 0.5 - std::sin(t);
    }
    p[0] += noise_sigma * gauss(rng);
    p[1] += noise_sigma * gauss(rng);
    return p;
}

Dataset gen_moons(std::size_t n, Domain dom, double rotation_rad, double noise_sigma,
                  std::mt19937_64& rng) {
    Dataset ds;
    ds.k = 2;
    ds.d_in = 2;
    const double c = std::cos(rotation_rad), s = std::sin(rotation_rad);
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % 2);
        auto p = moon_point(label, angle(rng), noise_sigma, rng);
        if (rotation_rad != 0.0) rotate2(p, c, s);
        ds.push(static_cast<long>(i), dom, SplitTag::train, label, std::move(p));
    }
    return ds;
}

}  // namespace

std::pair<Dataset, Dataset> gen_two_moons_shift(std::size_t n_source, std::size_t n_target,
                                                double rotation_deg, double noise_sigma,
                                                std::uint64_t seed) {
    if (n_source == 0 || n_target == 0) {
        throw ConfigError("gen_two_moons_shift: sample counts must be positive");
    }
    if (rotation_deg < 0.0 || rotation_deg > 90.0) {
        throw ConfigError("gen_two_moons_shift: rotation must lie in [0, 90] degrees");
    }
    if (noise_sigma < 0.0) throw ConfigError("gen_two_moons_shift: noise_sigma must be >= 0");
    std::mt19937_64 rng(seed);
    const double rad = rotation_deg * std::numbers::pi / 180.0;
    Dataset source = gen_moons(n_source, Domain::source, 0.0, noise_sigma, rng);
    Dataset target = gen_moons(n_target, Domain::target, rad, noise_sigma, rng);
    return {std::move(source), std::move(target)};
}

std::pair<Dataset, Dataset> gen_blobs_shift(const BlobsSpec& spec) {
    if (spec.k < 2) throw ConfigError("gen_blobs_shift: k must be >= 2");
    if (spec.d_in == 0) throw ConfigError("gen_blobs_shift: d_in must be positive");
    if (spec.n_source == 0 || spec.n_target == 0) {
        throw ConfigError("gen_blobs_shift: sample counts must be positive");
    }
    if (!spec.shift.empty() && spec.shift.size() != spec.d_in) {
        throw ConfigError("gen_blobs_shift: shift vector width " + std::to_string(spec.shift.size()) +
                          " != d_in " + std::to_string(spec.d_in));
    }
    if (spec.scale < 0.0) throw ConfigError("gen_blobs_shift: scale must be >= 0");

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<std::vector<double>> means(spec.k, std::vector<double>(spec.d_in));
    for (auto& mu : means) {
        for (double& v : mu) v = spec.class_sep * gauss(rng);
    }

    auto gen = [&](std::size_t n, Domain dom, bool shifted) {
        Dataset ds;
        ds.k = spec.k;
        ds.d_in = spec.d_in;
        const double noise = shifted ? spec.scale : 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const int label = static_cast<int>(i % spec.k);
            std::vector<double> p(spec.d_in);
            for (std::size_t j = 0; j < spec.d_in; ++j) {
                p[j] = means[static_cast<std::size_t>(label)][j] + noise * gauss(rng);
                if (shifted && !spec.shift.empty()) p[j] += spec.shift[j];
            }
            ds.push(static_cast<long>(i), dom, SplitTag::train, label, std::move(p));
        }
        return ds;
    };

    Dataset source = gen(spec.n_source, Domain::source, false);
    Dataset target = gen(spec.n_target, Domain::target, true);
    return {std::move(source), std::move(target)};
}

FewShotSplit split_few_shot(const Dataset& target, const ShotSpec& spec, double eval_fraction) {
    if (spec.shots_per_class == 0) throw ConfigError("split_few_shot: shots_per_class must be >= 1");
    if (eval_fraction < 0.0 || eval_fraction >= 1.0) {
        throw ConfigError("split_few_shot: eval_fraction must lie in [0, 1)");
    }
    if (target.k < 2) throw ConfigError("split_few_shot: target dataset has no class count");

    std::vector<std::vector<std::size_t>> by_class(target.k);
    std::vector<std::size_t> pretagged_eval;
    for (std::size_t i = 0; i < target.size(); ++i) {
        if (target.split[i] == SplitTag::eval) {
            pretagged_eval.push_back(i);
            continue;
        }
        if (target.y[i] >= 0) {
            by_class[static_cast<std::size_t>(target.y[i])].push_back(i);
        }
    }

    std::mt19937_64 rng(spec.seed);
    FewShotSplit out;
    out.labeled.k = out.eval.k = out.unlabeled.k = target.k;
    out.labeled.d_in = out.eval.d_in = out.unlabeled.d_in = target.d_in;

    std::vector<std::size_t> to_unlabeled;
    for (std::size_t c = 0; c < target.k; ++c) {
        auto& pool = by_class[c];
        if (pool.size() < spec.shots_per_class + 1) {
            throw ConfigError("split_few_shot: class " + std::to_string(c) + " has only " +
                              std::to_string(pool.size()) + " labeled target samples, needs " +
                              std::to_string(spec.shots_per_class + 1));
        }
        std::shuffle(pool.begin(), pool.end(), rng);
        for (std::size_t s = 0; s < spec.shots_per_class; ++s) {
            const std::size_t i = pool[s];
            out.labeled.ids.push_back(target.ids[i]);
            out.labeled.x.push_back(target.x[i]);
            out.labeled.y.push_back(target.y[i]);
        }
        const std::size_t rest = pool.size() - spec.shots_per_class;
        const std::size_t n_eval =
            static_cast<std::size_t>(std::floor(eval_fraction * static_cast<double>(rest)));
        for (std::size_t s = 0; s < rest; ++s) {
            const std::size_t i = pool[spec.shots_per_class + s];
            if (s < n_eval) {
                out.eval.ids.push_back(target.ids[i]);
                out.eval.x.push_back(target.x[i]);
                out.eval.y.push_back(target.y[i]);
            } else {
                to_unlabeled.push_back(i);
            }
        }
    }

    // Unlabeled rows of the input (no ground truth) always belong to D_u.
    for (std::size_t i = 0; i < target.size(); ++i) {
        if (target.split[i] == SplitTag::train && target.y[i] < 0) to_unlabeled.push_back(i);
    }
    std::sort(to_unlabeled.begin(), to_unlabeled.end());
    for (std::size_t i : to_unlabeled) {
        out.unlabeled.ids.push_back(target.ids[i]);
        out.unlabeled.x.push_back(target.x[i]);
        out.unlabeled.audit_y.push_back(target.y[i]);
    }

    for (std::size_t i : pretagged_eval) {
        if (target.y[i] < 0) {
            throw ConfigError("split_few_shot: eval-tagged sample id " +
                              std::to_string(target.ids[i]) + " has no label");
        }
        out.eval.ids.push_back(target.ids[i]);
        out.eval.x.push_back(target.x[i]);
        out.eval.y.push_back(target.y[i]);
    }
    return out;
}

LabeledSet as_labeled(const Dataset& ds) {
    LabeledSet set;
    set.k = ds.k;
    set.d_in = ds.d_in;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.y[i] < 0) {
            throw ConfigError("as_labeled: sample id " + std::to_string(ds.ids[i]) +
                              " has no label");
        }
        set.ids.push_back(ds.ids[i]);
        set.x.push_back(ds.x[i]);
        set.y.push_back(ds.y[i]);
    }
    return set;
}

std::vector<double> feature_std(const std::vector<std::vector<double>>& x) {
    if (x.empty()) throw ConfigError("feature_std: empty pool");
    const std::size_t d = x[0].size();
    std::vector<double> mean(d, 0.0), var(d, 0.0);
    for (const auto& row : x) {
        for (std::size_t j = 0; j < d; ++j) mean[j] += row[j];
    }
    for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(x.size());
    for (const auto& row : x) {
        for (std::size_t j = 0; j < d; ++j) {
            const double dv = row[j] - mean[j];
            var[j] += dv * dv;
        }
    }
    for (std::size_t j = 0; j < d; ++j) var[j] = std::sqrt(var[j] / static_cast<double>(x.size()));
    return var;
}

std::vector<double> perturb(const std::vector<double>& x, double strength,
                            const std::vector<double>& fstd, std::mt19937_64& rng) {
    if (strength < 0.0) throw ConfigError("perturb: strength must be >= 0");
    if (fstd.size() != x.size()) {
        throw DimensionError("perturb: feature std width " + std::to_string(fstd.size()) +
                             " != input width " + std::to_string(x.size()));
    }
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
        // Draw even when strength is zero so switching the augmentation off
        // does not shift the rng stream of unrelated draws.
        const double noise = gauss(rng);
        out[j] = x[j] + strength * fstd[j] * noise;
    }
    return out;
}

std::vector<std::size_t> sample_indices(std::size_t pool, std::size_t n, std::mt19937_64& rng) {
    if (pool == 0) throw ConfigError("sample_indices: empty pool");
    std::vector<std::size_t> out(n);
    if (pool < n) {
        std::uniform_int_distribution<std::size_t> pick(0, pool - 1);
        for (std::size_t i = 0; i < n; ++i) out[i] = pick(rng);
        return out;
    }
    // Partial Fisher-Yates over an index array.
    std::vector<std::size_t> idx(pool);
    for (std::size_t i = 0; i < pool; ++i) idx[i] = i;
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool - 1);
        std::swap(idx[i], idx[pick(rng)]);
        out[i] = idx[i];
    }
    return out;
}

LabeledBatch sample_labeled(const LabeledSet& set, std::size_t n, std::mt19937_64& rng) {
    auto idx = sample_indices(set.size(), n, rng);
    LabeledBatch batch;
    batch.x = Tensor::zeros({n, set.d_in});
    batch.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < set.d_in; ++j) batch.x.at(i, j) = set.x[idx[i]][j];
        batch.y[i] = set.y[idx[i]];
    }
    return batch;
}

UnlabeledBatch sample_unlabeled(const UnlabeledSet& set, std::size_t n, double perturb_strength,
                                const std::vector<double>& fstd, std::mt19937_64& rng) {
    UnlabeledBatch batch;
    batch.indices = sample_indices(set.size(), n, rng);
    batch.x = Tensor::zeros({n, set.d_in});
    batch.x_perturbed = Tensor::zeros({n, set.d_in});
    for (std::size_t i = 0; i < n; ++i) {
        const auto& row = set.x[batch.indices[i]];
        for (std::size_t j = 0; j < set.d_in; ++j) batch.x.at(i, j) = row[j];
        auto pert = perturb(row, perturb_strength, fstd, rng);
        for (std::size_t j = 0; j < set.d_in; ++j) batch.x_perturbed.at(i, j) = pert[j];
    }
    return batch;
}

MiniBatches sample_batches(const LabeledSet& source, const LabeledSet& labeled,
                           const LabeledSet& expanded, const UnlabeledSet& unlabeled,
                           const BatchPlan& plan, double perturb_strength,
                           const std::vector<double>& fstd, std::mt19937_64& rng) {
    MiniBatches out;
    out.source = sample_labeled(source, plan.source, rng);
    out.target_labeled = sample_labeled(labeled, plan.target_labeled, rng);
    out.target_expanded = sample_labeled(expanded, plan.target_expanded, rng);
    out.target_unlabeled = sample_unlabeled(unlabeled, plan.target_unlabeled, perturb_strength,
                                            fstd, rng);
    return out;
}

namespace {

const char* domain_name(Domain d) { return d == Domain::source ? "source" : "target"; }
const char* split_name(SplitTag s) { return s == SplitTag::train ? "train" : "eval"; }

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

std::string expected_header(std::size_t d) {
    std::string h = "id,domain,split,label";
    for (std::size_t j = 0; j < d; ++j) h += ",f" + std::to_string(j);
    return h;
}

}  // namespace

void save_csv(const std::string& path, const Dataset& ds) {
    std::ofstream out(path);
    if (!out) throw ParseError("save_csv: cannot open " + path);
    out << expected_header(ds.d_in) << "\n";
    char buf[48];
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out << ds.ids[i] << ',' << domain_name(ds.domain[i]) << ',' << split_name(ds.split[i]) << ',';
        if (ds.y[i] >= 0) out << ds.y[i];
        for (std::size_t j = 0; j < ds.d_in; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", ds.x[i][j]);
            out << ',' << buf;
        }
        out << "\n";
    }
}

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("load_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("load_csv: " + path + " is empty");

    auto header = split_line(line);
    if (header.size() < 5 || header[0] != "id" || header[1] != "domain" || header[2] != "split" ||
        header[3] != "label") {
        throw ParseError("load_csv: bad header, expected \"" + expected_header(1) + ",...\"");
    }
    const std::size_t d = header.size() - 4;
    for (std::size_t j = 0; j < d; ++j) {
        if (header[4 + j] != "f" + std::to_string(j)) {
            throw ParseError("load_csv: bad header, expected column f" + std::to_string(j) +
                             " at position " + std::to_string(4 + j));
        }
    }

    Dataset ds;
    ds.d_in = d;
    std::size_t lineno = 1;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split_line(line);
        if (cells.size() != 4 + d) {
            throw ParseError("load_csv: line " + std::to_string(lineno) + ": expected " +
                             std::to_string(4 + d) + " fields, got " + std::to_string(cells.size()));
        }
        try {
            const long id = std::stol(cells[0]);
            Domain dom;
            if (cells[1] == "source") dom = Domain::source;
            else if (cells[1] == "target") dom = Domain::target;
            else throw ParseError("unknown domain \"" + cells[1] + "\"");
            SplitTag sp;
            if (cells[2] == "train") sp = SplitTag::train;
            else if (cells[2] == "eval") sp = SplitTag::eval;
            else throw ParseError("unknown split \"" + cells[2] + "\"");
            int label = -1;
            if (!cells[3].empty()) {
                label = std::stoi(cells[3]);
                if (label < 0) throw ParseError("negative label");
            }
            std::vector<double> row(d);
            for (std::size_t j = 0; j < d; ++j) {
                std::size_t used = 0;
                row[j] = std::stod(cells[4 + j], &used);
                if (used != cells[4 + j].size()) throw ParseError("bad number \"" + cells[4 + j] + "\"");
            }
            max_label = std::max(max_label, label);
            ds.push(id, dom, sp, label, std::move(row));
        } catch (const ParseError& e) {
            throw ParseError("load_csv: line " + std::to_string(lineno) + ": " + e.what());
        } catch (const std::exception& e) {
            throw ParseError("load_csv: line " + std::to_string(lineno) + ": malformed field (" +
                             e.what() + ")");
        }
    }
    if (max_label < 1) {
        throw ParseError("load_csv: " + path + " holds fewer than two classes");
    }
    ds.k = static_cast<std::size_t>(max_label) + 1;
    return ds;
}

std::pair<Dataset, Dataset> split_by_domain(const Dataset& ds) {
    Dataset source, target;
    source.k = target.k = ds.k;
    source.d_in = target.d_in = ds.d_in;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        Dataset& dst = ds.domain[i] == Domain::source ? source : target;
        dst.push(ds.ids[i], ds.domain[i], ds.split[i], ds.y[i], ds.x[i]);
    }
    return {std::move(source), std::move(target)};
}

}  // namespace idmne
