#include "idmne/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include "idmne/mixup.hpp"

namespace idmne {

void TrainConfig::validate() const {
    if (iters_per_epoch == 0) throw ConfigError("config: iters_per_epoch must be >= 1");
    if (!(lr_eta0 > 0.0)) throw ConfigError("config: lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("config: momentum must lie in [0, 1)");
    if (weight_decay < 0.0) throw ConfigError("config: weight_decay must be >= 0");
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("config: tau must lie in (0, 1]");
    if (!(alpha > 0.0)) throw ConfigError("config: alpha must be positive");
    if (!(temperature > 0.0)) throw ConfigError("config: temperature must be positive");
    if (batch.source == 0 || batch.target_labeled == 0 || batch.target_expanded == 0 ||
        batch.target_unlabeled == 0) {
        throw ConfigError("config: all batch sizes must be >= 1");
    }
    if (perturb_strength < 0.0) throw ConfigError("config: perturb_strength must be >= 0");
    if (hidden.empty()) throw ConfigError("config: extractor needs at least one layer width");
    for (std::size_t w : hidden) {
        if (w == 0) throw ConfigError("config: layer widths must be positive");
    }
}

double lr_at(std::size_t t, double eta0) {
    return eta0 / std::pow(1.0 + 0.0001 * static_cast<double>(t), 0.75);
}

TrainState init_state(const TrainConfig& cfg, const TrainDatasets& data) {
    if (data.source.size() == 0 || data.target_labeled.size() == 0 ||
        data.target_unlabeled.size() == 0) {
        throw ConfigError("init_state: every training pool must be non-empty");
    }
    ModelSpec spec;
    spec.d_in = data.source.d_in;
    spec.widths = cfg.hidden;
    spec.k = data.source.k;
    spec.temperature = cfg.temperature;

    TrainState st;
    st.params = init_params(spec, cfg.seed + 2);
    st.rng_data.seed(cfg.seed);
    st.rng_mixup.seed(cfg.seed + 1);
    for (Tensor* t : param_tensors(st.params)) {
        st.velocity.emplace_back(t->size(), 0.0);
    }
    return st;
}

std::vector<Tensor*> param_tensors(ModelParams& params) {
    std::vector<Tensor*> out;
    for (Layer& layer : params.layers) {
        out.push_back(&layer.weight);
        out.push_back(&layer.bias);
    }
    out.push_back(&params.prototypes);
    return out;
}

std::vector<std::vector<double>> collect_gradients(const Tape& tape, const BoundModel& bound) {
    std::vector<std::vector<double>> grads;
    for (const Layer& layer : bound.layers) {
        grads.push_back(tape.grad(layer.weight));
        grads.push_back(tape.grad(layer.bias));
    }
    grads.push_back(tape.grad(bound.prototypes));
    return grads;
}

void sgd_step(TrainState& state, const std::vector<std::vector<double>>& grads, std::size_t t,
              const TrainConfig& cfg) {
    auto tensors = param_tensors(state.params);
    if (grads.size() != tensors.size()) {
        throw DimensionError("sgd_step: " + std::to_string(grads.size()) + " gradients for " +
                             std::to_string(tensors.size()) + " parameter tensors");
    }
    const double lr = lr_at(t, cfg.lr_eta0);
    for (std::size_t p = 0; p < tensors.size(); ++p) {
        Tensor& theta = *tensors[p];
        const auto& g = grads[p];
        auto& v = state.velocity[p];
        if (g.size() != theta.size()) {
            throw DimensionError("sgd_step: gradient size mismatch on parameter " +
                                 std::to_string(p));
        }
        const bool is_prototypes = p + 1 == tensors.size();
        const double wd = (is_prototypes && !cfg.decay_prototypes) ? 0.0 : cfg.weight_decay;
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!std::isfinite(g[i])) {
                throw NumericError("sgd_step: non-finite gradient on parameter tensor " +
                                   std::to_string(p));
            }
            v[i] = cfg.momentum * v[i] + (g[i] + wd * theta.data[i]);
            theta.data[i] -= lr * v[i];
        }
    }
}

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

PairBatch build_pairs(const LabeledBatch& bs, const LabeledBatch& blp, double alpha,
                      std::mt19937_64& rng) {
    const std::size_t n_pair = std::min(bs.size(), blp.size());
    auto perm_s = shuffled_indices(bs.size(), rng);
    auto perm_t = shuffled_indices(blp.size(), rng);
    PairBatch pairs;
    const std::size_t d = bs.x.cols();
    pairs.xs = Tensor::zeros({n_pair, d});
    pairs.xt = Tensor::zeros({n_pair, d});
    pairs.ys.resize(n_pair);
    pairs.yt.resize(n_pair);
    for (std::size_t i = 0; i < n_pair; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            pairs.xs.at(i, j) = bs.x.at(perm_s[i], j);
            pairs.xt.at(i, j) = blp.x.at(perm_t[i], j);
        }
        pairs.ys[i] = bs.y[perm_s[i]];
        pairs.yt[i] = blp.y[perm_t[i]];
    }
    pairs.lambda_sdm.resize(n_pair);
    pairs.lambda_mdm.resize(n_pair);
    for (std::size_t i = 0; i < n_pair; ++i) pairs.lambda_sdm[i] = sample_lambda(alpha, rng);
    for (std::size_t i = 0; i < n_pair; ++i) pairs.lambda_mdm[i] = sample_lambda(alpha, rng);
    return pairs;
}

void check_terms_finite(const LossBreakdown& b) {
    struct Named {
        const char* name;
        double v;
    };
    const Named terms[] = {{"l_sup", b.l_sup}, {"l_sdm", b.l_sdm}, {"l_mdm", b.l_mdm},
                           {"l_psr", b.l_psr}, {"l_nsr", b.l_nsr}, {"l_pa", b.l_pa},
                           {"total", b.total}};
    for (const auto& t : terms) {
        if (!std::isfinite(t.v)) {
            throw NumericError(std::string("loss term ") + t.name + " is non-finite");
        }
    }
}

// Failure path only: re-runs every active term in isolation to name the one
// whose backward pass produced a non-finite gradient.
std::string diagnose_bad_gradient(const ModelParams& params, const StepBatches& batches,
                                  const LossSwitches& sw, const LossWeights& w, double tau,
                                  std::size_t k) {
    struct Term {
        const char* name;
        bool active;
    };
    const Term terms[] = {
        {"l_sup", true},
        {"l_sdm", sw.sdm && w.beta != 0.0},
        {"l_mdm", sw.mdm && w.beta != 0.0},
        {"l_psr", sw.psr && w.gamma != 0.0},
        {"l_nsr", sw.nsr && w.gamma != 0.0},
        {"l_pa", sw.pa && w.gamma != 0.0},
    };
    for (const auto& term : terms) {
        if (!term.active) continue;
        Tape tape;
        BoundModel bound = bind(tape, params);
        Tensor t = Tensor::scalar(0.0);
        const std::string name = term.name;
        if (name == "l_sup") t = loss_sup(bound, batches.batch_s, batches.batch_l);
        else if (name == "l_sdm") t = loss_sdm(bound, batches.pairs, k);
        else if (name == "l_mdm") t = loss_mdm(bound, batches.pairs, k);
        else if (name == "l_psr") t = loss_psr(bound, params, batches.batch_u, tau);
        else if (name == "l_nsr") t = loss_nsr(bound, params, batches.batch_u, tau);
        else if (name == "l_pa") t = loss_pa(bound, params, batches.batch_u, batches.batch_lp, tau);
        if (!t.on_tape()) continue;
        tape.backward(t);
        for (const auto& g : collect_gradients(tape, bound)) {
            for (double v : g) {
                if (!std::isfinite(v)) return name;
            }
        }
    }
    return "unknown";
}

}  // namespace

EpochResult train_epoch(TrainState& state, const TrainDatasets& data, const TrainConfig& cfg,
                        AccdState& accd_state, const std::vector<double>& fstd) {
    const std::size_t k = data.source.k;
    const int epoch_1based = static_cast<int>(state.epoch) + 1;

    EpochResult result;
    if (cfg.enable_pseudo) {
        result.pseudo = assign_pseudo_labels(data.target_unlabeled, state.params, cfg.tau,
                                             epoch_1based);
    }
    LabeledSet expanded = expand_labeled_set(data.target_labeled, data.target_unlabeled,
                                             result.pseudo);

    LossWeights weights{cfg.beta, cfg.gamma};
    LossBreakdown sums;
    bool degenerate_logged = false;

    for (std::size_t it = 0; it < cfg.iters_per_epoch; ++it) {
        MiniBatches mb = sample_batches(data.source, data.target_labeled, expanded,
                                        data.target_unlabeled, cfg.batch, cfg.perturb_strength,
                                        fstd, state.rng_data);
        StepBatches batches;
        batches.batch_s = std::move(mb.source);
        batches.batch_l = std::move(mb.target_labeled);
        batches.batch_lp = std::move(mb.target_expanded);
        batches.batch_u = std::move(mb.target_unlabeled);
        batches.pairs = build_pairs(batches.batch_s, batches.batch_lp, cfg.alpha, state.rng_mixup);

        Tape tape;
        BoundModel bound = bind(tape, state.params);
        StepLoss step = loss_total(bound, state.params, batches, cfg.switches, weights, cfg.tau, k);
        check_terms_finite(step.breakdown);
        if (step.degenerate_pairs && !degenerate_logged) {
            std::cerr << "note: epoch " << epoch_1based << ": no source/target pairs this step\n";
            degenerate_logged = true;
        }

        tape.backward(step.total);
        auto grads = collect_gradients(tape, bound);
        for (const auto& g : grads) {
            for (double v : g) {
                if (!std::isfinite(v)) {
                    throw NumericError("non-finite gradient produced by term " +
                                       diagnose_bad_gradient(state.params, batches, cfg.switches,
                                                             weights, cfg.tau, k));
                }
            }
        }
        sgd_step(state, grads, state.t, cfg);
        state.t += 1;

        sums.l_sup += step.breakdown.l_sup;
        sums.l_sdm += step.breakdown.l_sdm;
        sums.l_mdm += step.breakdown.l_mdm;
        sums.l_psr += step.breakdown.l_psr;
        sums.l_nsr += step.breakdown.l_nsr;
        sums.l_pa += step.breakdown.l_pa;
        sums.total += step.breakdown.total;
    }
    state.epoch += 1;

    const double n = static_cast<double>(cfg.iters_per_epoch);
    EpochMetrics& m = result.metrics;
    m.epoch = state.epoch;
    m.iter = state.t;
    m.lr = lr_at(state.t - 1, cfg.lr_eta0);
    m.l_sup = sums.l_sup / n;
    m.l_sdm = sums.l_sdm / n;
    m.l_mdm = sums.l_mdm / n;
    m.l_psr = sums.l_psr / n;
    m.l_nsr = sums.l_nsr / n;
    m.l_pa = sums.l_pa / n;
    m.l_total = sums.total / n;
    m.acc_eval = accuracy(state.params, data.eval);

    bool audit_available = false;
    for (int y : data.target_unlabeled.audit_y) {
        if (y >= 0) {
            audit_available = true;
            break;
        }
    }
    if (audit_available) {
        m.accd = accd_state.update(state.params, data.source,
                                   Tensor::from_rows(data.target_unlabeled.x),
                                   data.target_unlabeled.audit_y);
    } else {
        m.accd = std::nan("");
    }
    m.ece = calibration(state.params, data.eval).ece;

    PseudoStats stats = pseudo_label_accuracy(result.pseudo, data.target_unlabeled.audit_y);
    m.pl_count = stats.count;
    m.pl_correct = stats.correct;
    m.pl_acc = stats.accuracy;
    return result;
}

RunResult run(const TrainConfig& cfg, const TrainDatasets& data, const EpochHook& hook) {
    cfg.validate();
    TrainState state = init_state(cfg, data);

    // Freeze the ACCD baselines on the untrained model (audit labels
    // permitting) so every later epoch is reported relative to epoch 0.
    AccdState accd_state;
    bool audit_available = false;
    for (int y : data.target_unlabeled.audit_y) {
        if (y >= 0) {
            audit_available = true;
            break;
        }
    }
    if (audit_available) {
        accd_state.update(state.params, data.source, Tensor::from_rows(data.target_unlabeled.x),
                          data.target_unlabeled.audit_y);
    }
    return run_from(std::move(state), cfg, data, std::move(accd_state), hook);
}

RunResult run_from(TrainState state, const TrainConfig& cfg, const TrainDatasets& data,
                   AccdState accd_state, const EpochHook& hook) {
    cfg.validate();
    const std::vector<double> fstd = feature_std(data.target_unlabeled.x);
    RunResult result;
    while (state.epoch < cfg.epochs) {
        EpochResult er = train_epoch(state, data, cfg, accd_state, fstd);
        result.history.push_back(er.metrics);
        if (hook) hook(state, accd_state, er);
        result.pseudo_history.push_back(std::move(er.pseudo));
    }
    result.params = std::move(state.params);
    return result;
}

namespace {

constexpr char kMagic[6] = {'I', 'D', 'M', 'N', 'E', '1'};

void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_f64(std::ostream& os, double v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_f64s(std::ostream& os, const std::vector<double>& v) {
    write_u64(os, v.size());
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
}

void write_str(std::ostream& os, const std::string& s) {
    write_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw ParseError("checkpoint: truncated file");
    return v;
}

double read_f64(std::istream& is) {
    double v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw ParseError("checkpoint: truncated file");
    return v;
}

std::vector<double> read_f64s(std::istream& is) {
    const std::uint64_t n = read_u64(is);
    if (n > (1ull << 32)) throw ParseError("checkpoint: implausible array length");
    std::vector<double> v(n);
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * 8));
    if (!is) throw ParseError("checkpoint: truncated file");
    return v;
}

std::string read_str(std::istream& is) {
    const std::uint64_t n = read_u64(is);
    if (n > (1ull << 24)) throw ParseError("checkpoint: implausible string length");
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) throw ParseError("checkpoint: truncated file");
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params, std::uint64_t seed,
                     std::uint64_t config_hash, const CheckpointExtra* extra) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ParseError("save_checkpoint: cannot open " + path);
    os.write(kMagic, sizeof kMagic);
    os.put(extra && extra->present ? 1 : 0);
    write_u64(os, seed);
    write_u64(os, config_hash);
    write_f64(os, params.temperature);
    write_u64(os, params.layers.size());
    for (const Layer& layer : params.layers) {
        os.put(layer.act == Activation::relu ? 1 : 0);
        write_u64(os, layer.weight.shape[0]);
        write_u64(os, layer.weight.shape[1]);
        write_f64s(os, layer.weight.data);
        write_f64s(os, layer.bias.data);
    }
    write_u64(os, params.prototypes.shape[0]);
    write_u64(os, params.prototypes.shape[1]);
    write_f64s(os, params.prototypes.data);
    if (extra && extra->present) {
        write_u64(os, extra->epoch);
        write_u64(os, extra->t);
        write_u64(os, extra->velocity.size());
        for (const auto& v : extra->velocity) write_f64s(os, v);
        write_str(os, extra->rng_data_state);
        write_str(os, extra->rng_mixup_state);
        write_f64s(os, extra->accd_initial);
    }
    if (!os) throw ParseError("save_checkpoint: write failed on " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParseError("load_checkpoint: cannot open " + path);
    char magic[6] = {};
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        throw ParseError("load_checkpoint: " + path + " is not an IDMNE1 checkpoint");
    }
    const int has_extra = is.get();
    if (has_extra != 0 && has_extra != 1) throw ParseError("checkpoint: bad state flag");

    Checkpoint ck;
    ck.seed = read_u64(is);
    ck.config_hash = read_u64(is);
    ck.params.temperature = read_f64(is);
    if (!(ck.params.temperature > 0.0)) throw ParseError("checkpoint: bad temperature");
    const std::uint64_t n_layers = read_u64(is);
    if (n_layers == 0 || n_layers > 64) throw ParseError("checkpoint: implausible layer count");
    for (std::uint64_t li = 0; li < n_layers; ++li) {
        Layer layer;
        const int act = is.get();
        if (act != 0 && act != 1) throw ParseError("checkpoint: bad activation tag");
        layer.act = act == 1 ? Activation::relu : Activation::linear;
        const std::uint64_t in = read_u64(is);
        const std::uint64_t out = read_u64(is);
        auto w = read_f64s(is);
        if (w.size() != in * out) throw ParseError("checkpoint: layer weight size mismatch");
        layer.weight = Tensor({in, out}, std::move(w));
        auto b = read_f64s(is);
        if (b.size() != out) throw ParseError("checkpoint: layer bias size mismatch");
        layer.bias = Tensor({out}, std::move(b));
        ck.params.layers.push_back(std::move(layer));
    }
    const std::uint64_t pr = read_u64(is);
    const std::uint64_t pc = read_u64(is);
    auto proto = read_f64s(is);
    if (proto.size() != pr * pc) throw ParseError("checkpoint: prototype size mismatch");
    ck.params.prototypes = Tensor({pr, pc}, std::move(proto));
    if (ck.params.layers.back().weight.shape[1] != pr) {
        throw ParseError("checkpoint: prototype rows do not match feature width");
    }
    if (pc < 2) throw ParseError("checkpoint: fewer than two classes");

    if (has_extra == 1) {
        ck.extra.present = true;
        ck.extra.epoch = read_u64(is);
        ck.extra.t = read_u64(is);
        const std::uint64_t nv = read_u64(is);
        for (std::uint64_t i = 0; i < nv; ++i) ck.extra.velocity.push_back(read_f64s(is));
        ck.extra.rng_data_state = read_str(is);
        ck.extra.rng_mixup_state = read_str(is);
        ck.extra.accd_initial = read_f64s(is);
    }
    return ck;
}

CheckpointExtra make_checkpoint_extra(const TrainState& state, const AccdState& accd_state) {
    CheckpointExtra extra;
    extra.present = true;
    extra.velocity = state.velocity;
    extra.epoch = state.epoch;
    extra.t = state.t;
    std::ostringstream d, m;
    d << state.rng_data;
    m << state.rng_mixup;
    extra.rng_data_state = d.str();
    extra.rng_mixup_state = m.str();
    extra.accd_initial = accd_state.baselines();
    return extra;
}

std::pair<TrainState, AccdState> resume_from_checkpoint(const Checkpoint& ck) {
    if (!ck.extra.present) {
        throw ParseError("resume_from_checkpoint: checkpoint has no trainer state");
    }
    TrainState state;
    state.params = ck.params;
    state.velocity = ck.extra.velocity;
    state.epoch = ck.extra.epoch;
    state.t = ck.extra.t;
    std::istringstream d(ck.extra.rng_data_state), m(ck.extra.rng_mixup_state);
    d >> state.rng_data;
    m >> state.rng_mixup;
    if (!d || !m) throw ParseError("resume_from_checkpoint: bad rng state");
    AccdState accd_state;
    accd_state.restore(ck.extra.accd_initial);
    return {std::move(state), std::move(accd_state)};
}

}  // namespace idmne
