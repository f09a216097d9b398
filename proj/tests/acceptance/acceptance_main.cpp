// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Runs against the blobs-shift benchmark (K=5, d_in=8, shift 2.0,
// 2000/2000 samples, 3-shot) with the paper-default hyper-parameters.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <vector>

#include "idmne/cli.hpp"
#include "idmne/config.hpp"
#include "idmne/mixup.hpp"
#include "idmne/pseudo.hpp"
#include "idmne/trainer.hpp"
#include "testutil.hpp"

using namespace idmne;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Criterion 1: analytic gradients of all six loss terms vs central finite
// differences on a 2x16x8 extractor with K = 3, h = 1e-5, rel err < 1e-4,
// >= 20 trials per term, under 60 s.
// ---------------------------------------------------------------------------
void criterion_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(1001);
    const std::size_t k = 3;
    const double h = 1e-5;
    double worst = 0.0;
    bool all_ok = true;
    std::string first_fail;

    struct Term {
        const char* name;
        std::function<Tensor(const BoundModel&, const ModelParams&, const StepBatches&)> build;
    };
    // T = 1 keeps probabilities interior (clamp and mask margins verified per
    // draw); tau values pin every sample into the term's mask so membership
    // cannot flip under the finite-difference probe.
    const Term terms[] = {
        {"l_sup",
         [](const BoundModel& m, const ModelParams&, const StepBatches& b) {
             return loss_sup(m, b.batch_s, b.batch_l);
         }},
        {"l_sdm",
         [](const BoundModel& m, const ModelParams&, const StepBatches& b) {
             return loss_sdm(m, b.pairs, 3);
         }},
        {"l_mdm",
         [](const BoundModel& m, const ModelParams&, const StepBatches& b) {
             return loss_mdm(m, b.pairs, 3);
         }},
        {"l_psr",
         [](const BoundModel& m, const ModelParams& p, const StepBatches& b) {
             return loss_psr(m, p, b.batch_u, 0.05);
         }},
        {"l_nsr",
         [](const BoundModel& m, const ModelParams& p, const StepBatches& b) {
             return loss_nsr(m, p, b.batch_u, 1.0);
         }},
        {"l_pa",
         [](const BoundModel& m, const ModelParams& p, const StepBatches& b) {
             return loss_pa(m, p, b.batch_u, b.batch_lp, 0.05);
         }},
    };

    for (const Term& term : terms) {
        int done = 0;
        while (done < 20) {
            ModelParams p = testutil::small_model(2, {16, 8}, k, 1.0, rng());
            StepBatches b;
            b.batch_s = testutil::random_labeled_batch(2, 2, k, rng);
            b.batch_l = testutil::random_labeled_batch(2, 2, k, rng);
            b.batch_lp = testutil::random_labeled_batch(4, 2, k, rng);
            b.batch_u = testutil::random_unlabeled_batch(4, 2, rng);
            b.pairs = testutil::random_pair_batch(2, 2, k, 2.0, rng);
            if (!testutil::relu_margins_ok(p, b.batch_s.x) ||
                !testutil::relu_margins_ok(p, b.batch_l.x) ||
                !testutil::relu_margins_ok(p, b.batch_lp.x) ||
                !testutil::relu_margins_ok(p, b.batch_u.x) ||
                !testutil::relu_margins_ok(p, b.batch_u.x_perturbed) ||
                !testutil::relu_margins_ok(p, b.pairs.xs) ||
                !testutil::relu_margins_ok(p, b.pairs.xt)) {
                continue;
            }
            auto rep = testutil::fd_check_params(
                p, [&](const BoundModel& m) { return term.build(m, p, b); }, h);
            worst = std::max(worst, rep.max_rel);
            if (!rep.ok(1e-4) && all_ok) {
                all_ok = false;
                first_fail = term.name;
            }
            ++done;
        }
    }
    const double elapsed = seconds_since(t0);
    std::ostringstream os;
    os << "gradient checks, 6 terms x 20 trials, max rel err " << worst << ", " << elapsed << " s";
    if (!all_ok) os << " (first failing term: " << first_fail << ")";
    report(1, all_ok && worst < 1e-4 && elapsed < 60.0, os.str());
}

// ---------------------------------------------------------------------------
// Criterion 2: loss values equal the straight-line oracle within 1e-10 on
// 1000 random instances per term, under 30 s.
// ---------------------------------------------------------------------------
void criterion_oracle_equivalence() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2002);
    const std::size_t k = 3;
    double worst = 0.0;

    for (int trial = 0; trial < 1000; ++trial) {
        ModelParams p = testutil::small_model(4, {8, 5}, k, trial % 2 ? 1.0 : 0.1, rng());
        const double temperature = p.temperature;
        const auto ol = testutil::oracle_layers(p);
        const auto ow = testutil::oracle_prototypes(p);
        BoundModel m = bind_inference(p);

        LabeledBatch bs = testutil::random_labeled_batch(3, 4, k, rng);
        LabeledBatch bl = testutil::random_labeled_batch(2, 4, k, rng);
        LabeledBatch blp = testutil::random_labeled_batch(4, 4, k, rng);
        UnlabeledBatch bu = testutil::random_unlabeled_batch(5, 4, rng);
        PairBatch pairs = testutil::random_pair_batch(4, 4, k, 2.0, rng);
        const double tau = 0.5;

        using testutil::to_rows;
        worst = std::max(worst, std::fabs(loss_sup(m, bs, bl).value() -
                                          oracle::loss_sup(to_rows(bs.x), bs.y, to_rows(bl.x),
                                                           bl.y, ol, ow, temperature, k)
                                              .value));
        worst = std::max(worst, std::fabs(loss_sdm(m, pairs, k).value() -
                                          oracle::loss_sdm(to_rows(pairs.xs), pairs.ys,
                                                           to_rows(pairs.xt), pairs.yt,
                                                           pairs.lambda_sdm, ol, ow, temperature, k)
                                              .value));
        worst = std::max(worst, std::fabs(loss_mdm(m, pairs, k).value() -
                                          oracle::loss_mdm(to_rows(pairs.xs), pairs.ys,
                                                           to_rows(pairs.xt), pairs.yt,
                                                           pairs.lambda_mdm, ol, ow, temperature, k)
                                              .value));
        worst = std::max(worst, std::fabs(loss_psr(m, p, bu, tau).value() -
                                          oracle::loss_psr(to_rows(bu.x), to_rows(bu.x_perturbed),
                                                           tau, ol, ow, temperature)
                                              .value));
        worst = std::max(worst, std::fabs(loss_nsr(m, p, bu, tau).value() -
                                          oracle::loss_nsr(to_rows(bu.x), tau, ol, ow, temperature)
                                              .value));
        worst = std::max(worst, std::fabs(loss_pa(m, p, bu, blp, tau).value() -
                                          oracle::loss_pa(to_rows(bu.x), to_rows(blp.x), blp.y,
                                                          tau, ol, ow, temperature)
                                              .value));
    }
    const double elapsed = seconds_since(t0);
    std::ostringstream os;
    os << "oracle equivalence, 1000 instances x 6 terms, max abs diff " << worst << ", " << elapsed
       << " s";
    report(2, worst < 1e-10 && elapsed < 30.0, os.str());
}

// ---------------------------------------------------------------------------
// Criterion 3: pseudo-label assignment equals the brute-force filter on 1e4
// random prediction vectors for tau in {0.5, 0.9, 0.95, 1.0}, boundary
// inclusive, with subset monotonicity across thresholds.
// ---------------------------------------------------------------------------
void criterion_pseudo_exactness() {
    std::mt19937_64 rng(3003);
    const std::size_t n = 10000, k = 4;
    std::vector<std::vector<double>> probs(n, std::vector<double>(k));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (double& v : probs[i]) {
            v = u(rng) + 1e-9;
            s += v;
        }
        for (double& v : probs[i]) v /= s;
        // Plant exact boundary cases: max p == tau bitwise.
        if (i % 100 == 0) {
            const double tau_here = (i % 200 == 0) ? 0.95 : 0.5;
            probs[i][0] = tau_here;
            const double rest = (1.0 - tau_here) / static_cast<double>(k - 1);
            for (std::size_t j = 1; j < k; ++j) probs[i][j] = rest;
        }
    }

    const double taus[] = {0.5, 0.9, 0.95, 1.0};
    bool ok = true;
    std::vector<std::vector<bool>> member(4, std::vector<bool>(n, false));
    std::size_t boundary_hits = 0;
    for (int ti = 0; ti < 4; ++ti) {
        PseudoLabelSet set = assign_from_probs(probs, taus[ti], 1);
        std::vector<bool> brute(n, false);
        for (std::size_t i = 0; i < n; ++i) {
            double best = probs[i][0];
            int arg = 0;
            for (std::size_t j = 1; j < k; ++j) {
                if (probs[i][j] > best) {
                    best = probs[i][j];
                    arg = static_cast<int>(j);
                }
            }
            brute[i] = best >= taus[ti];
            if (best == taus[ti] && brute[i]) ++boundary_hits;
        }
        std::vector<bool> got(n, false);
        for (const auto& e : set.entries) {
            got[e.index] = true;
            int arg = 0;
            for (std::size_t j = 1; j < k; ++j) {
                if (probs[e.index][j] > probs[e.index][static_cast<std::size_t>(arg)]) {
                    arg = static_cast<int>(j);
                }
            }
            if (e.label != arg) ok = false;
        }
        if (got != brute) ok = false;
        member[ti] = got;
    }
    // Subset monotonicity: higher tau never admits a sample the lower one
    // rejected.
    for (int ti = 1; ti < 4; ++ti) {
        for (std::size_t i = 0; i < n; ++i) {
            if (member[ti][i] && !member[ti - 1][i]) ok = false;
        }
    }
    std::ostringstream os;
    os << "pseudo-labeling equals brute force on 1e4 vectors, 4 thresholds, " << boundary_hits
       << " exact-boundary inclusions, monotone";
    report(3, ok && boundary_hits > 0, os.str());
}

// ---------------------------------------------------------------------------
// Criterion 4: the learning-rate rule at t in {0, 1, 100, 7500}.
// ---------------------------------------------------------------------------
void criterion_schedule() {
    const double eta0 = 0.001;
    bool ok = lr_at(0, eta0) == 0.001;
    for (std::size_t t : {std::size_t{1}, std::size_t{100}, std::size_t{7500}}) {
        const double expected = eta0 / std::pow(1.0 + 0.0001 * static_cast<double>(t), 0.75);
        if (lr_at(t, eta0) != expected) ok = false;
    }
    report(4, ok, "lr rule eta0/(1+0.0001 t)^0.75 exact at t in {0, 1, 100, 7500}");
}

// ---------------------------------------------------------------------------
// Criterion 5: ACCD normalization: exactly 1 at epoch 0, exactly 0 on
// identical source/target feature multisets.
// ---------------------------------------------------------------------------
void criterion_accd() {
    std::mt19937_64 rng(5005);
    ModelParams p = testutil::small_model(4, {8, 6}, 3, 0.05, rng());
    LabeledSet source;
    source.k = 3;
    source.d_in = 4;
    std::uniform_real_distribution<double> u(-2, 2);
    std::vector<std::vector<double>> tx;
    std::vector<int> ty;
    for (int i = 0; i < 60; ++i) {
        source.ids.push_back(i);
        source.x.push_back({u(rng) + i % 3, u(rng), u(rng), u(rng)});
        source.y.push_back(i % 3);
        tx.push_back({u(rng) + i % 3 + 1.0, u(rng), u(rng) - 0.5, u(rng)});
        ty.push_back(i % 3);
    }
    AccdState state;
    const double first = state.update(p, source, Tensor::from_rows(tx), ty);
    const double zero = state.update(p, source, Tensor::from_rows(source.x), source.y);
    std::ostringstream os;
    os << "accd epoch-0 value " << first << " (want 1 exactly), identical-sets value " << zero
       << " (want 0 exactly)";
    report(5, first == 1.0 && zero == 0.0, os.str());
}

// ---------------------------------------------------------------------------
// Criteria 6 and 7: desk-scale adaptation benefit and ablation ordering on
// the blobs-shift benchmark. The margin threshold (2.5 points) was locked
// from the first correct build (observed 2.99 over these seeds); the hard
// gate is improvement > 0 on at least 8 of 10 seeds.
// ---------------------------------------------------------------------------
void criteria_benchmark() {
    ExperimentConfig cfg;
    cfg.data.k = 5;
    cfg.data.d_in = 8;
    cfg.data.n_source = 2000;
    cfg.data.n_target = 2000;
    cfg.data.class_sep = 2.0;
    cfg.data.shift_magnitude = 2.0;
    cfg.data.target_scale = 3.0;
    cfg.data.shots_per_class = 3;
    cfg.train.epochs = 120;
    cfg.train.iters_per_epoch = 25;

    double sum_full = 0, sum_b1 = 0, sum_b2 = 0;
    int wins = 0;
    double slowest_run = 0.0;
    bool finite_ok = true;

    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        cfg.data.seed = 100 + seed;
        cfg.data.shot_seed = 200 + seed;
        TrainDatasets data = build_datasets(cfg.data);

        TrainConfig full = cfg.train;
        full.seed = seed;
        TrainConfig st = full;
        st.beta = 0.0;
        st.gamma = 0.0;
        st.enable_pseudo = false;
        TrainConfig idm = full;
        idm.gamma = 0.0;

        const auto t0 = std::chrono::steady_clock::now();
        RunResult rfull = run(full, data);
        slowest_run = std::max(slowest_run, seconds_since(t0));
        for (const EpochMetrics& m : rfull.history) {
            if (!std::isfinite(m.l_total)) finite_ok = false;
        }
        const double acc_full = accuracy(rfull.params, data.eval);
        const double acc_b1 = accuracy(run(st, data).params, data.eval);
        const double acc_b2 = accuracy(run(idm, data).params, data.eval);
        sum_full += acc_full;
        sum_b1 += acc_b1;
        sum_b2 += acc_b2;
        if (acc_full > acc_b1) ++wins;
    }
    const double margin = (sum_full - sum_b1) * 10.0;  // percentage points
    {
        std::ostringstream os;
        os << "blobs-shift benefit: IDMNE " << sum_full / 10 << " vs S+T " << sum_b1 / 10
           << ", margin " << margin << " pts (locked >= 2.5), wins " << wins
           << "/10 (hard gate >= 8), slowest run " << slowest_run << " s, losses finite";
        report(6, margin >= 2.5 && wins >= 8 && slowest_run < 120.0 && finite_ok, os.str());
    }
    {
        const double b2_vs_b1 = (sum_b2 - sum_b1) * 10.0;
        const double full_vs_b2 = (sum_full - sum_b2) * 10.0;
        std::ostringstream os;
        os << "ablation ordering: Baseline2-Baseline1 " << b2_vs_b1 << " pts, full-Baseline2 "
           << full_vs_b2 << " pts (ties within 0.5 tolerated)";
        report(7, b2_vs_b1 >= -0.5 && full_vs_b2 >= -0.5, os.str());
    }
}

// ---------------------------------------------------------------------------
// Criterion 8: byte-identical reruns of cmd_train, and the equivalence of
// disabling a loss switch with zeroing the term's weight.
// ---------------------------------------------------------------------------
std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void criterion_determinism() {
    const fs::path tmp = "acceptance_tmp";
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    const std::string cfg_path = (tmp / "exp.cfg").string();
    {
        std::ofstream out(cfg_path);
        out << "data.k = 3\ndata.d_in = 4\ndata.n_source = 300\ndata.n_target = 300\n"
               "data.class_sep = 2.0\ndata.target_scale = 3.0\n"
               "train.epochs = 3\ntrain.iters_per_epoch = 10\nmodel.hidden = 16,8\n"
               "run.out_dir = " << (tmp / "a").string() << "\n";
    }
    bool ok = cmd_train(cfg_path, {}) == kExitOk;
    CliOverrides ov;
    ov.out_dir = (tmp / "b").string();
    ok = ok && cmd_train(cfg_path, ov) == kExitOk;
    const bool bytes_equal = slurp((tmp / "a" / "metrics.csv").string()) ==
                                 slurp((tmp / "b" / "metrics.csv").string()) &&
                             slurp((tmp / "a" / "pseudo_audit.csv").string()) ==
                                 slurp((tmp / "b" / "pseudo_audit.csv").string());

    // Switch-off versus weight-zero, bit-identical final parameters.
    ExperimentConfig cfg;
    cfg.data.k = 3;
    cfg.data.d_in = 4;
    cfg.data.n_source = 300;
    cfg.data.n_target = 300;
    cfg.data.class_sep = 2.0;
    cfg.data.target_scale = 3.0;
    cfg.train.epochs = 3;
    cfg.train.iters_per_epoch = 10;
    cfg.train.hidden = {16, 8};
    TrainDatasets data = build_datasets(cfg.data);

    TrainConfig sw_off = cfg.train;
    sw_off.switches.psr = sw_off.switches.nsr = sw_off.switches.pa = false;
    TrainConfig w_zero = cfg.train;
    w_zero.gamma = 0.0;
    RunResult ra = run(sw_off, data);
    RunResult rb = run(w_zero, data);

    TrainConfig sw_off2 = cfg.train;
    sw_off2.switches.sdm = sw_off2.switches.mdm = false;
    TrainConfig w_zero2 = cfg.train;
    w_zero2.beta = 0.0;
    RunResult rc = run(sw_off2, data);
    RunResult rd = run(w_zero2, data);

    auto same = [](const ModelParams& a, const ModelParams& b) {
        for (std::size_t i = 0; i < a.layers.size(); ++i) {
            if (a.layers[i].weight.data != b.layers[i].weight.data) return false;
            if (a.layers[i].bias.data != b.layers[i].bias.data) return false;
        }
        return a.prototypes.data == b.prototypes.data;
    };
    const bool switch_equiv = same(ra.params, rb.params) && same(rc.params, rd.params);

    fs::remove_all(tmp);
    std::ostringstream os;
    os << "determinism: rerun metrics byte-identical " << (bytes_equal ? "yes" : "NO")
       << ", switch-off == weight-zero trajectories " << (switch_equiv ? "yes" : "NO");
    report(8, ok && bytes_equal && switch_equiv, os.str());
}

// ---------------------------------------------------------------------------
// Criterion 9: 1e5-trial mixup property suite.
// ---------------------------------------------------------------------------
void criterion_mixup_properties() {
    std::mt19937_64 rng(9009);
    std::uniform_real_distribution<double> u(-5, 5);
    std::uniform_int_distribution<int> cls(0, 3);
    std::size_t failures = 0;
    const int trials = 100000;
    for (int trial = 0; trial < trials; ++trial) {
        std::vector<double> a(3), b(3);
        for (double& v : a) v = u(rng);
        for (double& v : b) v = u(rng);
        const int ya = cls(rng), yb = cls(rng);
        const double lam = sample_lambda(2.0, rng);

        MixedSample at_one = mix_samples(a, one_hot(4, ya), b, one_hot(4, yb), 1.0);
        MixedSample at_zero = mix_samples(a, one_hot(4, ya), b, one_hot(4, yb), 0.0);
        if (at_one.x != a || at_zero.x != b) ++failures;
        if (at_one.y != one_hot(4, ya) || at_zero.y != one_hot(4, yb)) ++failures;

        MixedSample same = mix_samples(a, one_hot(4, ya), a, one_hot(4, ya), lam);
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (std::fabs(same.x[i] - a[i]) > 1e-12 * std::max(1.0, std::fabs(a[i]))) ++failures;
        }

        MixedSample fwd = mix_samples(a, one_hot(4, ya), b, one_hot(4, yb), lam);
        MixedSample rev = mix_samples(b, one_hot(4, yb), a, one_hot(4, ya), 1.0 - lam);
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (std::fabs(fwd.x[i] - rev.x[i]) > 1e-11 * std::max(1.0, std::fabs(fwd.x[i]))) {
                ++failures;
            }
        }

        double label_sum = 0.0;
        for (double v : fwd.y) {
            if (v < 0.0 || v > 1.0) ++failures;
            label_sum += v;
        }
        if (std::fabs(label_sum - 1.0) > 1e-12) ++failures;
        if (lam < 0.0 || lam > 1.0) ++failures;
    }
    std::ostringstream os;
    os << "mixup properties over " << trials << " trials, " << failures << " failures";
    report(9, failures == 0, os.str());
}

// ---------------------------------------------------------------------------
// Criterion 10: calibration report with exhaustive, exclusive bins; the
// with-mixup vs without-mixup ECE comparison is reported, not asserted.
// ---------------------------------------------------------------------------
void criterion_calibration() {
    ExperimentConfig cfg;
    cfg.data.k = 5;
    cfg.data.d_in = 8;
    cfg.data.n_source = 2000;
    cfg.data.n_target = 2000;
    cfg.data.class_sep = 2.0;
    cfg.data.shift_magnitude = 2.0;
    cfg.data.target_scale = 3.0;
    cfg.data.seed = 101;
    cfg.data.shot_seed = 201;
    cfg.train.epochs = 40;
    cfg.train.seed = 1;
    TrainDatasets data = build_datasets(cfg.data);

    TrainConfig without = cfg.train;  // Baseline1, no mixup
    without.beta = 0.0;
    without.gamma = 0.0;
    without.enable_pseudo = false;
    TrainConfig with = cfg.train;  // Baseline1 + SDM + MDM
    with.gamma = 0.0;

    CalibrationReport rep_without = calibration(run(without, data).params, data.eval);
    CalibrationReport rep_with = calibration(run(with, data).params, data.eval);

    bool ok = true;
    for (const CalibrationReport* rep : {&rep_without, &rep_with}) {
        std::size_t total = 0;
        for (const auto& bin : rep->bins) {
            total += bin.count;
            if (bin.correct > bin.count) ok = false;
        }
        if (total != rep->n || rep->n != data.eval.size()) ok = false;
        if (!(rep->ece >= 0.0 && rep->ece <= 1.0)) ok = false;
    }
    std::ostringstream os;
    os << "calibration bins conserve counts (n = " << rep_with.n << "); ECE with mixup "
       << rep_with.ece << " vs without " << rep_without.ece << " (reported, not asserted)";
    report(10, ok, os.str());
}

}  // namespace

int main() {
    const auto t0 = std::chrono::steady_clock::now();
    criterion_gradients();
    criterion_oracle_equivalence();
    criterion_pseudo_exactness();
    criterion_schedule();
    criterion_accd();
    criteria_benchmark();
    criterion_determinism();
    criterion_mixup_properties();
    criterion_calibration();
    std::printf("%d criterion(s) failed; total %.1f s\n", g_failures, seconds_since(t0));
    return g_failures == 0 ? 0 : 1;
}
