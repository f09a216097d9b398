#include "idmne/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "idmne/config.hpp"
#include "idmne/trainer.hpp"

namespace idmne {

namespace fs = std::filesystem;

namespace {

ExperimentConfig load_with_overrides(const std::string& config_path, const CliOverrides& ov) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    if (ov.out_dir) cfg.run.out_dir = *ov.out_dir;
    if (ov.seed) cfg.train.seed = *ov.seed;
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open " + path.string());
    out << text;
}

void write_pseudo_audit(const fs::path& path, const RunResult& result,
                        const UnlabeledSet& unlabeled) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open " + path.string());
    out << "epoch,sample_id,class,confidence,correct\n";
    for (const auto& set : result.pseudo_history) {
        for (const auto& e : set.entries) {
            out << e.epoch << ',' << unlabeled.ids.at(e.index) << ',' << e.label << ','
                << format_sig9(e.confidence) << ',';
            const int truth = unlabeled.audit_y.at(e.index);
            if (truth >= 0) out << (truth == e.label ? 1 : 0);
            out << "\n";
        }
    }
}

struct TrainArtifacts {
    RunResult result;
    double final_acc = 0.0;
};

// Shared by train/ablate/sweep-tau: one full run writing the per-run files
// into `dir`.
TrainArtifacts run_one(const ExperimentConfig& cfg, const TrainDatasets& data,
                       const fs::path& dir) {
    fs::create_directories(dir);
    write_text(dir / "resolved_config.cfg", serialize_config(cfg));

    const std::uint64_t hash = config_hash(cfg);
    EpochHook hook;
    if (cfg.train.checkpoint_every > 0) {
        hook = [&](const TrainState& st, const AccdState& accd, const EpochResult&) {
            if (st.epoch % cfg.train.checkpoint_every != 0) return;
            CheckpointExtra extra = make_checkpoint_extra(st, accd);
            save_checkpoint((dir / ("checkpoint_epoch_" + std::to_string(st.epoch) + ".idmne"))
                                .string(),
                            st.params, cfg.train.seed, hash, &extra);
        };
    }

    TrainArtifacts art;
    art.result = run(cfg.train, data, hook);
    write_metrics_csv((dir / "metrics.csv").string(), art.result.history);
    write_pseudo_audit(dir / "pseudo_audit.csv", art.result, data.target_unlabeled);
    save_checkpoint((dir / "checkpoint_final.idmne").string(), art.result.params, cfg.train.seed,
                    hash);
    art.final_acc = accuracy(art.result.params, data.eval);
    return art;
}

int guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    }
}

struct AblationVariant {
    const char* name;
    bool pseudo, sdm, mdm, psr, nsr, pa;
};

// Mirrors the loss-term build-up of the two ablation tables: Baseline1 is
// the S+T model, Baseline2 adds both mixing terms, the last row is the full
// method.
constexpr AblationVariant kVariants[] = {
    {"baseline1", false, false, false, false, false, false},
    {"baseline1_sdm", true, true, false, false, false, false},
    {"baseline1_mdm", true, false, true, false, false, false},
    {"baseline1_sdm_mdm", true, true, true, false, false, false},
    {"baseline2_psr", true, true, true, true, false, false},
    {"baseline2_psr_nsr", true, true, true, true, true, false},
    {"idmne_full", true, true, true, true, true, true},
};

struct Summary {
    double mean = 0.0;
    double halfwidth = 0.0;
};

Summary summarize(const std::vector<double>& values) {
    Summary s;
    const double n = static_cast<double>(values.size());
    for (double v : values) s.mean += v;
    s.mean /= n;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        const double sd = std::sqrt(ss / (n - 1.0));
        s.halfwidth = 1.96 * sd / std::sqrt(n);
    }
    return s;
}

}  // namespace

int cmd_train(const std::string& config_path, const CliOverrides& overrides) {
    return guarded([&] {
        ExperimentConfig cfg = load_with_overrides(config_path, overrides);
        TrainDatasets data = build_datasets(cfg.data);
        run_one(cfg, data, cfg.run.out_dir);
        return kExitOk;
    });
}

int cmd_ablate(const std::string& config_path, const CliOverrides& overrides) {
    return guarded([&] {
        ExperimentConfig cfg = load_with_overrides(config_path, overrides);
        TrainDatasets data = build_datasets(cfg.data);
        const auto seeds = effective_trial_seeds(cfg);
        fs::create_directories(cfg.run.out_dir);

        std::ofstream summary(fs::path(cfg.run.out_dir) / "ablation_summary.csv");
        if (!summary) throw ParseError("cannot open ablation_summary.csv");
        summary << "variant,trials,mean_acc,ci95_halfwidth\n";

        for (const AblationVariant& variant : kVariants) {
            std::vector<double> accs;
            for (std::uint64_t seed : seeds) {
                ExperimentConfig vcfg = cfg;
                vcfg.train.seed = seed;
                vcfg.train.enable_pseudo = variant.pseudo;
                vcfg.train.switches = {variant.sdm, variant.mdm, variant.psr, variant.nsr,
                                       variant.pa};
                const fs::path dir = fs::path(cfg.run.out_dir) /
                                     (std::string(variant.name) + "_seed" + std::to_string(seed));
                accs.push_back(run_one(vcfg, data, dir).final_acc);
            }
            const Summary s = summarize(accs);
            summary << variant.name << ',' << accs.size() << ',' << format_sig9(s.mean) << ','
                    << format_sig9(s.halfwidth) << "\n";
            std::cout << variant.name << ": " << format_sig9(s.mean) << " +/- "
                      << format_sig9(s.halfwidth) << " (" << accs.size() << " trials)\n";
        }
        return kExitOk;
    });
}

int cmd_sweep_tau(const std::string& config_path, const std::vector<double>& taus,
                  const CliOverrides& overrides) {
    return guarded([&] {
        if (taus.empty()) throw ConfigError("sweep-tau: --tau-list must not be empty");
        for (double tau : taus) {
            if (!(tau > 0.0 && tau <= 1.0)) {
                throw ConfigError("sweep-tau: tau values must lie in (0, 1], got " +
                                  std::to_string(tau));
            }
        }
        ExperimentConfig cfg = load_with_overrides(config_path, overrides);
        TrainDatasets data = build_datasets(cfg.data);
        fs::create_directories(cfg.run.out_dir);

        std::ofstream combined(fs::path(cfg.run.out_dir) / "sweep_tau.csv");
        if (!combined) throw ParseError("cannot open sweep_tau.csv");
        combined << "tau," << kMetricsHeader << "\n";

        for (double tau : taus) {
            ExperimentConfig tcfg = cfg;
            tcfg.train.tau = tau;
            const fs::path dir = fs::path(cfg.run.out_dir) / ("tau_" + format_sig9(tau));
            TrainArtifacts art = run_one(tcfg, data, dir);
            for (const EpochMetrics& m : art.result.history) {
                combined << format_sig9(tau) << ',' << metrics_row(m) << "\n";
            }
        }
        return kExitOk;
    });
}

int cmd_eval(const std::string& checkpoint_path, const std::string& config_path,
             const CliOverrides& overrides) {
    return guarded([&] {
        Checkpoint ck = load_checkpoint(checkpoint_path);
        ExperimentConfig cfg = load_with_overrides(config_path, overrides);
        TrainDatasets data = build_datasets(cfg.data);
        const double acc = accuracy(ck.params, data.eval);
        const double ece = calibration(ck.params, data.eval).ece;
        std::cout << "acc_eval,ece,n_eval\n"
                  << format_sig9(acc) << ',' << format_sig9(ece) << ',' << data.eval.size() << "\n";
        return kExitOk;
    });
}

}  // namespace idmne
