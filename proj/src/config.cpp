#include "idmne/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace idmne {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

struct KvReader {
    const std::map<std::string, std::string>& kv;
    std::map<std::string, bool> seen;

    explicit KvReader(const std::map<std::string, std::string>& m) : kv(m) {
        for (const auto& [key, value] : m) seen[key] = false;
    }

    bool has(const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) return false;
        seen[key] = true;
        return true;
    }

    std::string str(const std::string& key, const std::string& dflt) {
        return has(key) ? kv.at(key) : dflt;
    }

    double num(const std::string& key, double dflt) {
        if (!has(key)) return dflt;
        const std::string& v = kv.at(key);
        try {
            std::size_t used = 0;
            double out = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return out;
        } catch (const std::exception&) {
            throw ConfigError("config: key " + key + " has non-numeric value \"" + v + "\"");
        }
    }

    std::uint64_t uint(const std::string& key, std::uint64_t dflt) {
        const double v = num(key, static_cast<double>(dflt));
        if (v < 0 || v != std::floor(v)) {
            throw ConfigError("config: key " + key + " must be a non-negative integer");
        }
        return static_cast<std::uint64_t>(v);
    }

    bool flag(const std::string& key, bool dflt) {
        if (!has(key)) return dflt;
        const std::string& v = kv.at(key);
        if (v == "true" || v == "1" || v == "on") return true;
        if (v == "false" || v == "0" || v == "off") return false;
        throw ConfigError("config: key " + key + " must be true/false, got \"" + v + "\"");
    }

    std::vector<std::uint64_t> uint_list(const std::string& key) {
        if (!has(key)) return {};
        std::vector<std::uint64_t> out;
        std::stringstream ss(kv.at(key));
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) throw ConfigError("config: key " + key + " has an empty list entry");
            try {
                out.push_back(std::stoull(item));
            } catch (const std::exception&) {
                throw ConfigError("config: key " + key + " has non-integer entry \"" + item + "\"");
            }
        }
        return out;
    }

    void finish() const {
        for (const auto& [key, used] : seen) {
            if (!used) throw ConfigError("config: unknown key \"" + key + "\"");
        }
    }
};

}  // namespace

std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: " + path + ":" + std::to_string(lineno) +
                              ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("config: " + path + ":" + std::to_string(lineno) + ": empty key");
        }
        if (kv.count(key)) {
            throw ConfigError("config: " + path + ":" + std::to_string(lineno) +
                              ": duplicate key \"" + key + "\"");
        }
        kv[key] = value;
    }
    return kv;
}

ExperimentConfig resolve_config(const std::map<std::string, std::string>& kv) {
    KvReader r(kv);
    ExperimentConfig cfg;

    const std::string gen = r.str("data.generator", "blobs");
    if (gen == "blobs") cfg.data.generator = GeneratorKind::blobs;
    else if (gen == "two_moons") cfg.data.generator = GeneratorKind::two_moons;
    else if (gen == "csv") cfg.data.generator = GeneratorKind::csv;
    else throw ConfigError("config: data.generator must be blobs, two_moons or csv");

    cfg.data.seed = r.uint("data.seed", cfg.data.seed);
    cfg.data.n_source = r.uint("data.n_source", cfg.data.n_source);
    cfg.data.n_target = r.uint("data.n_target", cfg.data.n_target);
    cfg.data.k = r.uint("data.k", cfg.data.k);
    cfg.data.d_in = r.uint("data.d_in", cfg.data.d_in);
    cfg.data.shift_magnitude = r.num("data.shift_magnitude", cfg.data.shift_magnitude);
    cfg.data.target_scale = r.num("data.target_scale", cfg.data.target_scale);
    cfg.data.class_sep = r.num("data.class_sep", cfg.data.class_sep);
    cfg.data.rotation_deg = r.num("data.rotation_deg", cfg.data.rotation_deg);
    cfg.data.noise_sigma = r.num("data.noise_sigma", cfg.data.noise_sigma);
    cfg.data.csv_path = r.str("data.csv_path", cfg.data.csv_path);
    cfg.data.shots_per_class = r.uint("data.shots_per_class", cfg.data.shots_per_class);
    cfg.data.shot_seed = r.uint("data.shot_seed", cfg.data.shot_seed);
    cfg.data.eval_fraction = r.num("data.eval_fraction", cfg.data.eval_fraction);
    if (cfg.data.generator == GeneratorKind::csv && cfg.data.csv_path.empty()) {
        throw ConfigError("config: data.generator = csv requires data.csv_path");
    }

    TrainConfig& t = cfg.train;
    t.epochs = r.uint("train.epochs", t.epochs);
    t.iters_per_epoch = r.uint("train.iters_per_epoch", t.iters_per_epoch);
    t.lr_eta0 = r.num("train.lr", t.lr_eta0);
    t.momentum = r.num("train.momentum", t.momentum);
    t.weight_decay = r.num("train.weight_decay", t.weight_decay);
    t.tau = r.num("train.tau", t.tau);
    t.alpha = r.num("train.alpha", t.alpha);
    t.beta = r.num("train.beta", t.beta);
    t.gamma = r.num("train.gamma", t.gamma);
    t.temperature = r.num("train.temperature", t.temperature);
    t.batch.source = r.uint("train.batch_source", t.batch.source);
    t.batch.target_labeled = r.uint("train.batch_target_labeled", t.batch.target_labeled);
    t.batch.target_expanded = r.uint("train.batch_target_expanded", t.batch.target_expanded);
    t.batch.target_unlabeled = r.uint("train.batch_target_unlabeled", t.batch.target_unlabeled);
    t.perturb_strength = r.num("train.perturb_strength", t.perturb_strength);
    t.seed = r.uint("train.seed", t.seed);
    t.switches.sdm = r.flag("train.enable_sdm", t.switches.sdm);
    t.switches.mdm = r.flag("train.enable_mdm", t.switches.mdm);
    t.switches.psr = r.flag("train.enable_psr", t.switches.psr);
    t.switches.nsr = r.flag("train.enable_nsr", t.switches.nsr);
    t.switches.pa = r.flag("train.enable_pa", t.switches.pa);
    t.enable_pseudo = r.flag("train.enable_pseudo", t.enable_pseudo);
    t.decay_prototypes = r.flag("train.decay_prototypes", t.decay_prototypes);
    t.checkpoint_every = r.uint("train.checkpoint_every", t.checkpoint_every);
    if (r.has("model.hidden")) {
        auto widths = r.uint_list("model.hidden");
        t.hidden.assign(widths.begin(), widths.end());
    }

    cfg.run.out_dir = r.str("run.out_dir", cfg.run.out_dir);
    cfg.run.trials = r.uint("run.trials", cfg.run.trials);
    cfg.run.trial_seeds = r.uint_list("run.trial_seeds");

    r.finish();

    t.validate();
    if (cfg.run.trials == 0) throw ConfigError("config: run.trials must be >= 1");
    if (!cfg.run.trial_seeds.empty() && cfg.run.trial_seeds.size() != cfg.run.trials) {
        throw ConfigError("config: run.trial_seeds must list exactly run.trials seeds");
    }
    if (cfg.data.eval_fraction < 0.0 || cfg.data.eval_fraction >= 1.0) {
        throw ConfigError("config: data.eval_fraction must lie in [0, 1)");
    }
    if (cfg.data.shots_per_class == 0) {
        throw ConfigError("config: data.shots_per_class must be >= 1");
    }
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    return resolve_config(parse_config_file(path));
}

namespace {

std::string num_str(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

std::string serialize_config(const ExperimentConfig& cfg) {
    std::map<std::string, std::string> kv;
    const DataConfig& d = cfg.data;
    kv["data.generator"] = d.generator == GeneratorKind::blobs       ? "blobs"
                           : d.generator == GeneratorKind::two_moons ? "two_moons"
                                                                     : "csv";
    kv["data.seed"] = std::to_string(d.seed);
    kv["data.n_source"] = std::to_string(d.n_source);
    kv["data.n_target"] = std::to_string(d.n_target);
    kv["data.k"] = std::to_string(d.k);
    kv["data.d_in"] = std::to_string(d.d_in);
    kv["data.shift_magnitude"] = num_str(d.shift_magnitude);
    kv["data.target_scale"] = num_str(d.target_scale);
    kv["data.class_sep"] = num_str(d.class_sep);
    kv["data.rotation_deg"] = num_str(d.rotation_deg);
    kv["data.noise_sigma"] = num_str(d.noise_sigma);
    if (!d.csv_path.empty()) kv["data.csv_path"] = d.csv_path;
    kv["data.shots_per_class"] = std::to_string(d.shots_per_class);
    kv["data.shot_seed"] = std::to_string(d.shot_seed);
    kv["data.eval_fraction"] = num_str(d.eval_fraction);

    const TrainConfig& t = cfg.train;
    kv["train.epochs"] = std::to_string(t.epochs);
    kv["train.iters_per_epoch"] = std::to_string(t.iters_per_epoch);
    kv["train.lr"] = num_str(t.lr_eta0);
    kv["train.momentum"] = num_str(t.momentum);
    kv["train.weight_decay"] = num_str(t.weight_decay);
    kv["train.tau"] = num_str(t.tau);
    kv["train.alpha"] = num_str(t.alpha);
    kv["train.beta"] = num_str(t.beta);
    kv["train.gamma"] = num_str(t.gamma);
    kv["train.temperature"] = num_str(t.temperature);
    kv["train.batch_source"] = std::to_string(t.batch.source);
    kv["train.batch_target_labeled"] = std::to_string(t.batch.target_labeled);
    kv["train.batch_target_expanded"] = std::to_string(t.batch.target_expanded);
    kv["train.batch_target_unlabeled"] = std::to_string(t.batch.target_unlabeled);
    kv["train.perturb_strength"] = num_str(t.perturb_strength);
    kv["train.seed"] = std::to_string(t.seed);
    kv["train.enable_sdm"] = t.switches.sdm ? "true" : "false";
    kv["train.enable_mdm"] = t.switches.mdm ? "true" : "false";
    kv["train.enable_psr"] = t.switches.psr ? "true" : "false";
    kv["train.enable_nsr"] = t.switches.nsr ? "true" : "false";
    kv["train.enable_pa"] = t.switches.pa ? "true" : "false";
    kv["train.enable_pseudo"] = t.enable_pseudo ? "true" : "false";
    kv["train.decay_prototypes"] = t.decay_prototypes ? "true" : "false";
    kv["train.checkpoint_every"] = std::to_string(t.checkpoint_every);
    std::string hidden;
    for (std::size_t i = 0; i < t.hidden.size(); ++i) {
        if (i) hidden += ",";
        hidden += std::to_string(t.hidden[i]);
    }
    kv["model.hidden"] = hidden;

    kv["run.out_dir"] = cfg.run.out_dir;
    kv["run.trials"] = std::to_string(cfg.run.trials);
    if (!cfg.run.trial_seeds.empty()) {
        std::string seeds;
        for (std::size_t i = 0; i < cfg.run.trial_seeds.size(); ++i) {
            if (i) seeds += ",";
            seeds += std::to_string(cfg.run.trial_seeds[i]);
        }
        kv["run.trial_seeds"] = seeds;
    }

    std::ostringstream os;
    for (const auto& [key, value] : kv) os << key << " = " << value << "\n";
    return os.str();
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
    // FNV-1a 64 over the canonical serialization.
    const std::string text = serialize_config(cfg);
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

TrainDatasets build_datasets(const DataConfig& cfg) {
    Dataset source, target;
    switch (cfg.generator) {
        case GeneratorKind::blobs: {
            BlobsSpec spec;
            spec.k = cfg.k;
            spec.d_in = cfg.d_in;
            spec.n_source = cfg.n_source;
            spec.n_target = cfg.n_target;
            spec.scale = cfg.target_scale;
            spec.class_sep = cfg.class_sep;
            spec.seed = cfg.seed;
            // Shift along the unit diagonal; magnitude is the Euclidean norm.
            spec.shift.assign(cfg.d_in,
                              cfg.shift_magnitude / std::sqrt(static_cast<double>(cfg.d_in)));
            std::tie(source, target) = gen_blobs_shift(spec);
            break;
        }
        case GeneratorKind::two_moons:
            std::tie(source, target) = gen_two_moons_shift(cfg.n_source, cfg.n_target,
                                                           cfg.rotation_deg, cfg.noise_sigma,
                                                           cfg.seed);
            break;
        case GeneratorKind::csv: {
            Dataset all = load_csv(cfg.csv_path);
            std::tie(source, target) = split_by_domain(all);
            if (source.size() == 0 || target.size() == 0) {
                throw ConfigError("config: " + cfg.csv_path + " must hold both domains");
            }
            break;
        }
    }

    TrainDatasets data;
    data.source = as_labeled(source);
    ShotSpec shots{cfg.shots_per_class, cfg.shot_seed};
    FewShotSplit split = split_few_shot(target, shots, cfg.eval_fraction);
    data.target_labeled = std::move(split.labeled);
    data.target_unlabeled = std::move(split.unlabeled);
    data.eval = std::move(split.eval);
    if (data.eval.size() == 0) {
        throw ConfigError("config: the target eval split is empty; raise data.eval_fraction or "
                          "tag eval rows");
    }
    if (data.target_unlabeled.size() == 0) {
        throw ConfigError("config: the unlabeled target pool is empty");
    }
    return data;
}

std::vector<std::uint64_t> effective_trial_seeds(const ExperimentConfig& cfg) {
    if (!cfg.run.trial_seeds.empty()) return cfg.run.trial_seeds;
    std::vector<std::uint64_t> seeds(cfg.run.trials);
    for (std::size_t i = 0; i < cfg.run.trials; ++i) seeds[i] = cfg.train.seed + i;
    return seeds;
}

}  // namespace idmne
