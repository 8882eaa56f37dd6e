#include "ckd/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "ckd/losses.hpp"

namespace fs = std::filesystem;

namespace ckd {

void ExperimentConfig::validate() const {
    data.validate();
    train.validate();
    if (variants.empty()) throw ConfigError("experiment: empty variant list");
    if (seeds.empty()) throw ConfigError("experiment: empty seed list");
    if (cmc_max_rank == 0) throw ConfigError("experiment: cmc_max_rank must be >= 1");
    if (calibration_bins == 0) throw ConfigError("experiment: calibration_bins must be >= 1");
    if (verification_samples < 2)
        throw ConfigError("experiment: verification_samples must be >= 2");
    // Every grid cell must produce a valid model before any training runs.
    for (Variant v : variants)
        cell_model_config(*this, v, seeds.front()).validate();
}

namespace {

std::string trim(const std::string &s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string &s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::size_t parse_size(const std::string &v, const std::string &key) {
    try {
        std::size_t pos;
        long long n = std::stoll(v, &pos);
        if (pos != v.size() || n < 0) throw std::invalid_argument(v);
        return static_cast<std::size_t>(n);
    } catch (const std::exception &) {
        throw ConfigError("config: bad integer '" + v + "' for key " + key);
    }
}

std::uint64_t parse_u64(const std::string &v, const std::string &key) {
    try {
        std::size_t pos;
        unsigned long long n = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return n;
    } catch (const std::exception &) {
        throw ConfigError("config: bad integer '" + v + "' for key " + key);
    }
}

double parse_double(const std::string &v, const std::string &key) {
    try {
        std::size_t pos;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception &) {
        throw ConfigError("config: bad number '" + v + "' for key " + key);
    }
}

std::vector<std::size_t> parse_size_list(const std::string &v, const std::string &key) {
    std::vector<std::size_t> out;
    for (const auto &item : split_list(v)) out.push_back(parse_size(item, key));
    return out;
}

template <typename T>
std::string join(const std::vector<T> &v, const std::function<std::string(const T &)> &f) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += f(v[i]);
    }
    return s;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string csv_field(double v) { return std::isnan(v) ? "" : fmt(v); }

void write_text(const std::string &path, const std::string &content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << content;
    if (!f) throw IoError("write failure on " + path);
}

std::string read_text(const std::string &path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string &text) {
    ExperimentConfig cfg;
    using Setter = std::function<void(ExperimentConfig &, const std::string &,
                                      const std::string &)>;
    auto sz = [](std::size_t GeneratorConfig::*f) {
        return [f](ExperimentConfig &c, const std::string &v, const std::string &k) {
            c.data.*f = parse_size(v, k);
        };
    };
    auto dd = [](double GeneratorConfig::*f) {
        return [f](ExperimentConfig &c, const std::string &v, const std::string &k) {
            c.data.*f = parse_double(v, k);
        };
    };
    auto tsz = [](std::size_t TrainConfig::*f) {
        return [f](ExperimentConfig &c, const std::string &v, const std::string &k) {
            c.train.*f = parse_size(v, k);
        };
    };
    auto tdd = [](double TrainConfig::*f) {
        return [f](ExperimentConfig &c, const std::string &v, const std::string &k) {
            c.train.*f = parse_double(v, k);
        };
    };
    auto tlist = [](std::vector<std::size_t> TrainConfig::*f) {
        return [f](ExperimentConfig &c, const std::string &v, const std::string &k) {
            c.train.*f = parse_size_list(v, k);
        };
    };

    static const std::string kData = "data", kModel = "model", kTrain = "train",
                             kExp = "experiment";
    std::map<std::pair<std::string, std::string>, Setter> table{
        {{kData, "num_train_ids"}, sz(&GeneratorConfig::num_train_ids)},
        {{kData, "num_test_ids"}, sz(&GeneratorConfig::num_test_ids)},
        {{kData, "samples_per_id"}, sz(&GeneratorConfig::samples_per_id)},
        {{kData, "latent_dim"}, sz(&GeneratorConfig::latent_dim)},
        {{kData, "kept_dims"}, sz(&GeneratorConfig::kept_dims)},
        {{kData, "face_dim"}, sz(&GeneratorConfig::face_dim)},
        {{kData, "peri_dim"}, sz(&GeneratorConfig::peri_dim)},
        {{kData, "nuisance_dim"}, sz(&GeneratorConfig::nuisance_dim)},
        {{kData, "intra_noise"}, dd(&GeneratorConfig::intra_noise)},
        {{kData, "nuisance_strength"}, dd(&GeneratorConfig::nuisance_strength)},
        {{kData, "obs_noise"}, dd(&GeneratorConfig::obs_noise)},
        {{kData, "seed"},
         [](ExperimentConfig &c, const std::string &v, const std::string &k) {
             c.data.seed = parse_u64(v, k);
         }},
        {{kModel, "trunk_widths"},
         [](ExperimentConfig &c, const std::string &v, const std::string &k) {
             c.model.trunk_widths = parse_size_list(v, k);
         }},
        {{kModel, "head_width"},
         [](ExperimentConfig &c, const std::string &v, const std::string &k) {
             c.model.head_width = parse_size(v, k);
         }},
        {{kModel, "embed_dim"},
         [](ExperimentConfig &c, const std::string &v, const std::string &k) {
             c.model.embed_dim = parse_size(v, k);
         }},
        {{kModel, "bn_momentum"},
         [](ExperimentConfig &c, const std::string &v, const std::string &k) {
             c.model.bn_momentum = parse_double(v, k);
         }},
        {{kModel, "bn_epsilon"},
         [](ExperimentConfig &c, const std::string &v, const std::string &k) {
             c.model.bn_epsilon = parse_double(v, k);
         }},
        {{kTrain, "epochs"}, tsz(&TrainConfig::epochs)},
        {{kTrain, "batch_size"}, tsz(&TrainConfig::batch_size)},
        {{kTrain, "base_lr"}, tdd(&TrainConfig::base_lr)},
        {{kTrain, "momentum"}, tdd(&TrainConfig::momentum)},
        {{kTrain, "weight_decay"}, tdd(&TrainConfig::weight_decay)},
        {{kTrain, "lr_decay_factor"}, tdd(&TrainConfig::lr_decay_factor)},
        {{kTrain, "decay_epochs"}, tlist(&TrainConfig::decay_epochs)},
        {{kTrain, "tau"}, tdd(&TrainConfig::tau)},
        {{kTrain, "kd_face_epochs"}, tsz(&TrainConfig::kd_face_epochs)},
        {{kTrain, "kd_face_decay"}, tlist(&TrainConfig::kd_face_decay)},
        {{kTrain, "kd_peri_epochs"}, tsz(&TrainConfig::kd_peri_epochs)},
        {{kTrain, "kd_peri_decay"}, tlist(&TrainConfig::kd_peri_decay)},
        {{kTrain, "variant"},
         [](ExperimentConfig &c, const std::string &v, const std::string &) {
             c.train.variant = variant_from_name(v);
         }},
        {{kTrain, "seed"},
         [](ExperimentConfig &c, const std::string &v, const std::string &k) {
             c.train.seed = parse_u64(v, k);
         }},
        {{kExp, "variants"},
         [](ExperimentConfig &c, const std::string &v, const std::string &) {
             c.variants.clear();
             for (const auto &item : split_list(v))
                 c.variants.push_back(variant_from_name(item));
         }},
        {{kExp, "seeds"},
         [](ExperimentConfig &c, const std::string &v, const std::string &k) {
             c.seeds.clear();
             for (const auto &item : split_list(v))
                 c.seeds.push_back(parse_u64(item, k));
         }},
        {{kExp, "cmc_max_rank"},
         [](ExperimentConfig &c, const std::string &v, const std::string &k) {
             c.cmc_max_rank = parse_size(v, k);
         }},
        {{kExp, "calibration_bins"},
         [](ExperimentConfig &c, const std::string &v, const std::string &k) {
             c.calibration_bins = parse_size(v, k);
         }},
        {{kExp, "verification_samples"},
         [](ExperimentConfig &c, const std::string &v, const std::string &k) {
             c.verification_samples = parse_size(v, k);
         }},
    };

    std::string section;
    std::istringstream in(text);
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section != kData && section != kModel && section != kTrain &&
                section != kExp)
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": unknown section [" + section + "]");
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (section.empty())
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": key outside any section");
        auto it = table.find({section, key});
        if (it == table.end())
            throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" +
                              key + "' in section [" + section + "]");
        it->second(cfg, value, key);
    }
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string &path) {
    return parse_experiment_config(read_text(path));
}

std::string resolved_config_text(const ExperimentConfig &cfg) {
    std::ostringstream os;
    os.precision(17);
    auto sizes = [](const std::vector<std::size_t> &v) {
        return join<std::size_t>(v, [](const std::size_t &x) { return std::to_string(x); });
    };
    os << "[data]\n"
       << "num_train_ids = " << cfg.data.num_train_ids << "\n"
       << "num_test_ids = " << cfg.data.num_test_ids << "\n"
       << "samples_per_id = " << cfg.data.samples_per_id << "\n"
       << "latent_dim = " << cfg.data.latent_dim << "\n"
       << "kept_dims = " << cfg.data.kept_dims << "\n"
       << "face_dim = " << cfg.data.face_dim << "\n"
       << "peri_dim = " << cfg.data.peri_dim << "\n"
       << "nuisance_dim = " << cfg.data.nuisance_dim << "\n"
       << "intra_noise = " << fmt(cfg.data.intra_noise) << "\n"
       << "nuisance_strength = " << fmt(cfg.data.nuisance_strength) << "\n"
       << "obs_noise = " << fmt(cfg.data.obs_noise) << "\n"
       << "seed = " << cfg.data.seed << "\n\n"
       << "[model]\n"
       << "trunk_widths = " << sizes(cfg.model.trunk_widths) << "\n"
       << "head_width = " << cfg.model.head_width << "\n"
       << "embed_dim = " << cfg.model.embed_dim << "\n"
       << "bn_momentum = " << fmt(cfg.model.bn_momentum) << "\n"
       << "bn_epsilon = " << fmt(cfg.model.bn_epsilon) << "\n\n"
       << "[train]\n"
       << "epochs = " << cfg.train.epochs << "\n"
       << "batch_size = " << cfg.train.batch_size << "\n"
       << "base_lr = " << fmt(cfg.train.base_lr) << "\n"
       << "momentum = " << fmt(cfg.train.momentum) << "\n"
       << "weight_decay = " << fmt(cfg.train.weight_decay) << "\n"
       << "lr_decay_factor = " << fmt(cfg.train.lr_decay_factor) << "\n"
       << "decay_epochs = " << sizes(cfg.train.decay_epochs) << "\n"
       << "tau = " << fmt(cfg.train.tau) << "\n"
       << "variant = " << variant_name(cfg.train.variant) << "\n"
       << "seed = " << cfg.train.seed << "\n"
       << "kd_face_epochs = " << cfg.train.kd_face_epochs << "\n"
       << "kd_face_decay = " << sizes(cfg.train.kd_face_decay) << "\n"
       << "kd_peri_epochs = " << cfg.train.kd_peri_epochs << "\n"
       << "kd_peri_decay = " << sizes(cfg.train.kd_peri_decay) << "\n\n"
       << "[experiment]\n"
       << "variants = "
       << join<Variant>(cfg.variants, [](const Variant &v) { return variant_name(v); })
       << "\n"
       << "seeds = "
       << join<std::uint64_t>(cfg.seeds,
                              [](const std::uint64_t &s) { return std::to_string(s); })
       << "\n"
       << "cmc_max_rank = " << cfg.cmc_max_rank << "\n"
       << "calibration_bins = " << cfg.calibration_bins << "\n"
       << "verification_samples = " << cfg.verification_samples << "\n";
    return os.str();
}

ModelConfig cell_model_config(const ExperimentConfig &cfg, Variant v, std::uint64_t seed) {
    ModelConfig mc = cfg.model;
    mc.face_dim = cfg.data.face_dim;
    mc.peri_dim = cfg.data.peri_dim;
    mc.num_classes = cfg.data.num_train_ids;
    mc.seed = seed;
    return model_config_for_variant(mc, v);
}

TrainConfig cell_train_config(const ExperimentConfig &cfg, Variant v, std::uint64_t seed) {
    TrainConfig tc = cfg.train;
    tc.variant = v;
    tc.seed = seed;
    return tc;
}

namespace {

std::vector<double> logit_row(const Tensor &z, std::size_t i) {
    return std::vector<double>(z.values.begin() + i * z.cols,
                               z.values.begin() + (i + 1) * z.cols);
}

// Embeddings of the model's deployment view over a split.
EmbeddingGallery split_embeddings(const ModelState &m, const Split &s) {
    EmbeddingGallery g;
    g.labels = s.labels;
    g.embeddings = m.config.has_peri ? embed(m, s.x_peri) : embed_face(m, s.x_face);
    return g;
}

struct CellEval {
    MetricReport report;
    std::vector<double> cmc;
    RocResult roc;
};

CellEval evaluate_cell(const TrainResult &result, const Dataset &ds,
                       const ExperimentConfig &cfg, Variant v, std::uint64_t seed) {
    const ModelState &m = result.model;
    CellEval ev;
    MetricReport &r = ev.report;
    r.variant = variant_name(v);
    r.seed = seed;

    EmbeddingGallery gal = split_embeddings(m, ds.gallery);
    EmbeddingGallery probe = split_embeddings(m, ds.probe);
    ev.cmc = cmc_curve(gal, probe, cfg.cmc_max_rank);
    r.cmc = ev.cmc;
    r.dbi = davies_bouldin(probe);

    VerificationPairs vp = verification_pairs(ds.gallery, cfg.verification_samples, seed);
    ScoredPairs scores;
    std::size_t e = gal.embeddings.cols;
    auto score = [&](std::uint32_t a, std::uint32_t b) {
        return cosine(&gal.embeddings.values[a * e], &gal.embeddings.values[b * e], e);
    };
    for (auto [a, b] : vp.positives) scores.emplace_back(score(a, b), true);
    for (auto [a, b] : vp.negatives) scores.emplace_back(score(a, b), false);
    ev.roc = roc_eer(scores);
    r.eer = ev.roc.eer;

    // Posterior channels on the validation split. The face posterior
    // comes from the model itself when it has a face branch, otherwise
    // from the companion (teacher / partner) network.
    const Split &val = ds.validation;
    std::size_t n = val.size(), k = m.config.num_classes;
    Tensor z_p, z_f;
    if (m.config.has_peri || m.config.has_face) {
        LogitsPair lp = eval_logits(m, val.x_peri, val.x_face);
        z_p = std::move(lp.z_p);
        z_f = std::move(lp.z_f);
    }
    const ModelState *face_net = nullptr;
    if (m.config.has_face)
        face_net = &m;
    else if (result.has_teacher && result.teacher.config.has_face) {
        face_net = &result.teacher;
        z_f = eval_logits(result.teacher, val.x_peri, val.x_face).z_f;
    }
    bool has_p = z_p.rows == n, has_f = z_f.rows == n;

    const Tensor &z_dep = has_p ? z_p : z_f;  // deployment-view logits
    std::vector<std::pair<double, bool>> conf;
    double ent_sum = 0, nt_sum = 0;
    const Tensor &z_ent = has_f ? z_f : z_dep;  // sparsity channel follows the face side
    for (std::size_t i = 0; i < n; ++i) {
        auto p = softmax_tau(logit_row(z_dep, i), 1.0);
        std::size_t arg = 0;
        for (std::size_t j = 1; j < k; ++j)
            if (p[j] > p[arg]) arg = j;
        conf.emplace_back(p[arg], arg == val.labels[i]);
        if (k >= 3) {
            EntropyMetrics em =
                entropy_metrics(logit_row(z_ent, i), static_cast<int>(val.labels[i]));
            ent_sum += em.posterior_entropy;
            nt_sum += em.non_target_entropy;
        }
    }
    CalibrationResult cal = calibration(conf, cfg.calibration_bins);
    r.ece = cal.ece;
    r.mce = cal.mce;
    if (k >= 3) {
        r.mean_entropy = ent_sum / double(n);
        r.mean_non_target_entropy = nt_sum / double(n);
    }

    if (has_p && has_f) {
        double hel = 0, kl = 0;
        std::vector<std::vector<double>> pp(n), pf(n);
        for (std::size_t i = 0; i < n; ++i) {
            auto zp = logit_row(z_p, i), zf = logit_row(z_f, i);
            pp[i] = softmax_tau(zp, 1.0);
            pf[i] = softmax_tau(zf, 1.0);
            hel += hellinger(pp[i], pf[i]);
            kl += kl_tau(zf, zp, 1.0);
        }
        r.mean_hellinger = hel / double(n);
        r.mean_val_kl_f2p = kl / double(n);
        r.mutual_information = posterior_mutual_information(pp, pf);

        // Prototype structure needs both views' gallery embeddings.
        const ModelState &fn = *face_net;
        EmbeddingGallery gal_f;
        gal_f.labels = ds.gallery.labels;
        gal_f.embeddings = embed_face(fn, ds.gallery.x_face);
        EmbeddingGallery gal_p;
        gal_p.labels = ds.gallery.labels;
        gal_p.embeddings =
            m.config.has_peri ? gal.embeddings : embed(result.model, ds.gallery.x_peri);
        GramAnalysis ga = gram_analysis(class_prototypes(gal_f).first,
                                        class_prototypes(gal_p).first);
        r.gram_mean_offdiag_face = ga.mean_offdiag_face;
        r.gram_mean_offdiag_peri = ga.mean_offdiag_peri;
        r.gram_mean_abs_difference = ga.mean_abs_difference;
    }
    return ev;
}

}  // namespace

MetricReport evaluate_model(const TrainResult &result, const Dataset &dataset,
                            const ExperimentConfig &cfg, Variant v, std::uint64_t seed) {
    return evaluate_cell(result, dataset, cfg, v, seed).report;
}

MetricReport run_cell(const ExperimentConfig &cfg, const Dataset &dataset, Variant v,
                      std::uint64_t seed, const std::string &out_dir) {
    fs::create_directories(out_dir);
    ModelConfig mc = cell_model_config(cfg, v, seed);
    TrainConfig tc = cell_train_config(cfg, v, seed);
    TrainResult result = run_training(mc, tc, dataset);
    CellEval ev = evaluate_cell(result, dataset, cfg, v, seed);

    std::uint64_t h = config_hash(mc, tc);
    save_checkpoint(result.model, h, tc.epochs, out_dir + "/model.ckpt");
    if (result.has_teacher)
        save_checkpoint(result.teacher, h, tc.epochs, out_dir + "/teacher.ckpt");

    std::ostringstream log;
    log << epoch_log_csv_header() << "\n";
    for (const EpochLogRow &row : result.log) log << epoch_log_csv_row(row) << "\n";
    write_text(out_dir + "/epoch_log.csv", log.str());

    std::ostringstream cmc;
    cmc << "rank,rate\n";
    cmc.precision(17);
    for (std::size_t i = 0; i < ev.cmc.size(); ++i)
        cmc << (i + 1) << "," << ev.cmc[i] << "\n";
    write_text(out_dir + "/cmc.csv", cmc.str());

    std::ostringstream roc;
    roc << "threshold,far,frr\n";
    roc.precision(17);
    for (const RocPoint &p : ev.roc.points)
        roc << p.threshold << "," << p.far << "," << p.frr << "\n";
    write_text(out_dir + "/roc.csv", roc.str());

    write_text(out_dir + "/metrics.json", report_to_json(ev.report));
    return ev.report;
}

std::string summary_csv(const std::vector<AblationSummaryRow> &rows) {
    std::ostringstream os;
    os.precision(17);
    os << "variant,rank1_mean,eer_mean,gain_id,gain_ver\n";
    for (const AblationSummaryRow &r : rows)
        os << r.variant << "," << fmt(r.rank1_mean) << "," << fmt(r.eer_mean) << ","
           << csv_field(r.gain_id) << "," << csv_field(r.gain_ver) << "\n";
    return os.str();
}

std::vector<AblationSummaryRow> run_ablation(const ExperimentConfig &cfg,
                                             const std::string &out_dir) {
    cfg.validate();
    fs::create_directories(out_dir);
    write_text(out_dir + "/resolved_config.txt", resolved_config_text(cfg));
    Dataset ds = generate_dataset(cfg.data);

    std::vector<MetricReport> reports;
    for (Variant v : cfg.variants)
        for (std::uint64_t seed : cfg.seeds) {
            std::string cell_dir = out_dir + "/" + variant_name(v) + "/seed" +
                                   std::to_string(seed);
            reports.push_back(run_cell(cfg, ds, v, seed, cell_dir));
        }

    std::ostringstream all;
    all << report_csv_header() << "\n";
    for (const MetricReport &r : reports) all << report_csv_row(r) << "\n";
    write_text(out_dir + "/metrics.csv", all.str());

    std::map<std::string, std::pair<double, double>> means;  // variant -> (rank1, eer)
    for (Variant v : cfg.variants) {
        double r1 = 0, eer = 0;
        std::size_t cnt = 0;
        for (const MetricReport &r : reports)
            if (r.variant == variant_name(v)) {
                r1 += r.cmc.at(0);
                eer += r.eer;
                ++cnt;
            }
        means[variant_name(v)] = {r1 / double(cnt), eer / double(cnt)};
    }
    bool have_bounds = means.count(variant_name(Variant::CE)) &&
                       means.count(variant_name(Variant::CE_FACE));
    std::vector<AblationSummaryRow> rows;
    for (Variant v : cfg.variants) {
        AblationSummaryRow row;
        row.variant = variant_name(v);
        auto [r1, eer] = means.at(row.variant);
        row.rank1_mean = r1;
        row.eer_mean = eer;
        if (have_bounds) {
            auto [p1, pe] = means.at(variant_name(Variant::CE));
            auto [f1, fe] = means.at(variant_name(Variant::CE_FACE));
            if (f1 != p1) row.gain_id = relative_gain(r1, p1, f1);
            if (fe != pe) row.gain_ver = relative_gain(eer, pe, fe);
        }
        rows.push_back(row);
    }
    write_text(out_dir + "/summary.csv", summary_csv(rows));
    return rows;
}

void write_experiment_report(const std::string &run_dir) {
    ExperimentConfig cfg = load_experiment_config(run_dir + "/resolved_config.txt");
    std::vector<std::string> missing;
    struct Cell {
        std::string variant;
        std::uint64_t seed;
        std::string dir;
    };
    std::vector<Cell> cells;
    for (Variant v : cfg.variants)
        for (std::uint64_t seed : cfg.seeds) {
            std::string dir =
                run_dir + "/" + variant_name(v) + "/seed" + std::to_string(seed);
            for (const char *f : {"/metrics.json", "/epoch_log.csv"})
                if (!fs::exists(dir + f)) missing.push_back(dir + f);
            cells.push_back({variant_name(v), seed, dir});
        }
    if (!missing.empty()) {
        std::string msg = "experiment report: missing run artifacts:";
        for (const std::string &m : missing) msg += " " + m;
        throw IoError(msg);
    }

    std::ostringstream entropy, posterior, gram, clustering, curves;
    for (std::ostringstream *os : {&entropy, &posterior, &gram, &clustering, &curves})
        os->precision(17);
    entropy << "variant,seed,mean_entropy,mean_non_target_entropy\n";
    posterior << "variant,seed,hellinger,mutual_information,ece,mce\n";
    gram << "variant,seed,mean_offdiag_face,mean_offdiag_peri,mean_abs_difference\n";
    clustering << "variant,seed,dbi\n";
    curves << "variant,seed," << epoch_log_csv_header() << "\n";

    for (const Cell &c : cells) {
        MetricReport r = report_from_json(read_text(c.dir + "/metrics.json"));
        std::string prefix = c.variant + "," + std::to_string(c.seed) + ",";
        entropy << prefix << csv_field(r.mean_entropy) << ","
                << csv_field(r.mean_non_target_entropy) << "\n";
        posterior << prefix << csv_field(r.mean_hellinger) << ","
                  << csv_field(r.mutual_information) << "," << csv_field(r.ece) << ","
                  << csv_field(r.mce) << "\n";
        gram << prefix << csv_field(r.gram_mean_offdiag_face) << ","
             << csv_field(r.gram_mean_offdiag_peri) << ","
             << csv_field(r.gram_mean_abs_difference) << "\n";
        clustering << prefix << csv_field(r.dbi) << "\n";
        std::istringstream log(read_text(c.dir + "/epoch_log.csv"));
        std::string line;
        std::getline(log, line);  // header
        while (std::getline(log, line))
            if (!line.empty()) curves << prefix << line << "\n";
    }

    std::string report_dir = run_dir + "/report";
    fs::create_directories(report_dir);
    write_text(report_dir + "/entropy.csv", entropy.str());
    write_text(report_dir + "/posterior.csv", posterior.str());
    write_text(report_dir + "/gram.csv", gram.str());
    write_text(report_dir + "/clustering.csv", clustering.str());
    write_text(report_dir + "/curves.csv", curves.str());
}

}  // namespace ckd
