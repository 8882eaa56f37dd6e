#include "ckd.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "ckd/experiment.hpp"
#include "ckd/theory.hpp"

namespace {

thread_local std::string g_last_error;

template <typename Fn>
ckd_status guarded(Fn &&fn) {
    try {
        fn();
        return CKD_OK;
    } catch (const ckd::IoError &e) {
        g_last_error = e.what();
        return CKD_ERR_IO;
    } catch (const ckd::ConfigError &e) {
        g_last_error = e.what();
        return CKD_ERR_CONFIG;
    } catch (const ckd::ShapeError &e) {
        g_last_error = e.what();
        return CKD_ERR_SHAPE;
    } catch (const ckd::DomainError &e) {
        g_last_error = e.what();
        return CKD_ERR_DOMAIN;
    } catch (const ckd::StateError &e) {
        g_last_error = e.what();
        return CKD_ERR_STATE;
    } catch (const std::exception &e) {
        g_last_error = e.what();
        return CKD_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return CKD_ERR_INTERNAL;
    }
}

ckd_status require(bool ok, const char *msg) {
    if (ok) return CKD_OK;
    g_last_error = msg;
    return CKD_ERR_STATE;
}

ckd::ExperimentConfig load_or_default(const char *config_path) {
    if (!config_path) return {};
    return ckd::load_experiment_config(config_path);
}

void write_file(const std::string &path, const std::string &content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ckd::IoError("cannot open " + path + " for writing");
    f << content;
    if (!f) throw ckd::IoError("write failure on " + path);
}

}  // namespace

extern "C" {

const char *ckd_last_error(void) { return g_last_error.c_str(); }

ckd_status ckd_generate_dataset(const char *config_path, int has_seed,
                                uint64_t seed_override, const char *out_path) {
    if (ckd_status s = require(out_path, "out_path is null"); s != CKD_OK) return s;
    return guarded([&] {
        ckd::ExperimentConfig cfg = load_or_default(config_path);
        if (has_seed) cfg.data.seed = seed_override;
        ckd::save_dataset(ckd::generate_dataset(cfg.data), out_path);
    });
}

ckd_status ckd_train(const char *config_path, const char *variant, int has_seed,
                     uint64_t seed_override, const char *out_dir) {
    if (ckd_status s = require(out_dir, "out_dir is null"); s != CKD_OK) return s;
    return guarded([&] {
        ckd::ExperimentConfig cfg = load_or_default(config_path);
        ckd::Variant v = variant ? ckd::variant_from_name(variant) : cfg.train.variant;
        uint64_t seed = has_seed ? seed_override : cfg.train.seed;
        ckd::Dataset ds = ckd::generate_dataset(cfg.data);
        std::filesystem::create_directories(out_dir);
        write_file(std::string(out_dir) + "/resolved_config.txt",
                   ckd::resolved_config_text(cfg));
        ckd::run_cell(cfg, ds, v, seed, out_dir);
    });
}

ckd_status ckd_ablate(const char *config_path, const char *out_dir) {
    if (ckd_status s = require(out_dir, "out_dir is null"); s != CKD_OK) return s;
    return guarded([&] { ckd::run_ablation(load_or_default(config_path), out_dir); });
}

ckd_status ckd_eval(const char *config_path, const char *cell_dir, const char *variant,
                    int has_seed, uint64_t seed_override, const char *out_json_path) {
    if (ckd_status s = require(cell_dir && out_json_path,
                               "cell_dir or out_json_path is null");
        s != CKD_OK)
        return s;
    return guarded([&] {
        ckd::ExperimentConfig cfg = load_or_default(config_path);
        ckd::Variant v = variant ? ckd::variant_from_name(variant) : cfg.train.variant;
        uint64_t seed = has_seed ? seed_override : cfg.train.seed;
        ckd::Dataset ds = ckd::generate_dataset(cfg.data);
        ckd::TrainResult result;
        result.model = ckd::load_checkpoint(std::string(cell_dir) + "/model.ckpt");
        std::string teacher_path = std::string(cell_dir) + "/teacher.ckpt";
        if (std::filesystem::exists(teacher_path)) {
            result.teacher = ckd::load_checkpoint(teacher_path);
            result.has_teacher = true;
        }
        ckd::MetricReport r = ckd::evaluate_model(result, ds, cfg, v, seed);
        write_file(out_json_path, ckd::report_to_json(r));
    });
}

ckd_status ckd_verify_theory(uint64_t seed, const char *out_dir) {
    if (ckd_status s = require(out_dir, "out_dir is null"); s != CKD_OK) return s;
    bool all_pass = false;
    ckd_status s = guarded([&] {
        std::filesystem::create_directories(out_dir);
        ckd::TheoryReport report = ckd::run_theory_suite(seed);
        write_file(std::string(out_dir) + "/theory_report.json",
                   ckd::theory_report_to_json(report));
        write_file(std::string(out_dir) + "/regularizer_grid.csv",
                   ckd::regularizer_grid_csv(
                       ckd::regularizer_grid({1.25, 2.5, 5.0}, -5.0, 5.0, 41)));
        all_pass = report.all_pass();
    });
    if (s != CKD_OK) return s;
    if (!all_pass) {
        g_last_error = "one or more theory checks failed; see theory_report.json";
        return CKD_ERR_DOMAIN;
    }
    return CKD_OK;
}

ckd_status ckd_report(const char *run_dir) {
    if (ckd_status s = require(run_dir, "run_dir is null"); s != CKD_OK) return s;
    return guarded([&] { ckd::write_experiment_report(run_dir); });
}

struct ckd_model {
    ckd::ModelState state;
};

ckd_status ckd_model_load(const char *checkpoint_path, ckd_model **out) {
    if (ckd_status s = require(checkpoint_path && out, "checkpoint_path or out is null");
        s != CKD_OK)
        return s;
    return guarded([&] {
        auto *m = new ckd_model{ckd::load_checkpoint(checkpoint_path)};
        m->state.training = false;
        *out = m;
    });
}

void ckd_model_free(ckd_model *m) { delete m; }

ckd_status ckd_model_embed_dim(const ckd_model *m, size_t *out_dim) {
    if (ckd_status s = require(m && out_dim, "null argument"); s != CKD_OK) return s;
    *out_dim = m->state.config.embed_dim;
    return CKD_OK;
}

ckd_status ckd_model_input_dim(const ckd_model *m, size_t *out_dim) {
    if (ckd_status s = require(m && out_dim, "null argument"); s != CKD_OK) return s;
    const ckd::ModelConfig &c = m->state.config;
    *out_dim = c.has_peri ? c.peri_dim : c.face_dim;
    return CKD_OK;
}

ckd_status ckd_model_embed(const ckd_model *m, const double *x, size_t rows, size_t cols,
                           double *out) {
    if (ckd_status s = require(m && x && out && rows > 0, "null argument or empty batch");
        s != CKD_OK)
        return s;
    return guarded([&] {
        ckd::Tensor input(rows, cols, std::vector<double>(x, x + rows * cols));
        const ckd::ModelConfig &c = m->state.config;
        ckd::Tensor u = c.has_peri ? ckd::embed(m->state, input)
                                   : ckd::embed_face(m->state, input);
        std::memcpy(out, u.values.data(), u.values.size() * sizeof(double));
    });
}

}  // extern "C"
