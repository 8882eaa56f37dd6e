#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ckd.h"
#include "ckd/experiment.hpp"

namespace fs = std::filesystem;

namespace {

const char *kTinyConfig =
    "[data]\n"
    "num_train_ids = 6\n"
    "num_test_ids = 4\n"
    "samples_per_id = 10\n"
    "latent_dim = 8\n"
    "kept_dims = 4\n"
    "face_dim = 12\n"
    "peri_dim = 6\n"
    "nuisance_dim = 3\n"
    "[model]\n"
    "trunk_widths = 8\n"
    "embed_dim = 4\n"
    "[train]\n"
    "epochs = 3\n"
    "batch_size = 8\n"
    "decay_epochs = 2\n"
    "kd_face_epochs = 2\n"
    "kd_face_decay = 1\n"
    "kd_peri_epochs = 2\n"
    "kd_peri_decay = 1\n"
    "[experiment]\n"
    "variants = CE, CKD_FULL\n"
    "seeds = 0\n"
    "verification_samples = 3\n";

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string &name) : path(fs::path("tmp_capi") / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

std::string write_config(const TempDir &dir) {
    std::string path = (dir.path / "config.ini").string();
    std::ofstream f(path);
    f << kTinyConfig;
    return path;
}

}  // namespace

TEST_CASE("null arguments yield state errors with messages") {
    CHECK(ckd_generate_dataset(nullptr, 0, 0, nullptr) == CKD_ERR_STATE);
    CHECK(std::string(ckd_last_error()).find("null") != std::string::npos);
    CHECK(ckd_train(nullptr, nullptr, 0, 0, nullptr) == CKD_ERR_STATE);
    CHECK(ckd_ablate(nullptr, nullptr) == CKD_ERR_STATE);
    CHECK(ckd_eval(nullptr, nullptr, nullptr, 0, 0, nullptr) == CKD_ERR_STATE);
    CHECK(ckd_verify_theory(0, nullptr) == CKD_ERR_STATE);
    CHECK(ckd_report(nullptr) == CKD_ERR_STATE);
    CHECK(ckd_model_load(nullptr, nullptr) == CKD_ERR_STATE);
    CHECK(ckd_model_embed_dim(nullptr, nullptr) == CKD_ERR_STATE);
    CHECK(ckd_model_embed(nullptr, nullptr, 0, 0, nullptr) == CKD_ERR_STATE);
}

TEST_CASE("io and config failures map to distinct status codes") {
    TempDir dir("errors");
    CHECK(ckd_generate_dataset("no_such_config.ini", 0, 0,
                               (dir.path / "d.ckds").string().c_str()) == CKD_ERR_IO);
    CHECK(std::string(ckd_last_error()).find("no_such_config.ini") != std::string::npos);

    std::string bad = (dir.path / "bad.ini").string();
    {
        std::ofstream f(bad);
        f << "[data]\nnum_train_idz = 3\n";
    }
    CHECK(ckd_generate_dataset(bad.c_str(), 0, 0,
                               (dir.path / "d.ckds").string().c_str()) == CKD_ERR_CONFIG);
    CHECK(std::string(ckd_last_error()).find("unknown key") != std::string::npos);

    CHECK(ckd_report((dir.path / "missing_run").string().c_str()) == CKD_ERR_IO);
    ckd_model *m = nullptr;
    CHECK(ckd_model_load((dir.path / "nothing.ckpt").string().c_str(), &m) == CKD_ERR_IO);
    CHECK(m == nullptr);
}

TEST_CASE("dataset generation writes a loadable file honoring the seed override") {
    TempDir dir("gen");
    std::string cfg = write_config(dir);
    std::string out = (dir.path / "data.ckds").string();
    REQUIRE(ckd_generate_dataset(cfg.c_str(), 1, 77, out.c_str()) == CKD_OK);
    ckd::Dataset ds = ckd::load_dataset(out);
    CHECK(ds.config.seed == 77);
    CHECK(ds.config.num_train_ids == 6);
    CHECK(ds.train.size() > 0);
}

TEST_CASE("theory verification succeeds and writes its artifacts") {
    TempDir dir("theory");
    REQUIRE(ckd_verify_theory(0, dir.str().c_str()) == CKD_OK);
    CHECK(fs::exists(dir.path / "theory_report.json"));
    CHECK(fs::exists(dir.path / "regularizer_grid.csv"));
    std::ifstream f(dir.path / "theory_report.json");
    std::ostringstream os;
    os << f.rdbuf();
    CHECK(os.str().find("\"all_pass\": true") != std::string::npos);
}

TEST_CASE("training through the c api produces a usable model handle") {
    TempDir dir("train");
    std::string cfg = write_config(dir);
    std::string cell = (dir.path / "cell").string();
    REQUIRE(ckd_train(cfg.c_str(), "CKD_FULL", 1, 0, cell.c_str()) == CKD_OK);
    CHECK(fs::exists(fs::path(cell) / "metrics.json"));
    CHECK(fs::exists(fs::path(cell) / "model.ckpt"));

    ckd_model *m = nullptr;
    REQUIRE(ckd_model_load((fs::path(cell) / "model.ckpt").string().c_str(), &m) == CKD_OK);
    REQUIRE(m != nullptr);
    size_t embed_dim = 0, input_dim = 0;
    CHECK(ckd_model_embed_dim(m, &embed_dim) == CKD_OK);
    CHECK(ckd_model_input_dim(m, &input_dim) == CKD_OK);
    CHECK(embed_dim == 4);
    CHECK(input_dim == 6);  // deployment view is the periocular one

    // The C embedding matches the C++ path bitwise.
    ckd::ExperimentConfig ecfg = ckd::load_experiment_config(cfg);
    ckd::Dataset ds = ckd::generate_dataset(ecfg.data);
    std::size_t rows = 5;
    std::vector<double> out(rows * embed_dim, 0.0);
    REQUIRE(ckd_model_embed(m, ds.probe.x_peri.values.data(), rows, input_dim,
                            out.data()) == CKD_OK);
    ckd::ModelState state = ckd::load_checkpoint((fs::path(cell) / "model.ckpt").string());
    ckd::Tensor probe_rows(rows, input_dim,
                           std::vector<double>(ds.probe.x_peri.values.begin(),
                                               ds.probe.x_peri.values.begin() +
                                                   rows * input_dim));
    ckd::Tensor expect = ckd::embed(state, probe_rows);
    CHECK(out == expect.values);

    // Wrong input width surfaces as a shape error.
    CHECK(ckd_model_embed(m, ds.probe.x_face.values.data(), rows, 12, out.data()) ==
          CKD_ERR_SHAPE);
    ckd_model_free(m);
    ckd_model_free(nullptr);  // harmless

    // Re-evaluating the stored cell reproduces metrics.json.
    std::string again = (dir.path / "metrics_again.json").string();
    REQUIRE(ckd_eval(cfg.c_str(), cell.c_str(), "CKD_FULL", 1, 0, again.c_str()) == CKD_OK);
    auto slurp = [](const std::string &p) {
        std::ifstream f(p, std::ios::binary);
        std::ostringstream os;
        os << f.rdbuf();
        return os.str();
    };
    CHECK(slurp(again) == slurp((fs::path(cell) / "metrics.json").string()));
}

TEST_CASE("the ablation entry point runs the full grid") {
    TempDir dir("ablate");
    std::string cfg = write_config(dir);
    std::string out = (dir.path / "run").string();
    REQUIRE(ckd_ablate(cfg.c_str(), out.c_str()) == CKD_OK);
    CHECK(fs::exists(fs::path(out) / "summary.csv"));
    CHECK(fs::exists(fs::path(out) / "CE/seed0/metrics.json"));
    CHECK(fs::exists(fs::path(out) / "CKD_FULL/seed0/metrics.json"));
    REQUIRE(ckd_report(out.c_str()) == CKD_OK);
    CHECK(fs::exists(fs::path(out) / "report/posterior.csv"));
}
