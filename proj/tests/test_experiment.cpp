#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ckd/experiment.hpp"

using namespace ckd;
namespace fs = std::filesystem;

namespace {

// Small enough that a four-variant grid trains in well under a second.
ExperimentConfig tiny_experiment() {
    ExperimentConfig cfg;
    cfg.data.num_train_ids = 6;
    cfg.data.num_test_ids = 4;
    cfg.data.samples_per_id = 10;
    cfg.data.latent_dim = 8;
    cfg.data.kept_dims = 4;
    cfg.data.face_dim = 12;
    cfg.data.peri_dim = 6;
    cfg.data.nuisance_dim = 3;
    cfg.model.trunk_widths = {8};
    cfg.model.embed_dim = 4;
    cfg.train.epochs = 3;
    cfg.train.batch_size = 8;
    cfg.train.decay_epochs = {2};
    cfg.train.kd_face_epochs = 2;
    cfg.train.kd_face_decay = {1};
    cfg.train.kd_peri_epochs = 2;
    cfg.train.kd_peri_decay = {1};
    cfg.variants = {Variant::CE, Variant::CE_FACE, Variant::CKD_FULL,
                    Variant::KD_TWO_STAGE};
    cfg.seeds = {0};
    cfg.verification_samples = 3;
    return cfg;
}

std::string read_file(const std::string &path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

std::size_t line_count(const std::string &text) {
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string &name) : path(fs::path("tmp_exp") / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("resolved config text parses back to an identical config") {
    ExperimentConfig cfg = tiny_experiment();
    cfg.train.tau = 3.25;
    cfg.data.intra_noise = 0.125;
    std::string text = resolved_config_text(cfg);
    ExperimentConfig back = parse_experiment_config(text);
    CHECK(resolved_config_text(back) == text);

    // Defaults round-trip too.
    ExperimentConfig defaults;
    CHECK(resolved_config_text(parse_experiment_config(resolved_config_text(defaults))) ==
          resolved_config_text(defaults));
}

TEST_CASE("config files accept comments and set every section") {
    std::string text =
        "# ablation setup\n"
        "[data]\n"
        "num_train_ids = 5\n"
        "intra_noise = 0.25\n"
        "; a comment\n"
        "[model]\n"
        "trunk_widths = 16,8\n"
        "embed_dim = 6\n"
        "[train]\n"
        "epochs = 7\n"
        "decay_epochs = 3,5\n"
        "variant = CKD_SW\n"
        "[experiment]\n"
        "variants = CE, CKD_FULL\n"
        "seeds = 1, 2, 3\n"
        "calibration_bins = 9\n";
    ExperimentConfig cfg = parse_experiment_config(text);
    CHECK(cfg.data.num_train_ids == 5);
    CHECK(cfg.data.intra_noise == 0.25);
    CHECK(cfg.model.trunk_widths == std::vector<std::size_t>{16, 8});
    CHECK(cfg.model.embed_dim == 6);
    CHECK(cfg.train.epochs == 7);
    CHECK(cfg.train.decay_epochs == std::vector<std::size_t>{3, 5});
    CHECK(cfg.train.variant == Variant::CKD_SW);
    CHECK(cfg.variants == std::vector<Variant>{Variant::CE, Variant::CKD_FULL});
    CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2, 3});
    CHECK(cfg.calibration_bins == 9);
    // Untouched keys keep their defaults.
    CHECK(cfg.data.num_test_ids == 32);
    CHECK(cfg.train.momentum == 0.9);
}

TEST_CASE("config typos are hard errors with line numbers") {
    auto expect_error = [](const std::string &text, const std::string &needle) {
        try {
            parse_experiment_config(text);
            FAIL("expected ConfigError for: " << needle);
        } catch (const ConfigError &e) {
            INFO(e.what());
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    expect_error("[data]\nnum_train_idz = 4\n", "unknown key 'num_train_idz'");
    expect_error("[data]\nnum_train_idz = 4\n", "line 2");
    expect_error("[datas]\n", "unknown section [datas]");
    expect_error("[data]\nnum_train_ids = four\n", "bad integer 'four'");
    expect_error("[train]\nbase_lr = fast\n", "bad number 'fast'");
    expect_error("num_train_ids = 4\n", "key outside any section");
    expect_error("[data\n", "malformed section header");
    expect_error("[data]\nnum_train_ids\n", "expected key = value");
    expect_error("[train]\nvariant = CKD_ULTRA\n", "unknown variant");
}

TEST_CASE("experiment validation rejects degenerate grids") {
    ExperimentConfig cfg = tiny_experiment();
    cfg.variants.clear();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_experiment();
    cfg.seeds.clear();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_experiment();
    cfg.verification_samples = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_experiment();
    cfg.cmc_max_rank = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_NOTHROW(tiny_experiment().validate());
}

TEST_CASE("cell configs derive dimensions from the data section") {
    ExperimentConfig cfg = tiny_experiment();
    ModelConfig mc = cell_model_config(cfg, Variant::CKD_FULL, 5);
    CHECK(mc.face_dim == cfg.data.face_dim);
    CHECK(mc.peri_dim == cfg.data.peri_dim);
    CHECK(mc.num_classes == cfg.data.num_train_ids);
    CHECK(mc.seed == 5);
    CHECK(mc.share_weights);
    CHECK(mc.share_batch_stats);
    ModelConfig ce = cell_model_config(cfg, Variant::CE, 5);
    CHECK(!ce.has_face);
    TrainConfig tc = cell_train_config(cfg, Variant::CE, 5);
    CHECK(tc.variant == Variant::CE);
    CHECK(tc.seed == 5);
}

TEST_CASE("a small ablation grid produces exact gain endpoints and all artifacts") {
    TempDir dir("grid");
    ExperimentConfig cfg = tiny_experiment();
    auto rows = run_ablation(cfg, dir.str());
    REQUIRE(rows.size() == cfg.variants.size());
    for (const AblationSummaryRow &r : rows) {
        if (r.variant == "CE") {
            CHECK(r.gain_id == 0.0);
            CHECK(r.gain_ver == 0.0);
        }
        if (r.variant == "CE_FACE") {
            CHECK(r.gain_id == 100.0);
            CHECK(r.gain_ver == 100.0);
        }
    }

    CHECK(fs::exists(dir.path / "resolved_config.txt"));
    CHECK(fs::exists(dir.path / "summary.csv"));
    std::string metrics = read_file((dir.path / "metrics.csv").string());
    CHECK(line_count(metrics) == cfg.variants.size() * cfg.seeds.size() + 1);

    for (const char *cell : {"CE/seed0", "CE_FACE/seed0", "CKD_FULL/seed0",
                             "KD_TWO_STAGE/seed0"}) {
        for (const char *f : {"model.ckpt", "metrics.json", "epoch_log.csv", "cmc.csv",
                              "roc.csv"}) {
            INFO(cell << "/" << f);
            CHECK(fs::exists(dir.path / cell / f));
        }
    }
    CHECK(fs::exists(dir.path / "KD_TWO_STAGE/seed0/teacher.ckpt"));
    CHECK(!fs::exists(dir.path / "CE/seed0/teacher.ckpt"));

    // Two-view variants fill the posterior channels; single-view ones leave
    // them missing.
    MetricReport full = report_from_json(
        read_file((dir.path / "CKD_FULL/seed0/metrics.json").string()));
    CHECK(std::isfinite(full.mean_hellinger));
    CHECK(std::isfinite(full.mutual_information));
    CHECK(std::isfinite(full.gram_mean_abs_difference));
    MetricReport ce = report_from_json(
        read_file((dir.path / "CE/seed0/metrics.json").string()));
    CHECK(std::isnan(ce.mean_hellinger));
    REQUIRE(ce.cmc.size() == cfg.cmc_max_rank);
    for (std::size_t i = 1; i < ce.cmc.size(); ++i) CHECK(ce.cmc[i] >= ce.cmc[i - 1]);

    SUBCASE("stored checkpoints re-evaluate to the stored metrics") {
        Dataset ds = generate_dataset(cfg.data);
        TrainResult result;
        result.model =
            load_checkpoint((dir.path / "CKD_FULL/seed0/model.ckpt").string());
        MetricReport again = evaluate_model(result, ds, cfg, Variant::CKD_FULL, 0);
        CHECK(again.cmc == full.cmc);
        CHECK(again.eer == full.eer);
        CHECK(again.dbi == full.dbi);
        CHECK(again.mean_hellinger == full.mean_hellinger);
        CHECK(again.mutual_information == full.mutual_information);
    }

    SUBCASE("the consolidated report is complete and idempotent") {
        write_experiment_report(dir.str());
        std::size_t cells = cfg.variants.size() * cfg.seeds.size();
        for (const char *f : {"entropy.csv", "posterior.csv", "gram.csv",
                              "clustering.csv", "curves.csv"}) {
            INFO(f);
            REQUIRE(fs::exists(dir.path / "report" / f));
        }
        CHECK(line_count(read_file((dir.path / "report/entropy.csv").string())) ==
              cells + 1);
        CHECK(line_count(read_file((dir.path / "report/clustering.csv").string())) ==
              cells + 1);
        std::string posterior_before = read_file((dir.path / "report/posterior.csv").string());
        write_experiment_report(dir.str());
        CHECK(read_file((dir.path / "report/posterior.csv").string()) == posterior_before);
    }

    SUBCASE("missing artifacts are listed in the report error") {
        fs::remove(dir.path / "CKD_FULL/seed0/metrics.json");
        fs::remove(dir.path / "CE/seed0/epoch_log.csv");
        try {
            write_experiment_report(dir.str());
            FAIL("expected IoError");
        } catch (const IoError &e) {
            std::string what = e.what();
            CHECK(what.find("CKD_FULL/seed0/metrics.json") != std::string::npos);
            CHECK(what.find("CE/seed0/epoch_log.csv") != std::string::npos);
        }
    }
}

TEST_CASE("ablation reruns with identical seeds are bitwise identical") {
    TempDir a("rerun_a");
    TempDir b("rerun_b");
    ExperimentConfig cfg = tiny_experiment();
    cfg.variants = {Variant::CE, Variant::CKD_FULL};
    run_ablation(cfg, a.str());
    run_ablation(cfg, b.str());
    for (const char *f : {"metrics.csv", "summary.csv", "CE/seed0/metrics.json",
                          "CKD_FULL/seed0/metrics.json", "CKD_FULL/seed0/epoch_log.csv"}) {
        INFO(f);
        CHECK(read_file((a.path / f).string()) == read_file((b.path / f).string()));
    }
}
