#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ckd.h"

namespace {

// --out is resolved against CKD_OUT_ROOT when it is set and the path is
// relative; otherwise used as given.
std::string resolve_out(const std::string &out) {
    const char *root = std::getenv("CKD_OUT_ROOT");
    if (!root || out.empty() || out.front() == '/') return out;
    return std::string(root) + "/" + out;
}

int finish(ckd_status status) {
    if (status != CKD_OK) std::cerr << "error: " << ckd_last_error() << "\n";
    return static_cast<int>(status);
}

const char *opt(const std::string &s) { return s.empty() ? nullptr : s.c_str(); }

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Two-view consistent-distillation laboratory"};
    app.require_subcommand(1);

    std::string config, out, variant, cell;
    std::uint64_t seed = 0;
    bool has_seed = false;
    auto add_common = [&](CLI::App *cmd, bool with_config) {
        if (with_config) cmd->add_option("--config", config, "experiment config file");
        cmd->add_option("--seed", seed, "seed override")->each([&](const std::string &) {
            has_seed = true;
        });
        cmd->add_option("--out", out, "output path")->required();
    };

    auto *gen = app.add_subcommand("gen-data", "generate the synthetic paired-view dataset");
    add_common(gen, true);

    auto *train = app.add_subcommand("train", "train one variant and evaluate it");
    add_common(train, true);
    train->add_option("--variant", variant, "training variant name");

    auto *ablate = app.add_subcommand("ablate", "run the full variant x seed grid");
    ablate->add_option("--config", config, "experiment config file");
    ablate->add_option("--out", out, "output directory")->required();

    auto *eval = app.add_subcommand("eval", "re-evaluate a trained cell from checkpoints");
    add_common(eval, true);
    eval->add_option("--cell", cell, "trained cell directory")->required();
    eval->add_option("--variant", variant, "variant the cell was trained with");

    auto *theory = app.add_subcommand("verify-theory", "run the analytic check suite");
    add_common(theory, false);

    auto *report = app.add_subcommand("report", "collate an ablation run into figure CSVs");
    report->add_option("--out", out, "ablation run directory")->required();

    CLI11_PARSE(app, argc, argv);
    std::string dest = resolve_out(out);

    if (gen->parsed())
        return finish(ckd_generate_dataset(opt(config), has_seed, seed, dest.c_str()));
    if (train->parsed())
        return finish(ckd_train(opt(config), opt(variant), has_seed, seed, dest.c_str()));
    if (ablate->parsed()) return finish(ckd_ablate(opt(config), dest.c_str()));
    if (eval->parsed())
        return finish(ckd_eval(opt(config), cell.c_str(), opt(variant), has_seed, seed,
                               dest.c_str()));
    if (theory->parsed()) return finish(ckd_verify_theory(seed, dest.c_str()));
    if (report->parsed()) return finish(ckd_report(dest.c_str()));
    return 0;
}
