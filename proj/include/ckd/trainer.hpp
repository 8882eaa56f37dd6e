#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ckd/model.hpp"
#include "ckd/synth_data.hpp"

namespace ckd {

enum class Variant {
    CE,            // periocular-only cross entropy (lower bound)
    CE_FACE,       // face-only cross entropy (upper bound)
    CLASS_SW_SBS,  // classification loss only, shared weights + batch stats
    F2P_SW_SBS,    // one-way face-to-periocular distillation, SW + SBS
    CKD_NO_SHARE,  // bidirectional KL, independent networks
    CKD_SW,        // bidirectional KL, shared weights, per-view batch stats
    CKD_FULL,      // bidirectional KL + SW + SBS
    SMOOTH_ONLY,   // label-smoothing part of the decomposition, no regularizer
    KD_TWO_STAGE,  // frozen face teacher distilled into a periocular student
    ML,            // mutual learning: two networks, alternating updates
};

std::string variant_name(Variant v);
Variant variant_from_name(const std::string &name);
const std::vector<Variant> &all_variants();

struct TrainConfig {
    std::size_t epochs = 60;
    std::size_t batch_size = 64;
    double base_lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double lr_decay_factor = 0.1;
    std::vector<std::size_t> decay_epochs{20, 40, 54};
    double tau = 2.5;
    Variant variant = Variant::CKD_FULL;
    std::uint64_t seed = 0;
    // Two-stage KD budgets (teacher, then student), scaled from the
    // single-stage schedule.
    std::size_t kd_face_epochs = 33;
    std::vector<std::size_t> kd_face_decay{10, 20, 27};
    std::size_t kd_peri_epochs = 27;
    std::vector<std::size_t> kd_peri_decay{7, 13, 20};

    void validate() const;
};

double lr_for_schedule(double base_lr, double factor,
                       const std::vector<std::size_t> &decay_epochs, std::size_t epoch);
// Schedule of the config's single-stage run; errors if epoch >= epochs.
double lr_at_epoch(const TrainConfig &config, std::size_t epoch);

struct OptState {
    std::map<std::string, Tensor> velocity;
};

// v <- momentum * v + (grad + weight_decay * param); param <- param - lr * v
void sgd_update(ModelState &state, const std::map<std::string, Tensor> &grads,
                OptState &opt, double lr, double momentum, double weight_decay);

struct EpochLogRow {
    std::size_t epoch = 0;
    double lr = 0;
    double train_class_loss = 0;
    double train_ckd_loss = 0;  // NaN when the variant has no distillation term
    double val_class_loss = 0;
    double val_ckd_loss = 0;
    double val_kl_f2p = 0;  // D_KL(p^F || p) at tau = 1, NaN without a face posterior
};

std::string epoch_log_csv_header();
std::string epoch_log_csv_row(const EpochLogRow &r);

struct TrainResult {
    ModelState model;    // deployment network (periocular side)
    ModelState teacher;  // face network for KD_TWO_STAGE / ML
    bool has_teacher = false;
    std::vector<EpochLogRow> log;
};

// Derives per-variant sharing flags and view set from a base config.
ModelConfig model_config_for_variant(ModelConfig base, Variant v);

TrainResult run_training(const ModelConfig &model_config, const TrainConfig &train_config,
                         const Dataset &dataset);

std::uint64_t config_hash(const ModelConfig &mc, const TrainConfig &tc);
void save_checkpoint(const ModelState &state, std::uint64_t cfg_hash, std::size_t epoch,
                     const std::string &path);
// Returns the state; cfg_hash / epoch report what was stored.
ModelState load_checkpoint(const std::string &path, std::uint64_t *cfg_hash = nullptr,
                           std::size_t *epoch = nullptr);

}  // namespace ckd
