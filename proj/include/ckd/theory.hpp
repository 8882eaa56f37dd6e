#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ckd/model.hpp"
#include "ckd/synth_data.hpp"

namespace ckd {

struct TheoryCheck {
    std::string claim;
    std::size_t trials = 0;
    double residual = 0;   // worst observed residual or limit gap
    double tolerance = 0;
    bool pass = false;
};

struct TheoryReport {
    std::vector<TheoryCheck> checks;
    bool all_pass() const;
};

// Cross-entropy temperature identity: H(p^F_tau, p_tau) equals
// (1/tau) H(p^F_tau, p) + (1/tau) R(z) on random logit pairs.
TheoryCheck verify_temperature_split(std::size_t trials, std::size_t k_min, std::size_t k_max,
                          double tau_min, double tau_max, std::uint64_t seed);

// Objective decomposition: value identity with entropy offsets, and the
// gradient identity grad(full) = (1 + tau) grad(decomposed) on both
// logit vectors.
std::vector<TheoryCheck> verify_decomposition(std::size_t trials, std::uint64_t seed);

// Smooth labels approach the uniform distribution as tau grows, and
// their entropy approaches log K.
std::vector<TheoryCheck> verify_smooth_label_limit(std::uint64_t seed);

// Regularizer nonnegativity, exact zero at tau = 1, vanishing on the
// sparse-logit path, and monotone growth in tau.
std::vector<TheoryCheck> verify_regularizer(std::uint64_t seed);

// Zero distillation loss forces equal temperatured posteriors
// (constructed inputs; the trained-model direction is an experiment
// channel, not an analytic check).
std::vector<TheoryCheck> verify_alignment_analytic(std::uint64_t seed);

// Mean validation Hellinger(p, p^F) of a trained two-posterior model;
// errors if the state is still in training mode.
double alignment_hellinger(const ModelState &model, const ModelState *face_model,
                           const Split &validation);

struct GridPoint {
    double z1, z2, tau, exp_neg_r;
};

// exp(-R) landscape over a square two-logit grid, one slab per tau.
std::vector<GridPoint> regularizer_grid(const std::vector<double> &taus, double z_lo,
                                        double z_hi, std::size_t resolution);
std::vector<TheoryCheck> regularizer_grid_checks(const std::vector<double> &taus,
                                                 double z_lo, double z_hi,
                                                 std::size_t resolution);
std::string regularizer_grid_csv(const std::vector<GridPoint> &grid);

TheoryReport run_theory_suite(std::uint64_t seed);
std::string theory_report_to_json(const TheoryReport &r);

}  // namespace ckd
