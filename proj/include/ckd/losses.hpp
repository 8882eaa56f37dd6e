#pragma once

#include <vector>

#include "ckd/tape.hpp"
#include "ckd/tensor.hpp"

namespace ckd {

// One sample's two-view logits: z periocular, z_f face, target y, temperature.
struct LogitPair {
    std::vector<double> z;
    std::vector<double> z_f;
    int y = 0;
    double tau = 2.5;
};

std::vector<double> softmax_tau(const std::vector<double> &z, double tau);
std::vector<double> log_softmax_tau(const std::vector<double> &z, double tau);

// H(p) = -sum p log p, natural log.
double entropy(const std::vector<double> &p);

// -log p_y - log p^F_y at tau = 1.
double classification_loss(const LogitPair &pair);

// tau^2 * KL(p_teacher_tau || p_student_tau), on logits.
double kl_tau(const std::vector<double> &z_teacher, const std::vector<double> &z_student,
              double tau);

// tau^2 [ KL(sg p^F_tau || p_tau) + KL(sg p_tau || p^F_tau) ]
double ckd_loss(const LogitPair &pair);

// One-way face-to-periocular term: tau^2 KL(sg p^F_tau || p_tau).
double f2p_loss(const LogitPair &pair);

double full_loss(const LogitPair &pair);

// y_tilde = (onehot(y) + tau * p_tau) / (1 + tau); tau >= 0.
std::vector<double> smooth_label(int y, const std::vector<double> &p_tau, double tau);

// R(z) = tau * logsumexp(z / tau) - logsumexp(z); >= 0, exactly 0 at tau = 1.
double regularizer(const std::vector<double> &z, double tau);

// H(y_tilde, p^F) + H(y_tilde^F, p) + tau/(1+tau) * (R(z^F) + R(z))
double decomposed_objective(const LogitPair &pair);

// | full + tau^2 (H(p^F_tau) + H(p_tau)) - (1+tau) * decomposed |,
// evaluated in extended precision so the identity is testable at 1e-9.
double decomposition_residual(const LogitPair &pair);

// Tape builders: batch versions over B x K logit matrices. `onehot` is a
// constant B x K indicator. All return a scalar node (batch mean).
namespace graph {

int classification_single(Tape &t, int z, int onehot);
int classification(Tape &t, int z, int z_f, int onehot);
int ckd(Tape &t, int z, int z_f, double tau);
int f2p(Tape &t, int z_student, int z_teacher, double tau);
int full(Tape &t, int z, int z_f, int onehot, double tau);
int regularizer(Tape &t, int z, double tau);
int decomposed(Tape &t, int z, int z_f, int onehot, double tau);
int smooth_only(Tape &t, int z, int z_f, int onehot, double tau);
// Distillation against a frozen teacher's logits (a constant node).
int kd_student(Tape &t, int z_student, int z_teacher_const, int onehot, double tau);

}  // namespace graph

}  // namespace ckd
