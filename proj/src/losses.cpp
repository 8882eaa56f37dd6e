#include "ckd/losses.hpp"

#include <algorithm>
#include <cmath>

namespace ckd {

namespace {

template <typename F>
std::vector<F> widen(const std::vector<double> &v) {
    return std::vector<F>(v.begin(), v.end());
}

template <typename F>
F lse(const std::vector<F> &z) {
    F m = *std::max_element(z.begin(), z.end());
    F s = 0;
    for (F v : z) s += std::exp(v - m);
    return m + std::log(s);
}

template <typename F>
std::vector<F> log_softmax_t(const std::vector<F> &z, F tau) {
    std::vector<F> s(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) s[i] = z[i] / tau;
    F l = lse(s);
    for (F &v : s) v -= l;
    return s;
}

// H(a, b) from a's probabilities and b's log-probabilities.
template <typename F>
F cross_entropy_logp(const std::vector<F> &a, const std::vector<F> &logb) {
    F h = 0;
    for (std::size_t i = 0; i < a.size(); ++i) h -= a[i] * logb[i];
    return h;
}

template <typename F>
F entropy_from_logp(const std::vector<F> &logp) {
    F h = 0;
    for (F lv : logp) h -= std::exp(lv) * lv;
    return h;
}

template <typename F>
F regularizer_t(const std::vector<F> &z, F tau) {
    std::vector<F> zt(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) zt[i] = z[i] / tau;
    return tau * lse(zt) - lse(z);
}

template <typename F>
void check_pair(const std::vector<F> &z, const std::vector<F> &z_f, int y, F tau) {
    if (z.size() < 2 || z.size() != z_f.size())
        throw ShapeError("LogitPair: need matching K >= 2 logit vectors");
    if (y < 0 || static_cast<std::size_t>(y) >= z.size())
        throw DomainError("LogitPair: class index out of range");
    if (tau <= 0) throw DomainError("LogitPair: tau must be positive");
}

template <typename F>
F full_loss_t(const std::vector<F> &z, const std::vector<F> &z_f, int y, F tau) {
    auto lp = log_softmax_t(z, F(1));
    auto lpf = log_softmax_t(z_f, F(1));
    F cls = -lp[y] - lpf[y];
    auto lpt = log_softmax_t(z, tau);
    auto lpft = log_softmax_t(z_f, tau);
    // KL(a||b) = H(a,b) - H(a)
    F kl1 = 0, kl2 = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        kl1 += std::exp(lpft[i]) * (lpft[i] - lpt[i]);
        kl2 += std::exp(lpt[i]) * (lpt[i] - lpft[i]);
    }
    return cls + tau * tau * (kl1 + kl2);
}

template <typename F>
F decomposed_t(const std::vector<F> &z, const std::vector<F> &z_f, int y, F tau) {
    auto lpt = log_softmax_t(z, tau);
    auto lpft = log_softmax_t(z_f, tau);
    std::vector<F> ytl(z.size()), ytlf(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        F onehot = (static_cast<int>(i) == y) ? F(1) : F(0);
        ytl[i] = (onehot + tau * std::exp(lpt[i])) / (1 + tau);
        ytlf[i] = (onehot + tau * std::exp(lpft[i])) / (1 + tau);
    }
    auto lp = log_softmax_t(z, F(1));
    auto lpf = log_softmax_t(z_f, F(1));
    return cross_entropy_logp(ytl, lpf) + cross_entropy_logp(ytlf, lp) +
           tau / (1 + tau) * (regularizer_t(z_f, tau) + regularizer_t(z, tau));
}

}  // namespace

std::vector<double> softmax_tau(const std::vector<double> &z, double tau) {
    if (tau <= 0.0) throw DomainError("softmax_tau: tau must be positive");
    auto l = log_softmax_t(z, tau);
    for (double &v : l) v = std::exp(v);
    return l;
}

std::vector<double> log_softmax_tau(const std::vector<double> &z, double tau) {
    if (tau <= 0.0) throw DomainError("log_softmax_tau: tau must be positive");
    return log_softmax_t(z, tau);
}

double entropy(const std::vector<double> &p) {
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

double classification_loss(const LogitPair &pair) {
    check_pair(pair.z, pair.z_f, pair.y, pair.tau);
    auto lp = log_softmax_t(pair.z, 1.0);
    auto lpf = log_softmax_t(pair.z_f, 1.0);
    return -lp[pair.y] - lpf[pair.y];
}

double kl_tau(const std::vector<double> &z_teacher, const std::vector<double> &z_student,
              double tau) {
    if (tau <= 0.0) throw DomainError("kl_tau: tau must be positive");
    auto lt = log_softmax_t(z_teacher, tau);
    auto ls = log_softmax_t(z_student, tau);
    double kl = 0.0;
    for (std::size_t i = 0; i < lt.size(); ++i)
        kl += std::exp(lt[i]) * (lt[i] - ls[i]);
    return tau * tau * kl;
}

double ckd_loss(const LogitPair &pair) {
    check_pair(pair.z, pair.z_f, pair.y, pair.tau);
    return kl_tau(pair.z_f, pair.z, pair.tau) + kl_tau(pair.z, pair.z_f, pair.tau);
}

double f2p_loss(const LogitPair &pair) {
    check_pair(pair.z, pair.z_f, pair.y, pair.tau);
    return kl_tau(pair.z_f, pair.z, pair.tau);
}

double full_loss(const LogitPair &pair) {
    check_pair(pair.z, pair.z_f, pair.y, pair.tau);
    return full_loss_t(pair.z, pair.z_f, pair.y, pair.tau);
}

std::vector<double> smooth_label(int y, const std::vector<double> &p_tau, double tau) {
    if (tau < 0.0) throw DomainError("smooth_label: tau must be nonnegative");
    if (y < 0 || static_cast<std::size_t>(y) >= p_tau.size())
        throw DomainError("smooth_label: class index out of range");
    std::vector<double> yt(p_tau.size());
    for (std::size_t i = 0; i < p_tau.size(); ++i) {
        double onehot = (static_cast<int>(i) == y) ? 1.0 : 0.0;
        yt[i] = (onehot + tau * p_tau[i]) / (1.0 + tau);
    }
    return yt;
}

double regularizer(const std::vector<double> &z, double tau) {
    if (tau <= 0.0) throw DomainError("regularizer: tau must be positive");
    return regularizer_t(z, tau);
}

double decomposed_objective(const LogitPair &pair) {
    check_pair(pair.z, pair.z_f, pair.y, pair.tau);
    return decomposed_t(pair.z, pair.z_f, pair.y, pair.tau);
}

double decomposition_residual(const LogitPair &pair) {
    check_pair(pair.z, pair.z_f, pair.y, pair.tau);
    using LD = long double;
    auto z = widen<LD>(pair.z);
    auto zf = widen<LD>(pair.z_f);
    LD tau = pair.tau;
    LD full = full_loss_t(z, zf, pair.y, tau);
    LD hpt = entropy_from_logp(log_softmax_t(z, tau));
    LD hpft = entropy_from_logp(log_softmax_t(zf, tau));
    LD dec = decomposed_t(z, zf, pair.y, tau);
    LD res = full + tau * tau * (hpft + hpt) - (1 + tau) * dec;
    return static_cast<double>(std::abs(res));
}

namespace graph {

namespace {

double batch_rows(Tape &t, int z) { return static_cast<double>(t.value(z).rows); }

// sum over all entries, scaled to a batch mean.
int mean_total(Tape &t, int x, double rows, double factor = 1.0) {
    return t.scale(t.sum_all(x), factor / rows);
}

}  // namespace

int classification_single(Tape &t, int z, int onehot) {
    int lsm = t.log_softmax_t(z, 1.0);
    return mean_total(t, t.mul(onehot, lsm), batch_rows(t, z), -1.0);
}

int classification(Tape &t, int z, int z_f, int onehot) {
    return t.add(classification_single(t, z, onehot), classification_single(t, z_f, onehot));
}

int f2p(Tape &t, int z_student, int z_teacher, double tau) {
    int p_t = t.stop_gradient(t.softmax_t(z_teacher, tau));
    int lp_t = t.stop_gradient(t.log_softmax_t(z_teacher, tau));
    int lp_s = t.log_softmax_t(z_student, tau);
    int kl = t.sum_all(t.mul(p_t, t.sub(lp_t, lp_s)));
    return t.scale(kl, tau * tau / batch_rows(t, z_student));
}

int ckd(Tape &t, int z, int z_f, double tau) {
    return t.add(f2p(t, z, z_f, tau), f2p(t, z_f, z, tau));
}

int full(Tape &t, int z, int z_f, int onehot, double tau) {
    return t.add(classification(t, z, z_f, onehot), ckd(t, z, z_f, tau));
}

int regularizer(Tape &t, int z, double tau) {
    int a = t.scale(t.logsumexp_rows(t.scale(z, 1.0 / tau)), tau);
    int b = t.logsumexp_rows(z);
    return mean_total(t, t.sub(a, b), batch_rows(t, z));
}

namespace {

// Detached smooth label (onehot + tau * sg(p_tau)) / (1 + tau).
int detached_smooth_label(Tape &t, int z, int onehot, double tau) {
    int p_t = t.stop_gradient(t.softmax_t(z, tau));
    return t.scale(t.add(onehot, t.scale(p_t, tau)), 1.0 / (1.0 + tau));
}

// H(label, softmax(z)) as a batch mean, via log-softmax.
int soft_ce(Tape &t, int label, int z) {
    return mean_total(t, t.mul(label, t.log_softmax_t(z, 1.0)), batch_rows(t, z), -1.0);
}

}  // namespace

int smooth_only(Tape &t, int z, int z_f, int onehot, double tau) {
    int yt = detached_smooth_label(t, z, onehot, tau);
    int ytf = detached_smooth_label(t, z_f, onehot, tau);
    return t.add(soft_ce(t, yt, z_f), soft_ce(t, ytf, z));
}

int decomposed(Tape &t, int z, int z_f, int onehot, double tau) {
    int smooth = smooth_only(t, z, z_f, onehot, tau);
    int regs = t.add(regularizer(t, z_f, tau), regularizer(t, z, tau));
    return t.add(smooth, t.scale(regs, tau / (1.0 + tau)));
}

int kd_student(Tape &t, int z_student, int z_teacher_const, int onehot, double tau) {
    return t.add(classification_single(t, z_student, onehot),
                 f2p(t, z_student, z_teacher_const, tau));
}

}  // namespace graph

}  // namespace ckd
