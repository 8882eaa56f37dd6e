#include "ckd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ckd/losses.hpp"
#include "ckd/rng.hpp"

namespace ckd {

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::CE: return "CE";
        case Variant::CE_FACE: return "CE_FACE";
        case Variant::CLASS_SW_SBS: return "CLASS_SW_SBS";
        case Variant::F2P_SW_SBS: return "F2P_SW_SBS";
        case Variant::CKD_NO_SHARE: return "CKD_NO_SHARE";
        case Variant::CKD_SW: return "CKD_SW";
        case Variant::CKD_FULL: return "CKD_FULL";
        case Variant::SMOOTH_ONLY: return "SMOOTH_ONLY";
        case Variant::KD_TWO_STAGE: return "KD_TWO_STAGE";
        case Variant::ML: return "ML";
    }
    return "?";
}

const std::vector<Variant> &all_variants() {
    static const std::vector<Variant> v{
        Variant::CE_FACE,     Variant::CE,      Variant::CLASS_SW_SBS,
        Variant::F2P_SW_SBS,  Variant::CKD_NO_SHARE, Variant::CKD_SW,
        Variant::CKD_FULL,    Variant::SMOOTH_ONLY,  Variant::KD_TWO_STAGE,
        Variant::ML};
    return v;
}

Variant variant_from_name(const std::string &name) {
    for (Variant v : all_variants())
        if (variant_name(v) == name) return v;
    throw ConfigError("unknown variant '" + name + "'");
}

void TrainConfig::validate() const {
    if (epochs == 0 || batch_size < 2) throw ConfigError("TrainConfig: epochs >= 1 and batch_size >= 2 required");
    if (base_lr <= 0) throw ConfigError("TrainConfig: base_lr must be positive");
    if (momentum < 0 || momentum >= 1) throw ConfigError("TrainConfig: momentum must be in [0,1)");
    if (tau <= 0) throw ConfigError("TrainConfig: tau must be positive");
    auto check_decays = [](const std::vector<std::size_t> &d, std::size_t total,
                           const char *what) {
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (d[i] >= total) throw ConfigError(std::string("TrainConfig: ") + what + " decay epoch beyond schedule");
            if (i && d[i] <= d[i - 1])
                throw ConfigError(std::string("TrainConfig: ") + what + " decay epochs not strictly increasing");
        }
    };
    check_decays(decay_epochs, epochs, "main");
    check_decays(kd_face_decay, kd_face_epochs, "kd-face");
    check_decays(kd_peri_decay, kd_peri_epochs, "kd-peri");
}

double lr_for_schedule(double base_lr, double factor,
                       const std::vector<std::size_t> &decay_epochs, std::size_t epoch) {
    double lr = base_lr;
    for (std::size_t d : decay_epochs)
        if (d <= epoch) lr *= factor;
    return lr;
}

double lr_at_epoch(const TrainConfig &config, std::size_t epoch) {
    if (epoch >= config.epochs)
        throw DomainError("lr_at_epoch: epoch " + std::to_string(epoch) +
                          " beyond schedule of " + std::to_string(config.epochs));
    return lr_for_schedule(config.base_lr, config.lr_decay_factor, config.decay_epochs, epoch);
}

void sgd_update(ModelState &state, const std::map<std::string, Tensor> &grads,
                OptState &opt, double lr, double momentum, double weight_decay) {
    for (const auto &[name, g] : grads) {
        if (!g.all_finite())
            throw DomainError("sgd_update: non-finite gradient for parameter '" + name + "'");
        Tensor &p = state.params.at(name);
        Tensor &v = opt.velocity.try_emplace(name, Tensor(p.rows, p.cols)).first->second;
        for (std::size_t i = 0; i < p.size(); ++i) {
            v.values[i] = momentum * v.values[i] +
                          (g.values[i] + weight_decay * p.values[i]);
            p.values[i] -= lr * v.values[i];
        }
    }
}

ModelConfig model_config_for_variant(ModelConfig base, Variant v) {
    switch (v) {
        case Variant::CE:
            base.has_face = false;
            base.share_weights = false;
            base.share_batch_stats = false;
            break;
        case Variant::CE_FACE:
            base.has_peri = false;
            base.share_weights = false;
            base.share_batch_stats = false;
            break;
        case Variant::CLASS_SW_SBS:
        case Variant::F2P_SW_SBS:
        case Variant::CKD_FULL:
        case Variant::SMOOTH_ONLY:
            base.share_weights = true;
            base.share_batch_stats = true;
            break;
        case Variant::CKD_SW:
            base.share_weights = true;
            base.share_batch_stats = false;
            break;
        case Variant::CKD_NO_SHARE:
            base.share_weights = false;
            base.share_batch_stats = false;
            break;
        case Variant::KD_TWO_STAGE:
        case Variant::ML:
            // handled per network inside the two-network regimens
            base.has_face = false;
            base.share_weights = false;
            base.share_batch_stats = false;
            break;
    }
    return base;
}

std::string epoch_log_csv_header() {
    return "epoch,lr,train_class_loss,train_ckd_loss,val_class_loss,val_ckd_loss,val_kl_f2p";
}

std::string epoch_log_csv_row(const EpochLogRow &r) {
    std::ostringstream os;
    os.precision(17);
    os << r.epoch << "," << r.lr;
    for (double v : {r.train_class_loss, r.train_ckd_loss, r.val_class_loss, r.val_ckd_loss,
                     r.val_kl_f2p}) {
        os << ",";
        if (!std::isnan(v)) os << v;
    }
    return os.str();
}

namespace {

Tensor gather_rows(const Tensor &src, const std::vector<std::size_t> &idx, std::size_t lo,
                   std::size_t hi) {
    Tensor out(hi - lo, src.cols);
    for (std::size_t i = lo; i < hi; ++i)
        std::copy(src.values.begin() + idx[i] * src.cols,
                  src.values.begin() + (idx[i] + 1) * src.cols,
                  out.values.begin() + (i - lo) * src.cols);
    return out;
}

Tensor onehot_rows(const std::vector<std::uint32_t> &labels,
                   const std::vector<std::size_t> &idx, std::size_t lo, std::size_t hi,
                   std::size_t k) {
    Tensor out(hi - lo, k);
    for (std::size_t i = lo; i < hi; ++i) {
        std::uint32_t l = labels[idx[i]];
        if (l >= k) throw StateError("training label " + std::to_string(l) +
                                     " outside classifier range");
        out.at(i - lo, l) = 1.0;
    }
    return out;
}

std::vector<double> tensor_row(const Tensor &t, std::size_t r) {
    return std::vector<double>(t.values.begin() + r * t.cols,
                               t.values.begin() + (r + 1) * t.cols);
}

// Eval-mode logits over a whole split, chunked.
void eval_split_logits(const ModelState &m, const Split &s, Tensor *zp, Tensor *zf,
                       std::size_t chunk = 256) {
    std::size_t n = s.size(), k = m.config.num_classes;
    if (zp) *zp = Tensor(m.config.has_peri ? n : 0, k);
    if (zf) *zf = Tensor(m.config.has_face ? n : 0, k);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t lo = 0; lo < n; lo += chunk) {
        std::size_t hi = std::min(n, lo + chunk);
        Tensor xp = gather_rows(s.x_peri, idx, lo, hi);
        Tensor xf = gather_rows(s.x_face, idx, lo, hi);
        LogitsPair lp = eval_logits(m, xp, xf);
        if (zp && m.config.has_peri)
            std::copy(lp.z_p.values.begin(), lp.z_p.values.end(),
                      zp->values.begin() + lo * k);
        if (zf && m.config.has_face)
            std::copy(lp.z_f.values.begin(), lp.z_f.values.end(),
                      zf->values.begin() + lo * k);
    }
}

struct ValStats {
    double class_loss = std::nan("");
    double ckd_loss = std::nan("");
    double kl_f2p = std::nan("");
};

// z_p / z_f may have zero rows when the corresponding branch is absent.
ValStats validation_stats(const Tensor &z_p, const Tensor &z_f,
                          const std::vector<std::uint32_t> &labels, double tau) {
    ValStats vs;
    std::size_t n = labels.size();
    bool has_p = z_p.rows == n, has_f = z_f.rows == n;
    double cls = 0, ckd = 0, kl = 0;
    for (std::size_t i = 0; i < n; ++i) {
        int y = static_cast<int>(labels[i]);
        if (has_p) {
            auto lp = log_softmax_tau(tensor_row(z_p, i), 1.0);
            cls += -lp[y];
        }
        if (has_f) {
            auto lpf = log_softmax_tau(tensor_row(z_f, i), 1.0);
            cls += -lpf[y];
        }
        if (has_p && has_f) {
            auto zp = tensor_row(z_p, i), zf = tensor_row(z_f, i);
            ckd += kl_tau(zf, zp, tau) + kl_tau(zp, zf, tau);
            kl += kl_tau(zf, zp, 1.0);
        }
    }
    if (has_p || has_f) vs.class_loss = cls / double(n);
    if (has_p && has_f) {
        vs.ckd_loss = ckd / double(n);
        vs.kl_f2p = kl / double(n);
    }
    return vs;
}

ValStats validation_stats_two_nets(const ModelState &peri_net, const ModelState &face_net,
                                   const Split &val, double tau) {
    Tensor zp, zf;
    eval_split_logits(peri_net, val, &zp, nullptr);
    eval_split_logits(face_net, val, nullptr, &zf);
    ValStats vs = validation_stats(zp, zf, val.labels, tau);
    return vs;
}

// Variant-specific loss graph; fills the class/distill component ids.
struct LossNodes {
    int total = -1;
    int cls = -1;
    int distill = -1;  // -1 when absent
};

LossNodes build_loss(Tape &t, const GraphBuild &gb, int onehot, Variant v, double tau) {
    LossNodes ln;
    switch (v) {
        case Variant::CE:
            ln.cls = graph::classification_single(t, gb.out.z_p, onehot);
            ln.total = ln.cls;
            break;
        case Variant::CE_FACE:
            ln.cls = graph::classification_single(t, gb.out.z_f, onehot);
            ln.total = ln.cls;
            break;
        case Variant::CLASS_SW_SBS:
            ln.cls = graph::classification(t, gb.out.z_p, gb.out.z_f, onehot);
            ln.total = ln.cls;
            break;
        case Variant::F2P_SW_SBS:
            ln.cls = graph::classification(t, gb.out.z_p, gb.out.z_f, onehot);
            ln.distill = graph::f2p(t, gb.out.z_p, gb.out.z_f, tau);
            ln.total = t.add(ln.cls, ln.distill);
            break;
        case Variant::CKD_NO_SHARE:
        case Variant::CKD_SW:
        case Variant::CKD_FULL:
            ln.cls = graph::classification(t, gb.out.z_p, gb.out.z_f, onehot);
            ln.distill = graph::ckd(t, gb.out.z_p, gb.out.z_f, tau);
            ln.total = t.add(ln.cls, ln.distill);
            break;
        case Variant::SMOOTH_ONLY:
            ln.cls = graph::smooth_only(t, gb.out.z_p, gb.out.z_f, onehot, tau);
            ln.total = ln.cls;
            break;
        default:
            throw StateError("build_loss: two-network regimen handled elsewhere");
    }
    return ln;
}

std::map<std::string, Tensor> collect_grads(const Tape &t, const GraphBuild &gb) {
    std::map<std::string, Tensor> grads;
    for (const auto &[name, id] : gb.param_nodes) grads[name] = t.grad(id);
    return grads;
}

struct EpochAverages {
    double cls = 0, distill = 0;
    double weight = 0;
    bool any_distill = false;
    void add(double c, double d, bool has_d, double w) {
        cls += c * w;
        if (has_d) {
            distill += d * w;
            any_distill = true;
        }
        weight += w;
    }
};

// One standard (single-model) training run.
TrainResult train_single_model(const ModelConfig &mc, const TrainConfig &tc,
                               const Dataset &ds) {
    ModelState state = init_model(mc);
    state.training = true;
    OptState opt;
    std::size_t n = ds.train.size();
    if (n < 2) throw StateError("run_training: training split too small");

    TrainResult res;
    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        double lr = lr_at_epoch(tc, epoch);
        auto perm = Rng(tc.seed, "shuffle.epoch." + std::to_string(epoch)).permutation(n);
        EpochAverages avg;
        for (std::size_t lo = 0; lo < n; lo += tc.batch_size) {
            std::size_t hi = std::min(n, lo + tc.batch_size);
            if (hi - lo < 2) break;  // batch norm needs >= 2 rows
            Tensor xp = gather_rows(ds.train.x_peri, perm, lo, hi);
            Tensor xf = gather_rows(ds.train.x_face, perm, lo, hi);
            Tape t;
            GraphBuild gb = forward_pair(t, state, xp, xf);
            int onehot =
                t.constant(onehot_rows(ds.train.labels, perm, lo, hi, mc.num_classes));
            LossNodes ln = build_loss(t, gb, onehot, tc.variant, tc.tau);
            t.backward(ln.total);
            sgd_update(state, collect_grads(t, gb), opt, lr, tc.momentum, tc.weight_decay);
            avg.add(t.value(ln.cls).values[0],
                    ln.distill >= 0 ? t.value(ln.distill).values[0] : 0.0, ln.distill >= 0,
                    double(hi - lo));
        }
        state.training = false;
        Tensor zp, zf;
        eval_split_logits(state, ds.validation, &zp, &zf);
        ValStats vs = validation_stats(zp, zf, ds.validation.labels, tc.tau);
        state.training = true;

        EpochLogRow row;
        row.epoch = epoch;
        row.lr = lr;
        row.train_class_loss = avg.cls / avg.weight;
        row.train_ckd_loss = avg.any_distill ? avg.distill / avg.weight : std::nan("");
        row.val_class_loss = vs.class_loss;
        row.val_ckd_loss = vs.ckd_loss;
        row.val_kl_f2p = vs.kl_f2p;
        res.log.push_back(row);
    }
    state.training = false;
    res.model = std::move(state);
    return res;
}

// Distill a frozen teacher's logits into a student network.
void distill_epochs(ModelState &student, const ModelState &teacher, const TrainConfig &tc,
                    const Dataset &ds, std::size_t epochs,
                    const std::vector<std::size_t> &decays, std::vector<EpochLogRow> &log) {
    OptState opt;
    std::size_t n = ds.train.size();
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        double lr = lr_for_schedule(tc.base_lr, tc.lr_decay_factor, decays, epoch);
        auto perm =
            Rng(tc.seed, "kd.shuffle.epoch." + std::to_string(epoch)).permutation(n);
        EpochAverages avg;
        for (std::size_t lo = 0; lo < n; lo += tc.batch_size) {
            std::size_t hi = std::min(n, lo + tc.batch_size);
            if (hi - lo < 2) break;
            Tensor xp = gather_rows(ds.train.x_peri, perm, lo, hi);
            Tensor xf = gather_rows(ds.train.x_face, perm, lo, hi);
            LogitsPair teacher_out = eval_logits(teacher, xp, xf);
            Tape t;
            GraphBuild gb = forward_pair(t, student, xp, xf);
            int onehot =
                t.constant(onehot_rows(ds.train.labels, perm, lo, hi,
                                       student.config.num_classes));
            int cls = graph::classification_single(t, gb.out.z_p, onehot);
            int distill =
                graph::f2p(t, gb.out.z_p, t.constant(teacher_out.z_f), tc.tau);
            int total = t.add(cls, distill);
            t.backward(total);
            sgd_update(student, collect_grads(t, gb), opt, lr, tc.momentum,
                       tc.weight_decay);
            avg.add(t.value(cls).values[0], t.value(distill).values[0], true,
                    double(hi - lo));
        }
        student.training = false;
        ValStats vs = validation_stats_two_nets(student, teacher, ds.validation, tc.tau);
        student.training = true;

        EpochLogRow row;
        row.epoch = epoch;
        row.lr = lr;
        row.train_class_loss = avg.cls / avg.weight;
        row.train_ckd_loss = avg.distill / avg.weight;
        row.val_class_loss = vs.class_loss;
        row.val_ckd_loss = vs.ckd_loss;
        row.val_kl_f2p = vs.kl_f2p;
        log.push_back(row);
    }
}

TrainResult run_two_stage_kd(ModelConfig base, const TrainConfig &tc,
                             const Dataset &ds) {
    base.has_peri = base.has_face = true;
    // Stage 1: face-only teacher.
    ModelConfig face_cfg = model_config_for_variant(base, Variant::CE_FACE);
    TrainConfig face_tc = tc;
    face_tc.variant = Variant::CE_FACE;
    face_tc.epochs = tc.kd_face_epochs;
    face_tc.decay_epochs = tc.kd_face_decay;
    TrainResult teacher = train_single_model(face_cfg, face_tc, ds);

    // Stage 2: periocular student against the frozen teacher.
    ModelConfig peri_cfg = model_config_for_variant(base, Variant::CE);
    ModelState student = init_model(peri_cfg);
    student.training = true;
    TrainResult res;
    distill_epochs(student, teacher.model, tc, ds, tc.kd_peri_epochs, tc.kd_peri_decay,
                   res.log);
    student.training = false;
    res.model = std::move(student);
    res.teacher = std::move(teacher.model);
    res.has_teacher = true;
    return res;
}

TrainResult run_mutual_learning(ModelConfig base, const TrainConfig &tc,
                                const Dataset &ds) {
    base.has_peri = base.has_face = true;
    ModelConfig peri_cfg = model_config_for_variant(base, Variant::CE);
    ModelConfig face_cfg = model_config_for_variant(base, Variant::CE_FACE);
    ModelState net_p = init_model(peri_cfg);
    ModelState net_f = init_model(face_cfg);
    net_p.training = net_f.training = true;
    OptState opt_p, opt_f;
    std::size_t n = ds.train.size();

    TrainResult res;
    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        double lr = lr_at_epoch(tc, epoch);
        auto perm = Rng(tc.seed, "shuffle.epoch." + std::to_string(epoch)).permutation(n);
        EpochAverages avg;
        for (std::size_t lo = 0; lo < n; lo += tc.batch_size) {
            std::size_t hi = std::min(n, lo + tc.batch_size);
            if (hi - lo < 2) break;
            Tensor xp = gather_rows(ds.train.x_peri, perm, lo, hi);
            Tensor xf = gather_rows(ds.train.x_face, perm, lo, hi);
            Tensor onehot_t =
                onehot_rows(ds.train.labels, perm, lo, hi, base.num_classes);

            // Alternating updates: periocular learns from the face network's
            // current prediction, then the face network from the updated
            // periocular prediction.
            net_f.training = false;
            Tensor zf_teacher;
            {
                Tape t;
                GraphBuild g = forward_pair(t, net_f, xp, xf);
                zf_teacher = t.value(g.out.z_f);
            }
            net_f.training = true;
            {
                Tape t;
                GraphBuild gb = forward_pair(t, net_p, xp, xf);
                int onehot = t.constant(onehot_t);
                int cls = graph::classification_single(t, gb.out.z_p, onehot);
                int distill = graph::f2p(t, gb.out.z_p, t.constant(zf_teacher), tc.tau);
                int total = t.add(cls, distill);
                t.backward(total);
                sgd_update(net_p, collect_grads(t, gb), opt_p, lr, tc.momentum,
                           tc.weight_decay);
                avg.add(t.value(cls).values[0], t.value(distill).values[0], true,
                        double(hi - lo));
            }
            net_p.training = false;
            Tensor zp_teacher;
            {
                Tape t;
                GraphBuild g = forward_pair(t, net_p, xp, xf);
                zp_teacher = t.value(g.out.z_p);
            }
            net_p.training = true;
            {
                Tape t;
                GraphBuild gb = forward_pair(t, net_f, xp, xf);
                int onehot = t.constant(onehot_t);
                int cls = graph::classification_single(t, gb.out.z_f, onehot);
                int distill = graph::f2p(t, gb.out.z_f, t.constant(zp_teacher), tc.tau);
                int total = t.add(cls, distill);
                t.backward(total);
                sgd_update(net_f, collect_grads(t, gb), opt_f, lr, tc.momentum,
                           tc.weight_decay);
            }
        }
        net_p.training = false;
        net_f.training = false;
        ValStats vs = validation_stats_two_nets(net_p, net_f, ds.validation, tc.tau);
        net_p.training = true;
        net_f.training = true;

        EpochLogRow row;
        row.epoch = epoch;
        row.lr = lr;
        row.train_class_loss = avg.cls / avg.weight;
        row.train_ckd_loss = avg.distill / avg.weight;
        row.val_class_loss = vs.class_loss;
        row.val_ckd_loss = vs.ckd_loss;
        row.val_kl_f2p = vs.kl_f2p;
        res.log.push_back(row);
    }
    net_p.training = false;
    net_f.training = false;
    res.model = std::move(net_p);
    res.teacher = std::move(net_f);
    res.has_teacher = true;
    return res;
}

}  // namespace

TrainResult run_training(const ModelConfig &model_config, const TrainConfig &train_config,
                         const Dataset &dataset) {
    train_config.validate();
    ModelConfig mc = model_config_for_variant(model_config, train_config.variant);
    if (mc.num_classes != dataset.config.num_train_ids)
        throw ConfigError("run_training: num_classes " + std::to_string(mc.num_classes) +
                          " does not match dataset train identities " +
                          std::to_string(dataset.config.num_train_ids));
    if (mc.peri_dim != dataset.config.peri_dim || mc.face_dim != dataset.config.face_dim)
        throw ConfigError("run_training: model view dims do not match dataset dims");
    switch (train_config.variant) {
        case Variant::KD_TWO_STAGE:
            return run_two_stage_kd(mc, train_config, dataset);
        case Variant::ML:
            return run_mutual_learning(mc, train_config, dataset);
        default:
            return train_single_model(mc, train_config, dataset);
    }
}

std::uint64_t config_hash(const ModelConfig &mc, const TrainConfig &tc) {
    std::ostringstream os;
    os.precision(17);
    os << mc.face_dim << "|" << mc.peri_dim << "|";
    for (auto w : mc.trunk_widths) os << w << ",";
    os << "|" << mc.head_width << "|" << mc.embed_dim << "|" << mc.num_classes << "|"
       << mc.share_weights << mc.share_batch_stats << mc.has_peri << mc.has_face << "|"
       << mc.bn_momentum << "|" << mc.bn_epsilon << "|" << mc.seed << "|" << tc.epochs
       << "|" << tc.batch_size << "|" << tc.base_lr << "|" << tc.momentum << "|"
       << tc.weight_decay << "|" << tc.lr_decay_factor << "|";
    for (auto d : tc.decay_epochs) os << d << ",";
    os << "|" << tc.tau << "|" << variant_name(tc.variant) << "|" << tc.seed;
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : os.str()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

namespace {

constexpr char kCkptMagic[4] = {'C', 'K', 'D', 'C'};
constexpr std::uint32_t kCkptVersion = 1;

template <typename T>
void put(std::ofstream &f, T v) {
    f.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream &f, const std::string &path) {
    T v{};
    f.read(reinterpret_cast<char *>(&v), sizeof(T));
    if (!f) throw IoError("truncated checkpoint " + path);
    return v;
}

void put_string(std::ofstream &f, const std::string &s) {
    put<std::uint32_t>(f, static_cast<std::uint32_t>(s.size()));
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::ifstream &f, const std::string &path) {
    auto n = get<std::uint32_t>(f, path);
    std::string s(n, '\0');
    f.read(s.data(), n);
    if (!f) throw IoError("truncated checkpoint " + path);
    return s;
}

void put_tensor(std::ofstream &f, const Tensor &t) {
    put<std::uint64_t>(f, t.rows);
    put<std::uint64_t>(f, t.cols);
    f.write(reinterpret_cast<const char *>(t.values.data()),
            static_cast<std::streamsize>(t.values.size() * sizeof(double)));
}

Tensor get_tensor(std::ifstream &f, const std::string &path) {
    auto r = get<std::uint64_t>(f, path);
    auto c = get<std::uint64_t>(f, path);
    Tensor t(r, c);
    f.read(reinterpret_cast<char *>(t.values.data()),
           static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    if (!f) throw IoError("truncated checkpoint " + path);
    return t;
}

}  // namespace

void save_checkpoint(const ModelState &state, std::uint64_t cfg_hash, std::size_t epoch,
                     const std::string &path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.write(kCkptMagic, 4);
    put(f, kCkptVersion);
    put<std::uint64_t>(f, cfg_hash);
    put<std::uint64_t>(f, epoch);
    const ModelConfig &c = state.config;
    put<std::uint64_t>(f, c.face_dim);
    put<std::uint64_t>(f, c.peri_dim);
    put<std::uint64_t>(f, c.trunk_widths.size());
    for (auto w : c.trunk_widths) put<std::uint64_t>(f, w);
    put<std::uint64_t>(f, c.head_width);
    put<std::uint64_t>(f, c.embed_dim);
    put<std::uint64_t>(f, c.num_classes);
    put<std::uint8_t>(f, c.share_weights);
    put<std::uint8_t>(f, c.share_batch_stats);
    put<std::uint8_t>(f, c.has_peri);
    put<std::uint8_t>(f, c.has_face);
    put(f, c.bn_momentum);
    put(f, c.bn_epsilon);
    put<std::uint64_t>(f, c.seed);
    put<std::uint64_t>(f, state.params.size());
    for (const auto &[name, t] : state.params) {
        put_string(f, name);
        put_tensor(f, t);
    }
    put<std::uint64_t>(f, state.running.size());
    for (const auto &[name, rs] : state.running) {
        put_string(f, name);
        put_tensor(f, rs.mean);
        put_tensor(f, rs.var);
    }
    if (!f) throw IoError("write failure on " + path);
}

ModelState load_checkpoint(const std::string &path, std::uint64_t *cfg_hash,
                           std::size_t *epoch) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kCkptMagic, 4) != 0)
        throw IoError("bad checkpoint magic in " + path);
    auto version = get<std::uint32_t>(f, path);
    if (version != kCkptVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    std::uint64_t h = get<std::uint64_t>(f, path);
    std::uint64_t ep = get<std::uint64_t>(f, path);
    if (cfg_hash) *cfg_hash = h;
    if (epoch) *epoch = static_cast<std::size_t>(ep);
    ModelState s;
    ModelConfig &c = s.config;
    c.face_dim = get<std::uint64_t>(f, path);
    c.peri_dim = get<std::uint64_t>(f, path);
    c.trunk_widths.resize(get<std::uint64_t>(f, path));
    for (auto &w : c.trunk_widths) w = get<std::uint64_t>(f, path);
    c.head_width = get<std::uint64_t>(f, path);
    c.embed_dim = get<std::uint64_t>(f, path);
    c.num_classes = get<std::uint64_t>(f, path);
    c.share_weights = get<std::uint8_t>(f, path);
    c.share_batch_stats = get<std::uint8_t>(f, path);
    c.has_peri = get<std::uint8_t>(f, path);
    c.has_face = get<std::uint8_t>(f, path);
    c.bn_momentum = get<double>(f, path);
    c.bn_epsilon = get<double>(f, path);
    c.seed = get<std::uint64_t>(f, path);
    auto np = get<std::uint64_t>(f, path);
    for (std::uint64_t i = 0; i < np; ++i) {
        std::string name = get_string(f, path);
        s.params[name] = get_tensor(f, path);
    }
    auto nr = get<std::uint64_t>(f, path);
    for (std::uint64_t i = 0; i < nr; ++i) {
        std::string name = get_string(f, path);
        BnStats rs;
        rs.mean = get_tensor(f, path);
        rs.var = get_tensor(f, path);
        s.running[name] = std::move(rs);
    }
    s.training = false;
    return s;
}

}  // namespace ckd
