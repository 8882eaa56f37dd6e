#include "ckd/model.hpp"

#include <cmath>
#include <functional>

#include "ckd/rng.hpp"

namespace ckd {

void ModelConfig::validate() const {
    if (trunk_widths.empty()) throw ConfigError("ModelConfig: trunk_widths empty");
    if (embed_dim < 2) throw ConfigError("ModelConfig: embed_dim must be >= 2");
    if (num_classes < 2) throw ConfigError("ModelConfig: num_classes must be >= 2");
    if (peri_dim == 0 || face_dim == 0 || peri_dim > face_dim)
        throw ConfigError("ModelConfig: need 0 < peri_dim <= face_dim");
    if (!share_weights && share_batch_stats)
        throw ConfigError("ModelConfig: share_batch_stats requires share_weights");
    if (share_batch_stats && !(has_peri && has_face))
        throw ConfigError("ModelConfig: share_batch_stats requires both views");
    if (!(has_peri || has_face)) throw ConfigError("ModelConfig: no view enabled");
    if (bn_momentum <= 0.0 || bn_momentum >= 1.0)
        throw ConfigError("ModelConfig: bn_momentum must be in (0,1)");
}

namespace {

struct LayerSpec {
    std::string prefix;      // parameter prefix, e.g. "trunk.b0"
    std::size_t in, out;
    bool batch_norm;
};

std::vector<std::string> trunk_prefixes(const ModelConfig &c) {
    if (c.share_weights) return {"trunk"};
    std::vector<std::string> p;
    if (c.has_peri) p.push_back("trunk_p");
    if (c.has_face) p.push_back("trunk_f");
    return p;
}

void for_each_layer(const ModelConfig &c, const std::function<void(const LayerSpec &)> &fn) {
    for (const auto &tp : trunk_prefixes(c)) {
        std::size_t in = c.face_dim;
        for (std::size_t i = 0; i < c.trunk_widths.size(); ++i) {
            fn({tp + ".b" + std::to_string(i), in, c.trunk_widths[i], true});
            in = c.trunk_widths[i];
        }
    }
    std::size_t hw = c.head_width_or_default();
    for (const char *v : {"p", "f"}) {
        if ((v[0] == 'p' && !c.has_peri) || (v[0] == 'f' && !c.has_face)) continue;
        std::string head = std::string("head_") + v;
        fn({head + ".fc", c.trunk_widths.back(), hw, true});
        fn({head + ".embed", hw, c.embed_dim, false});
        fn({std::string("cls_") + v, c.embed_dim, c.num_classes, false});
    }
}

// Per-view running-stat keys for a trunk block parameter prefix.
std::string trunk_stat_key(const ModelConfig &c, const std::string &prefix, char view) {
    if (c.share_batch_stats) return prefix + ".shared";
    return prefix + "." + view;
}

}  // namespace

ModelState init_model(const ModelConfig &config) {
    config.validate();
    ModelState s;
    s.config = config;
    for_each_layer(config, [&](const LayerSpec &l) {
        double std = std::sqrt(2.0 / static_cast<double>(l.in));
        Tensor W(l.in, l.out);
        Rng rng(config.seed, l.prefix + ".W");
        for (double &v : W.values) v = rng.normal(0.0, std);
        s.params[l.prefix + ".W"] = std::move(W);
        s.params[l.prefix + ".b"] = Tensor(1, l.out, 0.0);
        if (l.batch_norm) {
            s.params[l.prefix + ".gamma"] = Tensor(1, l.out, 1.0);
            s.params[l.prefix + ".beta"] = Tensor(1, l.out, 0.0);
        }
    });
    // Running statistics, one set per (layer, view) unless shared.
    for (const auto &tp : trunk_prefixes(config)) {
        for (std::size_t i = 0; i < config.trunk_widths.size(); ++i) {
            std::string prefix = tp + ".b" + std::to_string(i);
            std::size_t c = config.trunk_widths[i];
            auto add = [&](const std::string &key) {
                s.running[key] = {Tensor(1, c, 0.0), Tensor(1, c, 1.0)};
            };
            if (config.share_batch_stats) {
                add(prefix + ".shared");
            } else {
                if (config.has_peri && (config.share_weights || tp == "trunk_p"))
                    add(prefix + ".p");
                if (config.has_face && (config.share_weights || tp == "trunk_f"))
                    add(prefix + ".f");
            }
        }
    }
    std::size_t hw = config.head_width_or_default();
    if (config.has_peri) s.running["head_p.bn"] = {Tensor(1, hw, 0.0), Tensor(1, hw, 1.0)};
    if (config.has_face) s.running["head_f.bn"] = {Tensor(1, hw, 0.0), Tensor(1, hw, 1.0)};
    return s;
}

Tensor pad_to_face_width(const Tensor &x_peri, const ModelConfig &config) {
    if (x_peri.cols != config.peri_dim)
        throw ShapeError("pad_to_face_width: expected width " +
                         std::to_string(config.peri_dim) + ", got " + x_peri.shape_str());
    Tensor out(x_peri.rows, config.face_dim, 0.0);
    for (std::size_t i = 0; i < x_peri.rows; ++i)
        for (std::size_t j = 0; j < x_peri.cols; ++j) out.at(i, j) = x_peri.at(i, j);
    return out;
}

namespace {

struct Builder {
    Tape &t;
    ModelState &s;
    bool training;
    std::map<std::string, int> *pnodes;
    std::map<std::string, int> cache;

    int param(const std::string &name) {
        auto it = cache.find(name);
        if (it != cache.end()) return it->second;
        const Tensor &v = s.params.at(name);
        int id = training ? t.input(v) : t.constant(v);
        cache[name] = id;
        if (pnodes) (*pnodes)[name] = id;
        return id;
    }

    int linear(int x, const std::string &prefix) {
        return t.add_row(t.matmul(x, param(prefix + ".W")), param(prefix + ".b"));
    }

    int batchnorm(int x, const std::string &pprefix, const std::string &statkey) {
        int gamma = param(pprefix + ".gamma");
        int beta = param(pprefix + ".beta");
        double eps = s.config.bn_epsilon;
        int xn;
        if (training) {
            if (t.value(x).rows < 2)
                throw StateError("batch_norm " + statkey +
                                 ": training batch must have >= 2 rows");
            int mu = t.mean_axis0(x);
            int xc = t.add_row(x, t.scale(mu, -1.0));
            int var = t.mean_axis0(t.mul(xc, xc));
            int inv = t.pow_scalar(t.add_scalar(var, eps), -0.5);
            xn = t.mul_row(xc, inv);
            BnStats &rs = s.running.at(statkey);
            const Tensor &mv = t.value(mu);
            const Tensor &vv = t.value(var);
            double m = s.config.bn_momentum;
            for (std::size_t j = 0; j < mv.cols; ++j) {
                rs.mean.values[j] = m * rs.mean.values[j] + (1.0 - m) * mv.values[j];
                rs.var.values[j] = m * rs.var.values[j] + (1.0 - m) * vv.values[j];
            }
        } else {
            const BnStats &rs = s.running.at(statkey);
            Tensor neg_mu(1, rs.mean.cols);
            Tensor inv_sd(1, rs.var.cols);
            for (std::size_t j = 0; j < rs.mean.cols; ++j) {
                neg_mu.values[j] = -rs.mean.values[j];
                inv_sd.values[j] = 1.0 / std::sqrt(rs.var.values[j] + eps);
            }
            xn = t.mul_row(t.add_row(x, t.constant(neg_mu)), t.constant(inv_sd));
        }
        return t.add_row(t.mul_row(xn, gamma), beta);
    }

    // Head + classifier for one view; returns {u, z}.
    std::pair<int, int> head(int h, char view) {
        std::string hp = std::string("head_") + view;
        int x = t.relu(batchnorm(linear(h, hp + ".fc"), hp + ".fc", hp + ".bn"));
        int u = linear(x, hp + ".embed");
        int z = linear(u, std::string("cls_") + view);
        return {u, z};
    }
};

}  // namespace

GraphBuild forward_pair(Tape &t, ModelState &state, const Tensor &x_peri,
                        const Tensor &x_face) {
    const ModelConfig &c = state.config;
    c.validate();
    GraphBuild gb;
    Builder b{t, state, state.training, &gb.param_nodes, {}};

    int hp = -1, hf = -1;
    if (c.has_peri) hp = t.constant(pad_to_face_width(x_peri, c));
    if (c.has_face) {
        if (x_face.cols != c.face_dim)
            throw ShapeError("forward_pair: face input width " + x_face.shape_str() +
                             " does not match face_dim");
        hf = t.constant(x_face);
    }
    if (c.has_peri && c.has_face && x_peri.rows != x_face.rows)
        throw ShapeError("forward_pair: view batch sizes differ");

    std::string tp = c.share_weights ? "trunk" : "trunk_p";
    std::string tf = c.share_weights ? "trunk" : "trunk_f";
    std::size_t rows = c.has_peri ? x_peri.rows : x_face.rows;
    for (std::size_t i = 0; i < c.trunk_widths.size(); ++i) {
        std::string bp = tp + ".b" + std::to_string(i);
        std::string bf = tf + ".b" + std::to_string(i);
        if (c.has_peri) hp = b.linear(hp, bp);
        if (c.has_face) hf = b.linear(hf, bf);
        if (c.share_batch_stats && state.training) {
            // Statistics over the 2B-row concatenation of both views.
            int cat = t.concat_rows(hp, hf);
            int bn = b.batchnorm(cat, bp, bp + ".shared");
            hp = t.slice_rows(bn, 0, static_cast<int>(rows));
            hf = t.slice_rows(bn, static_cast<int>(rows), static_cast<int>(2 * rows));
        } else {
            if (c.has_peri) hp = b.batchnorm(hp, bp, trunk_stat_key(c, bp, 'p'));
            if (c.has_face) hf = b.batchnorm(hf, bf, trunk_stat_key(c, bf, 'f'));
        }
        if (c.has_peri) hp = t.relu(hp);
        if (c.has_face) hf = t.relu(hf);
    }
    if (c.has_peri) {
        auto [u, z] = b.head(hp, 'p');
        gb.out.u_p = u;
        gb.out.z_p = z;
    }
    if (c.has_face) {
        auto [u, z] = b.head(hf, 'f');
        gb.out.u_f = u;
        gb.out.z_f = z;
    }
    return gb;
}

namespace {

Tensor eval_branch(const ModelState &state, const Tensor &x, char view, bool want_logits) {
    if (state.training)
        throw StateError("embed: model must be in eval mode (running-stat contract)");
    ModelState &s = const_cast<ModelState &>(state);  // eval build does not mutate
    Tape t;
    const ModelConfig &c = state.config;
    Tensor empty_p(x.rows, c.peri_dim, 0.0);
    Tensor empty_f(x.rows, c.face_dim, 0.0);
    GraphBuild gb = forward_pair(t, s, view == 'p' ? x : empty_p, view == 'f' ? x : empty_f);
    int id = view == 'p' ? (want_logits ? gb.out.z_p : gb.out.u_p)
                         : (want_logits ? gb.out.z_f : gb.out.u_f);
    if (id < 0) throw StateError("eval_branch: requested view is not part of this model");
    return t.value(id);
}

}  // namespace

Tensor embed(const ModelState &state, const Tensor &x_peri) {
    return eval_branch(state, x_peri, 'p', false);
}

Tensor embed_face(const ModelState &state, const Tensor &x_face) {
    return eval_branch(state, x_face, 'f', false);
}

LogitsPair eval_logits(const ModelState &state, const Tensor &x_peri, const Tensor &x_face) {
    if (state.training) throw StateError("eval_logits: model must be in eval mode");
    ModelState &s = const_cast<ModelState &>(state);
    Tape t;
    GraphBuild gb = forward_pair(t, s, x_peri, x_face);
    LogitsPair lp;
    if (gb.out.z_p >= 0) lp.z_p = t.value(gb.out.z_p);
    if (gb.out.z_f >= 0) lp.z_f = t.value(gb.out.z_f);
    return lp;
}

}  // namespace ckd
