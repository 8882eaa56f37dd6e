#include "ckd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "ckd/losses.hpp"
#include "json.hpp"

namespace ckd {

double cosine(const double *a, const double *b, std::size_t n) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) throw DomainError("cosine: zero-norm vector");
    return ab / std::sqrt(aa * bb);
}

std::vector<double> cmc_curve(const EmbeddingGallery &gallery, const EmbeddingGallery &probe,
                              std::size_t max_rank) {
    if (gallery.embeddings.rows != gallery.labels.size() ||
        probe.embeddings.rows != probe.labels.size())
        throw ShapeError("cmc_curve: label count does not match embedding rows");
    if (gallery.embeddings.cols != probe.embeddings.cols)
        throw ShapeError("cmc_curve: embedding widths differ");

    std::set<std::uint32_t> gallery_ids(gallery.labels.begin(), gallery.labels.end());
    std::vector<std::uint32_t> missing;
    for (std::uint32_t l : probe.labels)
        if (!gallery_ids.count(l)) missing.push_back(l);
    if (!missing.empty()) {
        std::sort(missing.begin(), missing.end());
        missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
        std::string msg = "cmc_curve: probe identities absent from gallery:";
        for (std::uint32_t m : missing) msg += " " + std::to_string(m);
        throw StateError(msg);
    }

    std::size_t e = gallery.embeddings.cols;
    std::vector<double> hits(max_rank, 0.0);
    for (std::size_t pi = 0; pi < probe.labels.size(); ++pi) {
        const double *pv = probe.embeddings.values.data() + pi * e;
        // Max similarity over each identity's gallery entries.
        std::map<std::uint32_t, double> best;
        for (std::size_t gi = 0; gi < gallery.labels.size(); ++gi) {
            double s = cosine(pv, gallery.embeddings.values.data() + gi * e, e);
            auto [it, inserted] = best.emplace(gallery.labels[gi], s);
            if (!inserted) it->second = std::max(it->second, s);
        }
        std::vector<std::pair<double, std::uint32_t>> order;
        order.reserve(best.size());
        for (auto &[id, s] : best) order.emplace_back(s, id);
        std::sort(order.begin(), order.end(), [](const auto &a, const auto &b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t r = 0; r < order.size(); ++r) {
            if (order[r].second == probe.labels[pi]) {
                for (std::size_t k = r; k < max_rank; ++k) hits[k] += 1.0;
                break;
            }
        }
    }
    for (double &h : hits) h /= static_cast<double>(probe.labels.size());
    return hits;
}

RocResult roc_eer(const ScoredPairs &pairs) {
    std::size_t npos = 0, nneg = 0;
    for (const auto &[s, same] : pairs) {
        if (!std::isfinite(s)) throw DomainError("roc_eer: non-finite score");
        (same ? npos : nneg)++;
    }
    if (npos == 0 || nneg == 0)
        throw StateError("roc_eer: need at least one positive and one negative pair");

    std::vector<double> thresholds;
    thresholds.reserve(pairs.size());
    for (const auto &[s, same] : pairs) thresholds.push_back(s);
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    RocResult out;
    // Accept when score >= threshold. FAR decreases and FRR increases as the
    // threshold sweeps upward; append a top sentinel so a crossing always exists.
    auto rates = [&](double t) {
        std::size_t fa = 0, fr = 0;
        for (const auto &[s, same] : pairs) {
            if (same && s < t) fr++;
            if (!same && s >= t) fa++;
        }
        return std::pair<double, double>{double(fa) / double(nneg),
                                         double(fr) / double(npos)};
    };
    for (double t : thresholds) {
        auto [far, frr] = rates(t);
        out.points.push_back({t, far, frr});
    }
    out.points.push_back({thresholds.back() + 1.0, 0.0, 1.0});

    out.eer = 0.5;
    for (std::size_t i = 0; i + 1 < out.points.size(); ++i) {
        double d1 = out.points[i].far - out.points[i].frr;
        double d2 = out.points[i + 1].far - out.points[i + 1].frr;
        if (d1 >= 0.0 && d2 <= 0.0) {
            if (d1 == d2) {
                out.eer = 0.5 * (out.points[i].far + out.points[i].frr);
            } else {
                double alpha = d1 / (d1 - d2);
                double far = out.points[i].far +
                             alpha * (out.points[i + 1].far - out.points[i].far);
                double frr = out.points[i].frr +
                             alpha * (out.points[i + 1].frr - out.points[i].frr);
                out.eer = 0.5 * (far + frr);
            }
            break;
        }
    }
    return out;
}

CalibrationResult calibration(const std::vector<std::pair<double, bool>> &confidences,
                              std::size_t num_bins) {
    if (num_bins < 1) throw DomainError("calibration: num_bins must be >= 1");
    if (confidences.empty()) throw StateError("calibration: empty input");
    std::vector<double> conf_sum(num_bins, 0.0), acc_sum(num_bins, 0.0);
    std::vector<std::size_t> count(num_bins, 0);
    for (const auto &[c, correct] : confidences) {
        std::size_t b = std::min(num_bins - 1,
                                 static_cast<std::size_t>(c * static_cast<double>(num_bins)));
        conf_sum[b] += c;
        acc_sum[b] += correct ? 1.0 : 0.0;
        count[b]++;
    }
    double n = static_cast<double>(confidences.size());
    CalibrationResult r{0.0, 0.0};
    for (std::size_t b = 0; b < num_bins; ++b) {
        if (!count[b]) continue;
        double gap = std::abs(acc_sum[b] / count[b] - conf_sum[b] / count[b]);
        r.ece += (count[b] / n) * gap;
        r.mce = std::max(r.mce, gap);
    }
    return r;
}

double davies_bouldin(const EmbeddingGallery &g, bool normalize) {
    if (g.embeddings.rows != g.labels.size())
        throw ShapeError("davies_bouldin: label count mismatch");
    std::size_t e = g.embeddings.cols;
    Tensor x = g.embeddings;
    if (normalize) {
        for (std::size_t i = 0; i < x.rows; ++i) {
            double norm = 0.0;
            for (std::size_t j = 0; j < e; ++j) norm += x.at(i, j) * x.at(i, j);
            norm = std::sqrt(norm);
            if (norm == 0.0) throw DomainError("davies_bouldin: zero-norm embedding row");
            for (std::size_t j = 0; j < e; ++j) x.at(i, j) /= norm;
        }
    }
    std::map<std::uint32_t, std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < g.labels.size(); ++i) clusters[g.labels[i]].push_back(i);
    if (clusters.size() < 2) throw StateError("davies_bouldin: need >= 2 classes");

    std::vector<std::vector<double>> centroids;
    std::vector<double> scatter;
    for (auto &[id, rows] : clusters) {
        std::vector<double> c(e, 0.0);
        for (std::size_t r : rows)
            for (std::size_t j = 0; j < e; ++j) c[j] += x.at(r, j);
        for (double &v : c) v /= static_cast<double>(rows.size());
        double s = 0.0;
        for (std::size_t r : rows) {
            double d = 0.0;
            for (std::size_t j = 0; j < e; ++j) {
                double t = x.at(r, j) - c[j];
                d += t * t;
            }
            s += std::sqrt(d);
        }
        scatter.push_back(s / static_cast<double>(rows.size()));
        centroids.push_back(std::move(c));
    }
    std::size_t k = centroids.size();
    double dbi = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        double worst = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (j == i) continue;
            double d = 0.0;
            for (std::size_t c = 0; c < e; ++c) {
                double t = centroids[i][c] - centroids[j][c];
                d += t * t;
            }
            d = std::sqrt(d);
            if (d == 0.0) throw DomainError("davies_bouldin: coincident class centroids");
            worst = std::max(worst, (scatter[i] + scatter[j]) / d);
        }
        dbi += worst;
    }
    return dbi / static_cast<double>(k);
}

std::pair<Tensor, std::vector<std::uint32_t>> class_prototypes(const EmbeddingGallery &g) {
    if (g.embeddings.rows != g.labels.size())
        throw ShapeError("class_prototypes: label count mismatch");
    std::size_t e = g.embeddings.cols;
    std::map<std::uint32_t, std::vector<double>> sums;
    std::map<std::uint32_t, std::size_t> counts;
    for (std::size_t i = 0; i < g.labels.size(); ++i) {
        const double *v = g.embeddings.values.data() + i * e;
        double norm = 0.0;
        for (std::size_t j = 0; j < e; ++j) norm += v[j] * v[j];
        norm = std::sqrt(norm);
        if (norm == 0.0) throw DomainError("class_prototypes: zero-norm embedding row");
        auto &s = sums[g.labels[i]];
        s.resize(e, 0.0);
        for (std::size_t j = 0; j < e; ++j) s[j] += v[j] / norm;
        counts[g.labels[i]]++;
    }
    Tensor protos(sums.size(), e);
    std::vector<std::uint32_t> labels;
    std::size_t r = 0;
    for (auto &[id, s] : sums) {
        double norm = 0.0;
        for (double v : s) norm += v * v;
        norm = std::sqrt(norm);
        if (norm == 0.0) throw DomainError("class_prototypes: zero-norm prototype for id " +
                                           std::to_string(id));
        for (std::size_t j = 0; j < e; ++j) protos.at(r, j) = s[j] / norm;
        labels.push_back(id);
        ++r;
    }
    return {std::move(protos), std::move(labels)};
}

GramAnalysis gram_analysis(const Tensor &face_prototypes, const Tensor &peri_prototypes) {
    if (!face_prototypes.same_shape(peri_prototypes))
        throw ShapeError("gram_analysis: prototype shapes differ");
    std::size_t k = face_prototypes.rows, e = face_prototypes.cols;
    GramAnalysis g;
    g.gram_face = Tensor(k, k);
    g.gram_peri = Tensor(k, k);
    g.difference = Tensor(k, k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            g.gram_face.at(i, j) = cosine(face_prototypes.values.data() + i * e,
                                          face_prototypes.values.data() + j * e, e);
            g.gram_peri.at(i, j) = cosine(peri_prototypes.values.data() + i * e,
                                          peri_prototypes.values.data() + j * e, e);
            g.difference.at(i, j) = g.gram_face.at(i, j) - g.gram_peri.at(i, j);
        }
    double off = static_cast<double>(k * (k - 1));
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            if (i != j) {
                g.mean_offdiag_face += g.gram_face.at(i, j) / off;
                g.mean_offdiag_peri += g.gram_peri.at(i, j) / off;
            }
            g.mean_abs_difference +=
                std::abs(g.difference.at(i, j)) / static_cast<double>(k * k);
        }
    return g;
}

double hellinger(const std::vector<double> &p, const std::vector<double> &q) {
    if (p.size() != q.size()) throw ShapeError("hellinger: dimension mismatch");
    double sp = 0, sq = 0;
    for (double v : p) sp += v;
    for (double v : q) sq += v;
    if (std::abs(sp - 1.0) > 1e-6 || std::abs(sq - 1.0) > 1e-6)
        throw DomainError("hellinger: inputs must be probability vectors");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double d = std::sqrt(p[i]) - std::sqrt(q[i]);
        s += d * d;
    }
    return std::sqrt(s) / std::sqrt(2.0);
}

EntropyMetrics entropy_metrics(const std::vector<double> &logits, int target) {
    if (logits.size() < 3)
        throw DomainError("entropy_metrics: need K >= 3 for non-target entropy");
    if (target < 0 || static_cast<std::size_t>(target) >= logits.size())
        throw DomainError("entropy_metrics: target out of range");
    EntropyMetrics m;
    m.posterior_entropy = entropy(softmax_tau(logits, 1.0));
    std::vector<double> rest;
    rest.reserve(logits.size() - 1);
    for (std::size_t i = 0; i < logits.size(); ++i)
        if (static_cast<int>(i) != target) rest.push_back(logits[i]);
    m.non_target_entropy = entropy(softmax_tau(rest, 1.0));
    return m;
}

double posterior_mutual_information(const std::vector<std::vector<double>> &p,
                                    const std::vector<std::vector<double>> &q) {
    if (p.empty() || p.size() != q.size())
        throw StateError("posterior_mutual_information: empty or mismatched input");
    std::size_t ka = p[0].size(), kb = q[0].size();
    Tensor joint(ka, kb);
    double n = static_cast<double>(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i].size() != ka || q[i].size() != kb)
            throw ShapeError("posterior_mutual_information: ragged posterior lists");
        for (std::size_t a = 0; a < ka; ++a)
            for (std::size_t b = 0; b < kb; ++b)
                joint.at(a, b) += p[i][a] * q[i][b] / n;
    }
    std::vector<double> pa(ka, 0.0), pb(kb, 0.0);
    for (std::size_t a = 0; a < ka; ++a)
        for (std::size_t b = 0; b < kb; ++b) {
            pa[a] += joint.at(a, b);
            pb[b] += joint.at(a, b);
        }
    double mi = 0.0;
    for (std::size_t a = 0; a < ka; ++a)
        for (std::size_t b = 0; b < kb; ++b) {
            double j = joint.at(a, b);
            if (j > 0.0) mi += j * std::log(j / (pa[a] * pb[b]));
        }
    return mi;
}

double relative_gain(double avg_c, double avg_p, double avg_f) {
    if (avg_f == avg_p)
        throw DomainError("relative_gain: undefined when the bounds coincide");
    return (avg_c - avg_p) / (avg_f - avg_p) * 100.0;
}

namespace {

using nlohmann::json;

json num_or_null(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

double null_or_num(const json &j, const char *key) {
    if (!j.contains(key) || j.at(key).is_null()) return kMissing;
    return j.at(key).get<double>();
}

}  // namespace

std::string report_to_json(const MetricReport &r) {
    json j;
    j["variant"] = r.variant;
    j["seed"] = r.seed;
    j["cmc"] = r.cmc;
    j["eer"] = num_or_null(r.eer);
    j["ece"] = num_or_null(r.ece);
    j["mce"] = num_or_null(r.mce);
    j["dbi"] = num_or_null(r.dbi);
    j["mean_entropy"] = num_or_null(r.mean_entropy);
    j["mean_non_target_entropy"] = num_or_null(r.mean_non_target_entropy);
    j["mean_hellinger"] = num_or_null(r.mean_hellinger);
    j["mutual_information"] = num_or_null(r.mutual_information);
    j["mean_val_kl_f2p"] = num_or_null(r.mean_val_kl_f2p);
    j["gram_mean_offdiag_face"] = num_or_null(r.gram_mean_offdiag_face);
    j["gram_mean_offdiag_peri"] = num_or_null(r.gram_mean_offdiag_peri);
    j["gram_mean_abs_difference"] = num_or_null(r.gram_mean_abs_difference);
    j["gain_id"] = num_or_null(r.gain_id);
    j["gain_ver"] = num_or_null(r.gain_ver);
    return j.dump(2);
}

MetricReport report_from_json(const std::string &text) {
    json j = json::parse(text);
    MetricReport r;
    r.variant = j.at("variant").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.cmc = j.at("cmc").get<std::vector<double>>();
    r.eer = null_or_num(j, "eer");
    r.ece = null_or_num(j, "ece");
    r.mce = null_or_num(j, "mce");
    r.dbi = null_or_num(j, "dbi");
    r.mean_entropy = null_or_num(j, "mean_entropy");
    r.mean_non_target_entropy = null_or_num(j, "mean_non_target_entropy");
    r.mean_hellinger = null_or_num(j, "mean_hellinger");
    r.mutual_information = null_or_num(j, "mutual_information");
    r.mean_val_kl_f2p = null_or_num(j, "mean_val_kl_f2p");
    r.gram_mean_offdiag_face = null_or_num(j, "gram_mean_offdiag_face");
    r.gram_mean_offdiag_peri = null_or_num(j, "gram_mean_offdiag_peri");
    r.gram_mean_abs_difference = null_or_num(j, "gram_mean_abs_difference");
    r.gain_id = null_or_num(j, "gain_id");
    r.gain_ver = null_or_num(j, "gain_ver");
    return r;
}

std::string report_csv_header() {
    return "variant,seed,rank1,rank5,rank10,eer,ece,mce,dbi,mean_entropy,"
           "mean_non_target_entropy,mean_hellinger,mutual_information,"
           "mean_val_kl_f2p,gram_mean_abs_difference,gain_id,gain_ver";
}

std::string report_csv_row(const MetricReport &r) {
    std::ostringstream os;
    os.precision(17);
    auto put = [&](double v) {
        os << ",";
        if (!std::isnan(v)) os << v;
    };
    os << r.variant << "," << r.seed;
    auto rank = [&](std::size_t i) {
        return i < r.cmc.size() ? r.cmc[i] : kMissing;
    };
    put(rank(0));
    put(rank(4));
    put(rank(9));
    put(r.eer);
    put(r.ece);
    put(r.mce);
    put(r.dbi);
    put(r.mean_entropy);
    put(r.mean_non_target_entropy);
    put(r.mean_hellinger);
    put(r.mutual_information);
    put(r.mean_val_kl_f2p);
    put(r.gram_mean_abs_difference);
    put(r.gain_id);
    put(r.gain_ver);
    return os.str();
}

}  // namespace ckd
