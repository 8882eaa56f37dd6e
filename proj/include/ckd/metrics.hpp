#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "ckd/tensor.hpp"

namespace ckd {

struct EmbeddingGallery {
    Tensor embeddings;  // N x e
    std::vector<std::uint32_t> labels;
};

double cosine(const double *a, const double *b, std::size_t n);

// Identification: rate at rank r = fraction of probes whose true identity
// is within the top-r gallery identities by max cosine similarity.
std::vector<double> cmc_curve(const EmbeddingGallery &gallery, const EmbeddingGallery &probe,
                              std::size_t max_rank);

using ScoredPairs = std::vector<std::pair<double, bool>>;  // (similarity, same identity)

struct RocPoint {
    double threshold, far, frr;
};
struct RocResult {
    std::vector<RocPoint> points;
    double eer;
};
RocResult roc_eer(const ScoredPairs &pairs);

struct CalibrationResult {
    double ece, mce;
};
// confidences: (max posterior, prediction correct) per sample.
CalibrationResult calibration(const std::vector<std::pair<double, bool>> &confidences,
                              std::size_t num_bins);

// Lower is better. `normalize` projects embeddings to the unit sphere
// first (cosine-based recognition geometry).
double davies_bouldin(const EmbeddingGallery &embeddings, bool normalize = true);

// Per-class mean of L2-normalized embeddings, re-normalized; rows ordered
// by ascending label.
std::pair<Tensor, std::vector<std::uint32_t>> class_prototypes(const EmbeddingGallery &g);

struct GramAnalysis {
    Tensor gram_face;    // K x K cosine of face prototypes
    Tensor gram_peri;
    Tensor difference;   // gram_face - gram_peri
    double mean_offdiag_face = 0, mean_offdiag_peri = 0;
    double mean_abs_difference = 0;
};
GramAnalysis gram_analysis(const Tensor &face_prototypes, const Tensor &peri_prototypes);

double hellinger(const std::vector<double> &p, const std::vector<double> &q);

struct EntropyMetrics {
    double posterior_entropy;
    double non_target_entropy;
};
EntropyMetrics entropy_metrics(const std::vector<double> &logits, int target);

// Empirical soft-joint MI: P(a,b) = (1/N) sum_i p_i[a] * q_i[b].
double posterior_mutual_information(const std::vector<std::vector<double>> &p,
                                    const std::vector<std::vector<double>> &q);

// Gain = (avg_c - avg_p) / (avg_f - avg_p) * 100.
double relative_gain(double avg_c, double avg_p, double avg_f);

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct MetricReport {
    std::string variant;
    std::uint64_t seed = 0;
    std::vector<double> cmc;  // ranks 1..10
    double eer = kMissing;
    double ece = kMissing, mce = kMissing;
    double dbi = kMissing;
    double mean_entropy = kMissing;
    double mean_non_target_entropy = kMissing;
    double mean_hellinger = kMissing;
    double mutual_information = kMissing;
    double mean_val_kl_f2p = kMissing;  // D_KL(p^F || p) at tau=1, validation mean
    double gram_mean_offdiag_face = kMissing;
    double gram_mean_offdiag_peri = kMissing;
    double gram_mean_abs_difference = kMissing;
    double gain_id = kMissing;
    double gain_ver = kMissing;
};

std::string report_to_json(const MetricReport &r);
MetricReport report_from_json(const std::string &text);
std::string report_csv_header();
std::string report_csv_row(const MetricReport &r);

}  // namespace ckd
