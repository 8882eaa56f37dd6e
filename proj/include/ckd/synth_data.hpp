#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ckd/tensor.hpp"

namespace ckd {

// Synthetic paired two-view identity data: a rich "face" view and an
// information-bottlenecked "periocular" view share an identity latent
// and a common nuisance source. Test identities are disjoint from
// training identities (open-world protocol).
struct GeneratorConfig {
    std::size_t num_train_ids = 64;
    std::size_t num_test_ids = 32;
    std::size_t samples_per_id = 20;
    std::size_t latent_dim = 16;
    std::size_t kept_dims = 8;  // periocular bottleneck: latent coords kept
    std::size_t face_dim = 64;
    std::size_t peri_dim = 32;
    std::size_t nuisance_dim = 8;
    double intra_noise = 0.1;
    double nuisance_strength = 0.5;
    double obs_noise = 0.05;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Split {
    Tensor x_peri;  // N x peri_dim
    Tensor x_face;  // N x face_dim
    std::vector<std::uint32_t> labels;

    std::size_t size() const { return labels.size(); }
};

struct Dataset {
    GeneratorConfig config;
    Split train;
    Split validation;
    Split gallery;
    Split probe;
};

Dataset generate_dataset(const GeneratorConfig &config);

// Gallery pair lists for 1:1 verification: per identity, pick
// `samples_per_subject` gallery rows; positives are all within-identity
// pairs, negatives all cross-identity pairs among the picks.
struct VerificationPairs {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> positives;  // gallery row indices
    std::vector<std::pair<std::uint32_t, std::uint32_t>> negatives;
};

VerificationPairs verification_pairs(const Split &gallery, std::size_t samples_per_subject,
                                     std::uint64_t seed);

void save_dataset(const Dataset &ds, const std::string &path);
Dataset load_dataset(const std::string &path);

}  // namespace ckd
