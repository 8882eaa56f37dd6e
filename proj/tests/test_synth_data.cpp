#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ckd/synth_data.hpp"

using namespace ckd;

namespace {

GeneratorConfig tiny_config() {
    GeneratorConfig c;
    c.num_train_ids = 6;
    c.num_test_ids = 4;
    c.samples_per_id = 10;
    c.latent_dim = 8;
    c.kept_dims = 4;
    c.face_dim = 12;
    c.peri_dim = 6;
    c.nuisance_dim = 3;
    return c;
}

// Hand-built split with `per_id` gallery rows for each of `ids` identities;
// features are irrelevant to pairing, only labels matter.
Split label_split(std::size_t ids, std::size_t per_id) {
    Split s;
    for (std::size_t id = 0; id < ids; ++id)
        for (std::size_t k = 0; k < per_id; ++k)
            s.labels.push_back(static_cast<std::uint32_t>(id));
    s.x_peri = Tensor(s.labels.size(), 1, 0.0);
    s.x_face = Tensor(s.labels.size(), 1, 0.0);
    return s;
}

// Nearest-centroid accuracy on raw vectors: centroids from the gallery,
// probes assigned to the closest centroid by Euclidean distance.
double nearest_centroid_accuracy(const Split &gallery, const Split &probe, bool face) {
    const Tensor &gx = face ? gallery.x_face : gallery.x_peri;
    const Tensor &px = face ? probe.x_face : probe.x_peri;
    std::map<std::uint32_t, std::pair<std::vector<double>, std::size_t>> acc;
    for (std::size_t i = 0; i < gallery.size(); ++i) {
        auto &[sum, count] = acc[gallery.labels[i]];
        sum.resize(gx.cols, 0.0);
        for (std::size_t j = 0; j < gx.cols; ++j) sum[j] += gx.at(i, j);
        ++count;
    }
    std::vector<std::uint32_t> ids;
    std::vector<std::vector<double>> centroids;
    for (auto &[id, sc] : acc) {
        ids.push_back(id);
        for (double &v : sc.first) v /= static_cast<double>(sc.second);
        centroids.push_back(sc.first);
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        double best = 0.0;
        std::uint32_t best_id = 0;
        for (std::size_t c = 0; c < centroids.size(); ++c) {
            double d = 0.0;
            for (std::size_t j = 0; j < px.cols; ++j) {
                double diff = px.at(i, j) - centroids[c][j];
                d += diff * diff;
            }
            if (c == 0 || d < best) {
                best = d;
                best_id = ids[c];
            }
        }
        if (best_id == probe.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(probe.size());
}

}  // namespace

TEST_CASE("generation is bitwise deterministic per seed") {
    GeneratorConfig c = tiny_config();
    c.seed = 17;
    Dataset a = generate_dataset(c);
    Dataset b = generate_dataset(c);
    CHECK(a.train.x_peri.values == b.train.x_peri.values);
    CHECK(a.train.x_face.values == b.train.x_face.values);
    CHECK(a.probe.x_face.values == b.probe.x_face.values);
    CHECK(a.gallery.labels == b.gallery.labels);

    c.seed = 18;
    Dataset d = generate_dataset(c);
    CHECK(a.train.x_peri.values != d.train.x_peri.values);
}

TEST_CASE("train and test identity sets are disjoint and splits are sized per identity") {
    GeneratorConfig c = tiny_config();
    Dataset ds = generate_dataset(c);
    std::set<std::uint32_t> train_ids(ds.train.labels.begin(), ds.train.labels.end());
    std::set<std::uint32_t> val_ids(ds.validation.labels.begin(), ds.validation.labels.end());
    std::set<std::uint32_t> test_ids(ds.gallery.labels.begin(), ds.gallery.labels.end());
    std::set<std::uint32_t> probe_ids(ds.probe.labels.begin(), ds.probe.labels.end());
    CHECK(train_ids.size() == c.num_train_ids);
    CHECK(test_ids.size() == c.num_test_ids);
    CHECK(val_ids == train_ids);
    CHECK(probe_ids == test_ids);
    for (std::uint32_t id : train_ids) CHECK(test_ids.count(id) == 0);

    CHECK(ds.train.size() + ds.validation.size() == c.num_train_ids * c.samples_per_id);
    CHECK(ds.gallery.size() + ds.probe.size() == c.num_test_ids * c.samples_per_id);
    CHECK(ds.train.x_peri.cols == c.peri_dim);
    CHECK(ds.train.x_face.cols == c.face_dim);
}

TEST_CASE("noiseless generation collapses each identity to a single point") {
    GeneratorConfig c = tiny_config();
    c.intra_noise = 0.0;
    c.nuisance_strength = 0.0;
    c.obs_noise = 0.0;
    Dataset ds = generate_dataset(c);
    std::map<std::uint32_t, std::vector<double>> first_face;
    for (std::size_t i = 0; i < ds.train.size(); ++i) {
        std::vector<double> row(ds.train.x_face.values.begin() + i * c.face_dim,
                                ds.train.x_face.values.begin() + (i + 1) * c.face_dim);
        auto [it, fresh] = first_face.emplace(ds.train.labels[i], row);
        if (!fresh) CHECK(it->second == row);
    }
}

TEST_CASE("verification pair counts follow the closed-form combinatorics") {
    // 4 samples per subject: K * C(4,2) positives, C(K,2) * 16 negatives.
    auto counts = [](std::size_t ids) {
        VerificationPairs vp = verification_pairs(label_split(ids, 5), 4, 1);
        return std::make_pair(vp.positives.size(), vp.negatives.size());
    };
    CHECK(counts(200) == std::make_pair<std::size_t, std::size_t>(1200, 318400));
    CHECK(counts(32) == std::make_pair<std::size_t, std::size_t>(192, 7936));
    CHECK(counts(2) == std::make_pair<std::size_t, std::size_t>(12, 16));
}

TEST_CASE("pair lists are label-consistent and duplicate-free") {
    Split s = label_split(7, 6);
    VerificationPairs vp = verification_pairs(s, 4, 3);
    std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
    for (auto [a, b] : vp.positives) {
        CHECK(s.labels[a] == s.labels[b]);
        CHECK(a != b);
        CHECK(seen.insert({std::min(a, b), std::max(a, b)}).second);
    }
    for (auto [a, b] : vp.negatives) {
        CHECK(s.labels[a] != s.labels[b]);
        CHECK(seen.insert({std::min(a, b), std::max(a, b)}).second);
    }
}

TEST_CASE("pair selection is deterministic per seed") {
    Split s = label_split(9, 8);
    VerificationPairs a = verification_pairs(s, 4, 5);
    VerificationPairs b = verification_pairs(s, 4, 5);
    CHECK(a.positives == b.positives);
    CHECK(a.negatives == b.negatives);
}

TEST_CASE("an identity with too few gallery samples is reported by name") {
    Split s = label_split(3, 4);
    s.labels.push_back(7);  // identity 7 has a single sample
    s.x_peri = Tensor(s.labels.size(), 1, 0.0);
    s.x_face = Tensor(s.labels.size(), 1, 0.0);
    try {
        verification_pairs(s, 4, 0);
        FAIL("expected StateError");
    } catch (const StateError &e) {
        CHECK(std::string(e.what()).find("7") != std::string::npos);
    }
}

TEST_CASE("dataset files round-trip bitwise") {
    GeneratorConfig c = tiny_config();
    c.seed = 23;
    Dataset ds = generate_dataset(c);
    std::string path = "roundtrip.ckds";
    save_dataset(ds, path);
    Dataset back = load_dataset(path);
    CHECK(back.config.seed == c.seed);
    CHECK(back.config.kept_dims == c.kept_dims);
    CHECK(back.train.x_peri.values == ds.train.x_peri.values);
    CHECK(back.train.x_face.values == ds.train.x_face.values);
    CHECK(back.validation.labels == ds.validation.labels);
    CHECK(back.gallery.x_face.values == ds.gallery.x_face.values);
    CHECK(back.probe.x_peri.values == ds.probe.x_peri.values);
    std::remove(path.c_str());
}

TEST_CASE("corrupt dataset files raise io errors naming the byte offset") {
    {
        std::ofstream f("badmagic.ckds", std::ios::binary);
        f << "NOPE and then some bytes";
    }
    try {
        load_dataset("badmagic.ckds");
        FAIL("expected IoError");
    } catch (const IoError &e) {
        CHECK(std::string(e.what()).find("offset 0") != std::string::npos);
    }
    std::remove("badmagic.ckds");

    GeneratorConfig c = tiny_config();
    Dataset ds = generate_dataset(c);
    save_dataset(ds, "full.ckds");
    {
        std::ifstream in("full.ckds", std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
        std::ofstream out("cut.ckds", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    try {
        load_dataset("cut.ckds");
        FAIL("expected IoError");
    } catch (const IoError &e) {
        CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
    }
    CHECK_THROWS_AS(load_dataset("no_such_file.ckds"), IoError);
    std::remove("full.ckds");
    std::remove("cut.ckds");
}

TEST_CASE("invalid generator configs are rejected") {
    GeneratorConfig c = tiny_config();
    c.kept_dims = c.latent_dim + 1;
    CHECK_THROWS_AS(generate_dataset(c), ConfigError);
    c = tiny_config();
    c.samples_per_id = 1;
    CHECK_THROWS_AS(generate_dataset(c), ConfigError);
    c = tiny_config();
    c.intra_noise = -0.1;
    CHECK_THROWS_AS(generate_dataset(c), ConfigError);
    c = tiny_config();
    c.num_test_ids = 0;
    CHECK_THROWS_AS(generate_dataset(c), ConfigError);
}

TEST_CASE("the bottlenecked view is harder to classify than the rich view") {
    // Nearest-centroid accuracy on raw vectors: the periocular view keeps
    // only half of the latent coordinates, so the face view must win.
    GeneratorConfig c;  // library defaults, larger sample count
    c.samples_per_id = 40;
    int face_wins = 0;
    double gap = 0.0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        c.seed = seed;
        Dataset ds = generate_dataset(c);
        double af = nearest_centroid_accuracy(ds.gallery, ds.probe, true);
        double ap = nearest_centroid_accuracy(ds.gallery, ds.probe, false);
        if (af > ap) ++face_wins;
        gap += af - ap;
    }
    CHECK(face_wins >= 2);
    CHECK(gap > 0.0);
}
