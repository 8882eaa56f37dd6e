#include "ckd/synth_data.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>

#include "ckd/rng.hpp"

namespace ckd {

void GeneratorConfig::validate() const {
    if (num_train_ids == 0 || num_test_ids == 0 || samples_per_id < 2)
        throw ConfigError("GeneratorConfig: need >= 1 train/test identity, >= 2 samples/id");
    if (kept_dims > latent_dim)
        throw ConfigError("GeneratorConfig: kept_dims exceeds latent_dim");
    if (latent_dim == 0 || face_dim == 0 || peri_dim == 0)
        throw ConfigError("GeneratorConfig: zero dimension");
    if (intra_noise < 0 || nuisance_strength < 0 || obs_noise < 0)
        throw ConfigError("GeneratorConfig: noise strengths must be >= 0");
}

namespace {

Tensor random_matrix(Rng &rng, std::size_t r, std::size_t c, double std) {
    Tensor m(r, c);
    for (double &v : m.values) v = rng.normal(0.0, std);
    return m;
}

void matvec_into(const Tensor &A, const std::vector<double> &x, double *out) {
    for (std::size_t i = 0; i < A.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < A.cols; ++j) s += A.at(i, j) * x[j];
        out[i] += s;
    }
}

struct SplitBuilder {
    std::size_t peri_dim, face_dim;
    std::vector<double> peri, face;
    std::vector<std::uint32_t> labels;

    Split finish() {
        Split s;
        std::size_t n = labels.size();
        s.x_peri = Tensor(n, peri_dim, std::move(peri));
        s.x_face = Tensor(n, face_dim, std::move(face));
        s.labels = std::move(labels);
        return s;
    }
};

}  // namespace

Dataset generate_dataset(const GeneratorConfig &config) {
    config.validate();
    const std::size_t d = config.latent_dim, q = config.nuisance_dim;
    Rng mix(config.seed, "mixing");
    Tensor A_F = random_matrix(mix, config.face_dim, d, 1.0 / std::sqrt(double(d)));
    Tensor B_F = q ? random_matrix(mix, config.face_dim, q, 1.0 / std::sqrt(double(q)))
                   : Tensor();
    Tensor A_P = random_matrix(mix, config.peri_dim, d, 1.0 / std::sqrt(double(d)));
    Tensor B_P = q ? random_matrix(mix, config.peri_dim, q, 1.0 / std::sqrt(double(q)))
                   : Tensor();

    std::size_t total_ids = config.num_train_ids + config.num_test_ids;
    Rng lat(config.seed, "latents");
    std::vector<std::vector<double>> centers(total_ids, std::vector<double>(d));
    for (auto &c : centers) {
        double norm = 0.0;
        for (double &v : c) {
            v = lat.normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (double &v : c) v /= norm;
    }

    std::size_t val_per_id = std::max<std::size_t>(1, config.samples_per_id / 5);
    std::size_t gal_per_id =
        std::min(config.samples_per_id - 1,
                 std::max<std::size_t>(4, config.samples_per_id / 5));

    SplitBuilder train{config.peri_dim, config.face_dim};
    SplitBuilder val{config.peri_dim, config.face_dim};
    SplitBuilder gallery{config.peri_dim, config.face_dim};
    SplitBuilder probe{config.peri_dim, config.face_dim};

    std::vector<double> h(d), n_face(q), n_peri(q), hm(d);
    for (std::size_t id = 0; id < total_ids; ++id) {
        Rng rng(config.seed, "identity." + std::to_string(id));
        bool is_train = id < config.num_train_ids;
        for (std::size_t s = 0; s < config.samples_per_id; ++s) {
            for (std::size_t j = 0; j < d; ++j)
                h[j] = centers[id][j] + config.intra_noise * rng.normal();
            for (std::size_t j = 0; j < q; ++j) {
                n_face[j] = config.nuisance_strength * rng.normal();
                n_peri[j] = config.nuisance_strength * rng.normal();
            }
            // Bottleneck: the periocular view sees only the first kept_dims
            // latent coordinates.
            for (std::size_t j = 0; j < d; ++j) hm[j] = j < config.kept_dims ? h[j] : 0.0;

            SplitBuilder *dst;
            if (is_train)
                dst = s < val_per_id ? &val : &train;
            else
                dst = s < gal_per_id ? &gallery : &probe;

            std::size_t fo = dst->face.size(), po = dst->peri.size();
            dst->face.resize(fo + config.face_dim, 0.0);
            dst->peri.resize(po + config.peri_dim, 0.0);
            matvec_into(A_F, h, dst->face.data() + fo);
            if (q) matvec_into(B_F, n_face, dst->face.data() + fo);
            matvec_into(A_P, hm, dst->peri.data() + po);
            if (q) matvec_into(B_P, n_peri, dst->peri.data() + po);
            for (std::size_t j = 0; j < config.face_dim; ++j)
                dst->face[fo + j] += config.obs_noise * rng.normal();
            for (std::size_t j = 0; j < config.peri_dim; ++j)
                dst->peri[po + j] += config.obs_noise * rng.normal();
            dst->labels.push_back(static_cast<std::uint32_t>(id));
        }
    }

    Dataset ds;
    ds.config = config;
    ds.train = train.finish();
    ds.validation = val.finish();
    ds.gallery = gallery.finish();
    ds.probe = probe.finish();
    return ds;
}

VerificationPairs verification_pairs(const Split &gallery, std::size_t samples_per_subject,
                                     std::uint64_t seed) {
    std::map<std::uint32_t, std::vector<std::uint32_t>> by_id;
    for (std::size_t i = 0; i < gallery.size(); ++i)
        by_id[gallery.labels[i]].push_back(static_cast<std::uint32_t>(i));

    Rng rng(seed, "verification");
    std::vector<std::vector<std::uint32_t>> picks;
    for (auto &[id, rows] : by_id) {
        if (rows.size() < samples_per_subject)
            throw StateError("verification_pairs: identity " + std::to_string(id) +
                             " has only " + std::to_string(rows.size()) +
                             " gallery samples (need " +
                             std::to_string(samples_per_subject) + ")");
        for (std::size_t i = rows.size(); i > 1; --i)
            std::swap(rows[i - 1], rows[rng.below(i)]);
        picks.emplace_back(rows.begin(), rows.begin() + samples_per_subject);
    }

    VerificationPairs vp;
    for (const auto &p : picks)
        for (std::size_t a = 0; a < p.size(); ++a)
            for (std::size_t b = a + 1; b < p.size(); ++b)
                vp.positives.emplace_back(p[a], p[b]);
    for (std::size_t i = 0; i < picks.size(); ++i)
        for (std::size_t j = i + 1; j < picks.size(); ++j)
            for (std::uint32_t a : picks[i])
                for (std::uint32_t b : picks[j]) vp.negatives.emplace_back(a, b);
    return vp;
}

namespace {

constexpr char kMagic[4] = {'C', 'K', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

struct Writer {
    std::ofstream f;
    explicit Writer(const std::string &path) : f(path, std::ios::binary) {
        if (!f) throw IoError("cannot open " + path + " for writing");
    }
    template <typename T>
    void put(T v) {
        f.write(reinterpret_cast<const char *>(&v), sizeof(T));
    }
    void put_doubles(const std::vector<double> &v) {
        f.write(reinterpret_cast<const char *>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
};

struct Reader {
    std::ifstream f;
    std::string path;
    explicit Reader(const std::string &p) : f(p, std::ios::binary), path(p) {
        if (!f) throw IoError("cannot open " + p);
    }
    std::size_t offset() { return static_cast<std::size_t>(f.tellg()); }
    template <typename T>
    T get() {
        T v{};
        std::size_t at = offset();
        f.read(reinterpret_cast<char *>(&v), sizeof(T));
        if (!f)
            throw IoError("truncated dataset file " + path + " at byte offset " +
                          std::to_string(at));
        return v;
    }
    void get_doubles(std::vector<double> &v) {
        std::size_t at = offset();
        f.read(reinterpret_cast<char *>(v.data()),
               static_cast<std::streamsize>(v.size() * sizeof(double)));
        if (!f)
            throw IoError("truncated dataset file " + path + " at byte offset " +
                          std::to_string(at));
    }
};

void write_split(Writer &w, const Split &s) {
    w.put<std::uint64_t>(s.size());
    for (std::uint32_t l : s.labels) w.put(l);
    w.put_doubles(s.x_peri.values);
    w.put_doubles(s.x_face.values);
}

Split read_split(Reader &r, const GeneratorConfig &c) {
    Split s;
    std::uint64_t n = r.get<std::uint64_t>();
    s.labels.resize(n);
    for (auto &l : s.labels) l = r.get<std::uint32_t>();
    s.x_peri = Tensor(n, c.peri_dim);
    s.x_face = Tensor(n, c.face_dim);
    r.get_doubles(s.x_peri.values);
    r.get_doubles(s.x_face.values);
    return s;
}

}  // namespace

void save_dataset(const Dataset &ds, const std::string &path) {
    Writer w(path);
    w.f.write(kMagic, 4);
    w.put(kVersion);
    const GeneratorConfig &c = ds.config;
    for (std::uint64_t v : {c.num_train_ids, c.num_test_ids, c.samples_per_id,
                            c.latent_dim, c.kept_dims, c.face_dim, c.peri_dim,
                            c.nuisance_dim})
        w.put(v);
    for (double v : {c.intra_noise, c.nuisance_strength, c.obs_noise}) w.put(v);
    w.put<std::uint64_t>(c.seed);
    for (const Split *s : {&ds.train, &ds.validation, &ds.gallery, &ds.probe})
        write_split(w, *s);
    if (!w.f) throw IoError("write failure on " + path);
}

Dataset load_dataset(const std::string &path) {
    Reader r(path);
    char magic[4];
    r.f.read(magic, 4);
    if (!r.f || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("bad dataset magic in " + path + " at byte offset 0");
    std::uint32_t version = r.get<std::uint32_t>();
    if (version != kVersion)
        throw IoError("unsupported dataset version " + std::to_string(version));
    Dataset ds;
    GeneratorConfig &c = ds.config;
    c.num_train_ids = r.get<std::uint64_t>();
    c.num_test_ids = r.get<std::uint64_t>();
    c.samples_per_id = r.get<std::uint64_t>();
    c.latent_dim = r.get<std::uint64_t>();
    c.kept_dims = r.get<std::uint64_t>();
    c.face_dim = r.get<std::uint64_t>();
    c.peri_dim = r.get<std::uint64_t>();
    c.nuisance_dim = r.get<std::uint64_t>();
    c.intra_noise = r.get<double>();
    c.nuisance_strength = r.get<double>();
    c.obs_noise = r.get<double>();
    c.seed = r.get<std::uint64_t>();
    ds.train = read_split(r, c);
    ds.validation = read_split(r, c);
    ds.gallery = read_split(r, c);
    ds.probe = read_split(r, c);
    return ds;
}

}  // namespace ckd
