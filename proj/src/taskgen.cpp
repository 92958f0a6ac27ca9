#include "awcol/taskgen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "awcol/errors.hpp"

namespace awcol {
namespace {

std::vector<double> random_unit(std::size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<double> v(dim);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (double& x : v) {
            x = n01(rng);
            norm += x * x;
        }
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

double distance(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc);
}

// Left-multiplies r by the rotation of angle theta in the (i, j) plane.
void apply_givens(Matrix& r, std::size_t i, std::size_t j, double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    for (std::size_t k = 0; k < r.cols(); ++k) {
        const double a = r(i, k), b = r(j, k);
        r(i, k) = c * a - s * b;
        r(j, k) = s * a + c * b;
    }
}

DomainSpec identity_domain(std::size_t dim, double noise) {
    DomainSpec d;
    d.input_dim = dim;
    d.noise_scale = noise;
    d.rotation = Matrix::identity(dim);
    d.translation.assign(dim, 0.0);
    d.scale = 1.0;
    return d;
}

std::vector<std::size_t> choose_classes(std::size_t available, std::size_t n_way, std::mt19937_64& rng) {
    if (n_way > available) {
        throw ConfigError("episode asks for " + std::to_string(n_way) + " classes, only " +
                          std::to_string(available) + " available");
    }
    std::vector<std::size_t> idx(available);
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher-Yates keeps draws independent of std::shuffle's implementation.
    for (std::size_t i = 0; i < n_way; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, available - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(n_way);
    return idx;
}

}  // namespace

void DomainSpec::validate() const {
    if (n_classes == 0 || input_dim == 0) throw ConfigError("domain: empty class set or dimension");
    if (centers.rows() != n_classes || centers.cols() != input_dim) throw ShapeError("domain: centers shape");
    if (rotation.rows() != input_dim || rotation.cols() != input_dim) throw ShapeError("domain: rotation shape");
    if (translation.size() != input_dim) throw ShapeError("domain: translation length");
    if (!(noise_scale > 0.0)) throw ConfigError("domain: noise scale must be positive");
    if (orthonormality_error(rotation) > 1e-9) throw ConfigError("domain: rotation is not orthonormal");
}

Matrix DomainSpec::transform(const Matrix& points) const {
    if (points.cols() != input_dim) throw ShapeError("domain transform: dimension mismatch");
    Matrix out(points.rows(), input_dim);
    for (std::size_t b = 0; b < points.rows(); ++b) {
        for (std::size_t i = 0; i < input_dim; ++i) {
            double acc = 0.0;
            for (std::size_t k = 0; k < input_dim; ++k) acc += rotation(i, k) * points(b, k);
            out(b, i) = scale * acc + translation[i];
        }
    }
    return out;
}

double orthonormality_error(const Matrix& r) {
    double worst = 0.0;
    for (std::size_t i = 0; i < r.cols(); ++i) {
        for (std::size_t j = 0; j < r.cols(); ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < r.rows(); ++k) dot += r(k, i) * r(k, j);
            worst = std::max(worst, std::abs(dot - (i == j ? 1.0 : 0.0)));
        }
    }
    return worst;
}

ShiftPair make_shift_pair(std::uint64_t seed, std::size_t n_source_classes, std::size_t n_target_classes,
                          std::size_t input_dim, double severity, const ShiftOptions& opts) {
    if (n_source_classes < 5 || n_target_classes < 5) throw ConfigError("shift pair: need >= 5 classes per domain");
    if (input_dim < 2) throw ConfigError("shift pair: input_dim must be >= 2");
    if (!(severity >= 0.0 && severity <= 1.0)) throw ConfigError("shift pair: severity must lie in [0, 1]");
    if (!(opts.noise_scale > 0.0) || !(opts.radius > 0.0)) throw ConfigError("shift pair: radius and noise must be positive");

    std::mt19937_64 rng(seed);
    const std::size_t total = n_source_classes + n_target_classes;
    Matrix centers(total, input_dim);
    constexpr int kMaxAttempts = 100000;
    for (std::size_t c = 0; c < total; ++c) {
        for (int attempt = 0;; ++attempt) {
            if (attempt == kMaxAttempts) {
                throw ConfigError("shift pair: cannot place " + std::to_string(total) +
                                  " centers with the requested separation");
            }
            auto u = random_unit(input_dim, rng);
            for (double& x : u) x *= opts.radius;
            bool ok = true;
            for (std::size_t p = 0; p < c && ok; ++p) ok = distance(u, centers.row(p)) >= opts.min_separation;
            if (ok) {
                std::copy(u.begin(), u.end(), centers.row(c).begin());
                break;
            }
        }
    }

    ShiftPair pair;
    pair.source = identity_domain(input_dim, opts.noise_scale);
    pair.source.n_classes = n_source_classes;
    pair.source.centers = Matrix(n_source_classes, input_dim);
    pair.target = identity_domain(input_dim, opts.noise_scale);
    pair.target.n_classes = n_target_classes;
    pair.target.centers = Matrix(n_target_classes, input_dim);
    for (std::size_t c = 0; c < total; ++c) {
        auto dst = c < n_source_classes ? pair.source.centers.row(c)
                                        : pair.target.centers.row(c - n_source_classes);
        std::copy_n(centers.row(c).begin(), input_dim, dst.begin());
    }

    // Target rotation: a Givens rotation in every coordinate plane, visited in a
    // random order, with random angles scaled by severity.
    std::vector<std::pair<std::size_t, std::size_t>> planes;
    for (std::size_t i = 0; i < input_dim; ++i)
        for (std::size_t j = i + 1; j < input_dim; ++j) planes.emplace_back(i, j);
    for (std::size_t i = planes.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(planes[i - 1], planes[pick(rng)]);
    }
    std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
    for (auto [i, j] : planes) {
        const double theta = severity * angle(rng);
        if (theta != 0.0) apply_givens(pair.target.rotation, i, j, theta);
    }
    const auto dir = random_unit(input_dim, rng);
    for (std::size_t i = 0; i < input_dim; ++i) pair.target.translation[i] = severity * opts.max_translation * dir[i];
    pair.target.scale = 1.0 + severity * opts.max_scale_change;
    pair.source.validate();
    pair.target.validate();
    return pair;
}

Episode sample_episode(const DomainSpec& spec, std::size_t n_way, std::size_t k_shot,
                       std::size_t queries_per_class, std::mt19937_64& rng) {
    if (n_way == 0 || k_shot == 0 || queries_per_class == 0) throw ConfigError("episode shape must be positive");
    const auto classes = choose_classes(spec.n_classes, n_way, rng);
    std::normal_distribution<double> noise(0.0, spec.noise_scale);
    const std::size_t d = spec.input_dim;
    Matrix support(n_way * k_shot, d), query(n_way * queries_per_class, d);
    Episode ep;
    ep.task.n_way = n_way;
    ep.task.k_shot = k_shot;
    for (std::size_t label = 0; label < n_way; ++label) {
        auto center = spec.centers.row(classes[label]);
        for (std::size_t s = 0; s < k_shot + queries_per_class; ++s) {
            const bool is_support = s < k_shot;
            auto dst = is_support ? support.row(label * k_shot + s)
                                  : query.row(label * queries_per_class + (s - k_shot));
            for (std::size_t i = 0; i < d; ++i) dst[i] = center[i] + noise(rng);
            (is_support ? ep.task.support_labels : ep.query_labels).push_back(label);
        }
    }
    ep.task.support = spec.transform(support);
    ep.task.query = spec.transform(query);
    return ep;
}

void EmbeddingDataset::rebuild_index() {
    by_class.assign(n_classes, {});
    for (std::size_t i = 0; i < labels.size(); ++i) by_class.at(labels[i]).push_back(i);
}

void EmbeddingDataset::check_episode_shape(std::size_t n_way, std::size_t k_shot,
                                           std::size_t queries_per_class) const {
    if (n_way > n_classes) {
        throw ConfigError("dataset has " + std::to_string(n_classes) + " classes, episode needs " +
                          std::to_string(n_way));
    }
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        if (by_class[c].size() < k_shot + queries_per_class) {
            throw ConfigError("dataset class " + std::to_string(c) + " has " + std::to_string(by_class[c].size()) +
                              " items, episode needs " + std::to_string(k_shot + queries_per_class));
        }
    }
}

std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) throw NumericError("format_double failed");
    return std::string(buf, end);
}

EmbeddingDataset load_embeddings(const std::filesystem::path& path, const EmbeddingFormat& format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open embedding file " + path.string());
    const std::string where = path.string() + ":";
    std::string line;
    if (!std::getline(in, line)) throw ParseError(where + "1: empty file, expected header `dim=<d> classes=<c>`");

    EmbeddingDataset ds;
    ds.source_tag = path.filename().string();
    {
        std::istringstream hs(line);
        std::string a, b, extra;
        hs >> a >> b;
        if (a.rfind("dim=", 0) != 0 || b.rfind("classes=", 0) != 0 || (hs >> extra)) {
            throw ParseError(where + "1: malformed header `" + line + "`");
        }
        try {
            std::size_t pos = 0;
            ds.dim = std::stoull(a.substr(4), &pos);
            if (pos != a.size() - 4) throw std::invalid_argument("dim");
            ds.n_classes = std::stoull(b.substr(8), &pos);
            if (pos != b.size() - 8) throw std::invalid_argument("classes");
        } catch (const std::exception&) {
            throw ParseError(where + "1: malformed header `" + line + "`");
        }
        if (ds.dim == 0 || ds.n_classes == 0) throw ParseError(where + "1: dim and classes must be positive");
    }

    std::vector<double> values;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string at = where + std::to_string(line_no) + ": ";
        const char* p = line.data();
        const char* end = line.data() + line.size();
        std::size_t cls = 0;
        auto r = std::from_chars(p, end, cls);
        if (r.ec != std::errc() || r.ptr == end || *r.ptr != format.delimiter) {
            throw ParseError(at + "expected `class_id" + format.delimiter + "v1...`");
        }
        if (cls >= ds.n_classes) throw ParseError(at + "class id " + std::to_string(cls) + " out of range");
        p = r.ptr + 1;
        std::size_t fields = 0;
        while (true) {
            double v = 0.0;
            auto rv = std::from_chars(p, end, v);
            if (rv.ec != std::errc()) throw ParseError(at + "bad number in field " + std::to_string(fields + 1));
            if (!std::isfinite(v)) throw ParseError(at + "non-finite value");
            values.push_back(v);
            ++fields;
            p = rv.ptr;
            if (p == end) break;
            if (*p != format.delimiter) throw ParseError(at + "unexpected character after field " + std::to_string(fields));
            ++p;
        }
        if (fields != ds.dim) {
            throw ParseError(at + "expected " + std::to_string(ds.dim) + " values, found " + std::to_string(fields));
        }
        ds.labels.push_back(cls);
    }
    if (ds.labels.empty()) throw ParseError(where + "no instances after header");
    ds.features = Matrix(ds.labels.size(), ds.dim, std::move(values));
    ds.rebuild_index();
    return ds;
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingDataset& data,
                     const EmbeddingFormat& format) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write embedding file " + path.string());
    out << "dim=" << data.dim << " classes=" << data.n_classes << '\n';
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
        out << data.labels[i];
        for (double v : data.features.row(i)) out << format.delimiter << format_double(v);
        out << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

EmbeddingDataset materialize(const DomainSpec& spec, std::size_t per_class, std::mt19937_64& rng,
                             std::string source_tag) {
    spec.validate();
    std::normal_distribution<double> noise(0.0, spec.noise_scale);
    Matrix raw(spec.n_classes * per_class, spec.input_dim);
    EmbeddingDataset ds;
    ds.dim = spec.input_dim;
    ds.n_classes = spec.n_classes;
    ds.source_tag = std::move(source_tag);
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        for (std::size_t s = 0; s < per_class; ++s) {
            auto dst = raw.row(c * per_class + s);
            for (std::size_t i = 0; i < spec.input_dim; ++i) dst[i] = spec.centers(c, i) + noise(rng);
            ds.labels.push_back(c);
        }
    }
    ds.features = spec.transform(raw);
    ds.rebuild_index();
    return ds;
}

Episode sample_episode(const EmbeddingDataset& data, std::size_t n_way, std::size_t k_shot,
                       std::size_t queries_per_class, std::mt19937_64& rng) {
    if (n_way == 0 || k_shot == 0 || queries_per_class == 0) throw ConfigError("episode shape must be positive");
    data.check_episode_shape(n_way, k_shot, queries_per_class);
    const auto classes = choose_classes(data.n_classes, n_way, rng);
    std::vector<std::size_t> support_rows, query_rows;
    Episode ep;
    ep.task.n_way = n_way;
    ep.task.k_shot = k_shot;
    for (std::size_t label = 0; label < n_way; ++label) {
        const auto& items = data.by_class[classes[label]];
        std::vector<std::size_t> pool(items.begin(), items.end());
        const std::size_t need = k_shot + queries_per_class;
        for (std::size_t i = 0; i < need; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
            std::swap(pool[i], pool[pick(rng)]);
        }
        for (std::size_t i = 0; i < k_shot; ++i) {
            support_rows.push_back(pool[i]);
            ep.task.support_labels.push_back(label);
        }
        for (std::size_t i = k_shot; i < need; ++i) {
            query_rows.push_back(pool[i]);
            ep.query_labels.push_back(label);
        }
    }
    ep.task.support = gather_rows(data.features, support_rows);
    ep.task.query = gather_rows(data.features, query_rows);
    return ep;
}

}  // namespace awcol
