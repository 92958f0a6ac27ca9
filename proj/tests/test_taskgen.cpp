#include <filesystem>
#include <fstream>
#include <random>

#include "awcol/awcol.hpp"
#include "awcol/errors.hpp"
#include "awcol/taskgen.hpp"
#include "doctest.h"

using namespace awcol;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "awcol_taskgen_tests";
    fs::create_directories(dir);
    return dir / name;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

std::string parse_error_of(const std::string& text) {
    const fs::path p = scratch("bad.txt");
    write_text(p, text);
    try {
        load_embeddings(p);
    } catch (const ParseError& e) {
        return e.what();
    }
    return "";
}

ProtoModel identity_model(std::size_t d) {
    ProtoModel m;
    m.encoder.layers.push_back({Matrix::identity(d), std::vector<double>(d, 0.0)});
    return m;
}

double frozen_accuracy(const ProtoModel& m, const DomainSpec& spec, int episodes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    double acc = 0.0;
    for (int e = 0; e < episodes; ++e) {
        const Episode ep = sample_episode(spec, 5, 5, 15, rng);
        acc += evaluate(predict_task(m, ep.task), ep.query_labels);
    }
    return acc / episodes;
}

}  // namespace

TEST_CASE("severity zero leaves the target untransformed") {
    const ShiftPair p = make_shift_pair(1, 10, 6, 5, 0.0);
    CHECK(p.target.rotation == Matrix::identity(5));
    for (double t : p.target.translation) CHECK(t == 0.0);
    CHECK(p.target.scale == 1.0);
    std::mt19937_64 rng(2);
    const Matrix x(3, 5, 1.5);
    CHECK(p.target.transform(x) == x);
}

TEST_CASE("shift pairs are deterministic, orthonormal and separated") {
    const ShiftOptions opts{.radius = 5.0, .min_separation = 3.0, .noise_scale = 1.0, .max_translation = 7.0};
    const ShiftPair a = make_shift_pair(7, 12, 8, 6, 0.8, opts);
    const ShiftPair b = make_shift_pair(7, 12, 8, 6, 0.8, opts);
    CHECK(a.source == b.source);
    CHECK(a.target == b.target);
    CHECK(orthonormality_error(a.target.rotation) < 1e-12);
    double tnorm = 0.0;
    for (double t : a.target.translation) tnorm += t * t;
    CHECK(std::sqrt(tnorm) == doctest::Approx(0.8 * 7.0).epsilon(1e-12));

    std::vector<std::span<const double>> all;
    for (std::size_t c = 0; c < 12; ++c) all.push_back(a.source.centers.row(c));
    for (std::size_t c = 0; c < 8; ++c) all.push_back(a.target.centers.row(c));
    for (std::size_t i = 0; i < all.size(); ++i)
        for (std::size_t j = i + 1; j < all.size(); ++j) {
            double d = 0.0;
            for (std::size_t k = 0; k < 6; ++k) d += (all[i][k] - all[j][k]) * (all[i][k] - all[j][k]);
            CHECK(std::sqrt(d) >= 3.0);
        }

    CHECK_FALSE(make_shift_pair(8, 12, 8, 6, 0.8, opts).target == a.target);
    CHECK_THROWS_AS(make_shift_pair(1, 10, 6, 5, 1.5), ConfigError);
    CHECK_THROWS_AS(make_shift_pair(1, 200, 200, 2, 0.5, {.radius = 1.0, .min_separation = 1.5}), ConfigError);
}

TEST_CASE("episodes have the requested shape and grouped labels") {
    const ShiftPair p = make_shift_pair(3, 10, 6, 4, 0.5);
    std::mt19937_64 rng(4);
    const Episode ep = sample_episode(p.target, 5, 3, 4, rng);
    CHECK_NOTHROW(ep.validate());
    CHECK(ep.task.support.rows() == 15);
    CHECK(ep.task.query.rows() == 20);
    CHECK(ep.task.support_labels[3] == 1);
    CHECK(ep.query_labels[19] == 4);

    std::mt19937_64 r1(9), r2(9);
    CHECK(sample_episode(p.target, 5, 3, 4, r1).task.query == sample_episode(p.target, 5, 3, 4, r2).task.query);
    CHECK_THROWS_AS(sample_episode(p.target, 7, 3, 4, rng), ConfigError);
}

TEST_CASE("embedding files round-trip exactly") {
    const ShiftPair p = make_shift_pair(5, 6, 5, 3, 0.3);
    std::mt19937_64 rng(6);
    const EmbeddingDataset ds = materialize(p.target, 4, rng, "target");
    const fs::path path = scratch("round.txt");
    save_embeddings(path, ds);
    const EmbeddingDataset back = load_embeddings(path);
    CHECK(back == ds);
    CHECK(back.by_class[2].size() == 4);

    EmbeddingDataset tiny;
    tiny.dim = 1;
    tiny.n_classes = 1;
    tiny.features = Matrix(1, 1, std::vector<double>{0.1});
    tiny.labels = {0};
    save_embeddings(path, tiny);
    std::ifstream in(path);
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "dim=1 classes=1");
    CHECK(row == "0,0.1");
}

TEST_CASE("malformed embedding files name the offending line") {
    CHECK(parse_error_of("").find(":1:") != std::string::npos);
    CHECK(parse_error_of("dims=2 classes=2\n0,1,2\n").find(":1:") != std::string::npos);
    CHECK(parse_error_of("dim=2 classes=2\n0,1,2\n1,1\n").find(":3:") != std::string::npos);
    CHECK(parse_error_of("dim=2 classes=2\n0,1,x\n").find(":2:") != std::string::npos);
    CHECK(parse_error_of("dim=2 classes=2\n5,1,2\n").find("out of range") != std::string::npos);
    CHECK(parse_error_of("dim=2 classes=2\n").find("no instances") != std::string::npos);
    CHECK_THROWS_AS(load_embeddings(scratch("does_not_exist.txt")), IoError);
}

TEST_CASE("file episodes need k_shot + queries items per class") {
    EmbeddingDataset ds;
    ds.dim = 2;
    ds.n_classes = 2;
    std::vector<double> v;
    for (std::size_t c = 0; c < 2; ++c)
        for (int i = 0; i < 5; ++i) {
            ds.labels.push_back(c);
            v.push_back(double(c));
            v.push_back(double(i));
        }
    ds.features = Matrix(10, 2, v);
    ds.rebuild_index();
    std::mt19937_64 rng(1);
    CHECK_NOTHROW(sample_episode(ds, 2, 2, 3, rng));
    CHECK_THROWS_AS(sample_episode(ds, 2, 2, 4, rng), ConfigError);
    CHECK_THROWS_AS(sample_episode(ds, 3, 1, 1, rng), ConfigError);

    const Episode ep = sample_episode(ds, 2, 2, 3, rng);
    // feature 0 encodes the source class, so rows sharing a label share it
    for (std::size_t i = 0; i < ep.query_labels.size(); ++i)
        CHECK((ep.task.query(i, 0) == ep.task.query(0, 0)) == (ep.query_labels[i] == ep.query_labels[0]));
    for (std::size_t i = 0; i < ep.task.support_labels.size(); ++i)
        CHECK((ep.task.support(i, 0) == ep.task.query(0, 0)) == (ep.task.support_labels[i] == ep.query_labels[0]));
}

TEST_CASE("well-separated domains are nearly solvable on raw features") {
    const ShiftPair p = make_shift_pair(11, 10, 10, 16, 0.0, {.radius = 5.0, .min_separation = 4.0});
    CHECK(frozen_accuracy(identity_model(16), p.target, 20, 1) > 0.99);
}

TEST_CASE("stronger shift hurts a frozen nonlinear encoder") {
    const std::vector<std::size_t> dims{8, 16, 8};
    const ProtoModel m = make_proto_model(dims, 3, 1e-3, 1);
    const ShiftOptions opts{.radius = 5.0, .min_separation = 3.0, .noise_scale = 1.0, .max_translation = 40.0};
    const double mild = frozen_accuracy(m, make_shift_pair(12, 10, 10, 8, 0.0, opts).target, 40, 2);
    const double severe = frozen_accuracy(m, make_shift_pair(12, 10, 10, 8, 1.0, opts).target, 40, 2);
    CHECK(severe < mild);
}
