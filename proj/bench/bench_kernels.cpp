// Serial reference vs OpenMP kernels, and a serial vs threaded episode campaign.
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <random>

#include "awcol/campaign.hpp"
#include "awcol/kernels.hpp"

using namespace awcol;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(r, c);
    for (double& v : m.values()) v = n(rng);
    return m;
}

template <class F>
double seconds(F&& f, int reps) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) f();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
}

void row(const char* name, double serial, double parallel) {
    std::printf("%-28s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx\n", name, 1e3 * serial,
                1e3 * parallel, serial / parallel);
}

}  // namespace

int main() {
    std::printf("OpenMP max threads: %d\n", omp_get_max_threads());
    std::mt19937_64 rng(1);
    const Matrix x = random_matrix(2048, 256, rng);
    const Matrix w = random_matrix(256, 256, rng);
    const Matrix dy = random_matrix(2048, 256, rng);
    const Matrix c = random_matrix(64, 256, rng);
    const std::vector<double> bias(256, 0.1);
    const int reps = 5;

    row("affine 2048x256x256", seconds([&] { kernels::serial::affine(x, w, bias); }, reps),
        seconds([&] { kernels::affine(x, w, bias); }, reps));
    row("weight_grad", seconds([&] { kernels::serial::weight_grad(dy, x); }, reps),
        seconds([&] { kernels::weight_grad(dy, x); }, reps));
    row("input_grad", seconds([&] { kernels::serial::input_grad(dy, w); }, reps),
        seconds([&] { kernels::input_grad(dy, w); }, reps));
    row("sq_distances 2048x64", seconds([&] { kernels::serial::sq_distances(x, c); }, reps),
        seconds([&] { kernels::sq_distances(x, c); }, reps));

    RunConfig cfg;
    cfg.episodes = 32;
    cfg.finetune.total_iterations = 50;
    const auto dims = cfg.encoder_dims(cfg.input_dim);
    Checkpoint m1, m2;
    m1.model = make_proto_model(dims, 1, 1e-3, 1);
    m2.model = make_proto_model(dims, 2, 1e-3, 2);
    const double serial = seconds([&] { run_campaign(cfg, m1, m2, {}); }, 1);
    cfg.threads = static_cast<std::size_t>(omp_get_max_threads());
    const double parallel = seconds([&] { run_campaign(cfg, m1, m2, {}); }, 1);
    row("campaign 32 episodes", serial, parallel);
}
