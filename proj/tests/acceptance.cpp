// Acceptance suite: one PASS/FAIL line per criterion; exits 1 if any fails.
#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "awcol/campaign.hpp"
#include "oracles.hpp"

using namespace awcol;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Verdict()>& body) {
    Verdict v;
    const auto t0 = Clock::now();
    try {
        v = body();
    } catch (const std::exception& e) {
        v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::printf("[%s] %d %s: %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str(), since(t0));
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path work_dir() {
    const fs::path d = fs::temp_directory_path() / "awcol_acceptance";
    fs::create_directories(d);
    return d;
}

// ---------------------------------------------------------------------------

Verdict gradient_suite() {
    const auto t0 = Clock::now();
    double worst_ce = 0.0, worst_total = 0.0;
    const int seeds = 10;
    for (int seed = 0; seed < seeds; ++seed) {
        std::mt19937_64 rng(1000 + seed);
        const std::vector<std::size_t> dims{6, 10, 10, 5};
        const ProtoModel m1 = make_proto_model(dims, 2 * seed + 1, 1e-3, 1);
        const ProtoModel m2 = make_proto_model(dims, 2 * seed + 2, 1e-3, 2);
        const Task task = fixture::random_task(3, 2, 6, 6, rng);
        std::vector<std::size_t> labels;
        for (std::size_t i = 0; i < 6; ++i) labels.push_back(i % 3);

        // mean query cross-entropy against the true labels
        auto ce = [&](const EncoderParams& e) {
            const HeadForward f = head_forward(e, task);
            const std::vector<double> c(6, 1.0 / 6.0);
            return weighted_ce(f.query_probs(), labels, c).value;
        };
        const HeadForward f = head_forward(m1.encoder, task);
        const std::vector<double> c(6, 1.0 / 6.0);
        const WeightedCe w = weighted_ce(f.query_probs(), labels, c);
        Matrix d(f.probs.rows(), f.probs.cols());
        for (std::size_t b = 0; b < 6; ++b)
            for (std::size_t j = 0; j < 3; ++j) d(f.n_support + b, j) = w.d_logits(b, j);
        const Gradients g_ce = head_backward(m1.encoder, f, d);
        worst_ce = std::max(worst_ce, max_relative_error(g_ce, finite_diff_gradient(ce, m1.encoder, 1e-5)));

        // co-learning total loss on pseudo-labels from both models
        const PseudoBatch batch = make_pseudo_batch(co_predict(predict_task(m1, task), predict_task(m2, task)), rng);
        const LossTerms terms{.co = true, .neg = true, .support = false, .lambda = 1e-2};
        const AdaptationLoss a = adaptation_loss(m1.encoder, task, batch, terms);
        const Gradients num = finite_diff_gradient(
            [&](const EncoderParams& e) { return adaptation_loss(e, task, batch, terms).total; }, m1.encoder, 1e-5);
        worst_total = std::max(worst_total, max_relative_error(a.grads, num));
    }
    const double secs = since(t0);
    const bool ok = worst_ce < 1e-5 && worst_total < 1e-5 && secs < 30.0;
    return {ok, fmt("%d seeds, max rel err query CE %.2e, total loss %.2e (< 1e-5), %.2f s (< 30 s)", seeds, worst_ce,
                    worst_total, secs)};
}

struct Bench {
    RunConfig cfg;
    Checkpoint m1, m2;
    double pretrain_seconds = 0.0;
};

Bench pretrained_benchmark() {
    Bench b;
    b.cfg.episodes = 100;
    b.cfg.output_dir = (work_dir() / "pretrain").string();
    const auto t0 = Clock::now();
    const PretrainOutcome out = run_pretrain(b.cfg);
    std::printf("       pretraining %zu x %zu tasks per model: %.1f s, held-out source accuracy %.3f / %.3f\n",
                b.cfg.pretrain_iterations, b.cfg.pretrain_tasks, since(t0), out.source_accuracy1,
                out.source_accuracy2);
    b.pretrain_seconds = since(t0);
    b.m1 = out.model1;
    b.m2 = out.model2;
    return b;
}

bool simplex_row_ok(std::span<const double> row) {
    double s = 0.0;
    for (double v : row) {
        if (!(v >= 0.0)) return false;
        s += v;
    }
    return std::abs(s - 1.0) <= 1e-9;
}

std::size_t simplex_violations(const Matrix& m) {
    std::size_t bad = 0;
    for (std::size_t r = 0; r < m.rows(); ++r) bad += simplex_row_ok(m.row(r)) ? 0 : 1;
    return bad;
}

Verdict simplex_suite(const Bench& b) {
    const EpisodeSampler sampler = target_sampler(b.cfg);
    std::size_t rows = 0, bad = 0;
    for (int e = 0; e < 20; ++e) {
        std::mt19937_64 rng(500 + e);
        const Episode ep = sampler(rng);
        FinetuneConfig fc = b.cfg.finetune;
        fc.seed = e;
        const FinetuneResult r = finetune(b.m1.model, b.m2.model, ep.task, fc, [&](const IterationView& v) {
            for (const Matrix* m : {&v.wma1.probs, &v.wma2.probs, &v.batches[0].co_probs}) {
                rows += m->rows();
                bad += simplex_violations(*m);
            }
        });
        rows += r.co_probs.rows();
        bad += simplex_violations(r.co_probs);
    }
    return {bad == 0, fmt("20 episodes x 100 iterations, %zu rows checked, %zu violations", rows, bad)};
}

Verdict schedule_suite(const Bench& b) {
    const EpisodeSampler sampler = target_sampler(b.cfg);
    std::mt19937_64 rng(77);
    const Episode ep = sampler(rng);
    const AnnealSchedule sch;

    std::vector<double> expected{sch.alpha0};
    while (expected.size() < 200) expected.push_back(std::max(sch.alpha_min, sch.gamma * expected.back()));
    std::size_t clamp_at = 0;
    while (expected[clamp_at] != sch.alpha_min) ++clamp_at;
    double closed_form_gap = 0.0;
    for (std::size_t t = 0; t < 200; ++t)
        closed_form_gap = std::max(closed_form_gap,
                                   std::abs(expected[t] - std::max(0.1, 0.5 * std::pow(0.99, double(t)))));

    // Alternating: each model anneals once per update, so 400 iterations give 200 updates each.
    // Simultaneous: both models update every iteration.
    std::size_t mismatches = 0;
    for (bool simultaneous : {false, true}) {
        FinetuneConfig fc = b.cfg.finetune;
        fc.total_iterations = simultaneous ? 200 : 400;
        fc.ablation.simultaneous_update = simultaneous;
        const FinetuneResult r = finetune(b.m1.model, b.m2.model, ep.task, fc);
        for (int m = 0; m < 2; ++m) {
            std::vector<double> trace;
            for (const auto& rec : r.trace)
                if (rec.updated[m]) trace.push_back(rec.alpha[m]);
            if (trace.size() != expected.size()) {
                ++mismatches;
                continue;
            }
            for (std::size_t t = 0; t < trace.size(); ++t) mismatches += trace[t] == expected[t] ? 0 : 1;
        }
    }
    const bool ok = mismatches == 0 && clamp_at == 161 && closed_form_gap < 1e-15;
    return {ok, fmt("200-step alpha traces of both models (alternating and simultaneous), %zu bit mismatches; "
                    "first clamp at step %zu; |recurrence - 0.5*0.99^t| <= %.1e",
                    mismatches, clamp_at, closed_form_gap)};
}

Verdict anchoring_suite(const Bench& b) {
    const EpisodeSampler sampler = target_sampler(b.cfg);
    std::size_t checked = 0, changed = 0, moved_active = 0, active_checks = 0;
    for (int e = 0; e < 5; ++e) {
        std::mt19937_64 rng(900 + e);
        const Episode ep = sampler(rng);
        FinetuneConfig fc = b.cfg.finetune;
        fc.beta = 5;
        fc.total_iterations = 100;
        fc.seed = e;
        Matrix prev[2];
        finetune(b.m1.model, b.m2.model, ep.task, fc, [&](const IterationView& v) {
            const Matrix* now[2] = {&v.wma1.probs, &v.wma2.probs};
            if (v.record.iteration >= fc.beta) {
                for (int m = 0; m < 2; ++m) {
                    if (v.record.updated[m]) {
                        ++active_checks;
                        moved_active += *now[m] == prev[m] ? 0 : 1;
                    } else {
                        ++checked;
                        changed += *now[m] == prev[m] ? 0 : 1;
                    }
                }
            }
            prev[0] = *now[0];
            prev[1] = *now[1];
        });
    }
    return {changed == 0 && checked > 0,
            fmt("beta 5, 100 iterations x 5 episodes: fixed WMA changed in %zu of %zu iterations "
                "(active WMA moved in %zu of %zu)",
                changed, checked, moved_active, active_checks)};
}

Verdict oracle_suite() {
    std::mt19937_64 rng(4242);
    double worst[8] = {};
    std::size_t label_mismatch = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::uniform_int_distribution<std::size_t> way(2, 5), shot(1, 3), nq(1, 8), dim(2, 6);
        const std::size_t n = way(rng), k = shot(rng), q = nq(rng), d = dim(rng);
        const Task t = fixture::random_task(n, k, q, d, rng);
        const std::vector<std::size_t> dims{d, 7, 4};
        const ProtoModel m = make_proto_model(dims, 10 + trial, 1e-3, 1);

        const oracle::Mat es = oracle::encoder(m.encoder, oracle::to_mat(t.support));
        const oracle::Mat eq = oracle::encoder(m.encoder, oracle::to_mat(t.query));
        const oracle::Mat protos = oracle::prototypes(es, t.support_labels, n);
        const oracle::Mat probs = oracle::proto_probs(eq, protos);
        const Prototypes p = compute_prototypes(m, t);
        const Matrix lib_probs = predict_probs(m, p, t.query);
        worst[0] = std::max(worst[0], oracle::max_abs_diff(protos, p.vectors));
        worst[1] = std::max(worst[1], oracle::max_abs_diff(probs, lib_probs));

        std::vector<std::size_t> y(q);
        std::uniform_int_distribution<std::size_t> lab(0, n - 1);
        for (auto& v : y) v = lab(rng);
        worst[2] = std::max(worst[2], std::abs(ce_loss(lib_probs, y).sum - oracle::ce_sum(probs, y)));

        Matrix w1 = fixture::random_simplex_rows(q, n, rng);
        const Matrix w2 = fixture::random_simplex_rows(q, n, rng);
        if (trial % 4 == 0) {
            // exact ties in the first row exercise lowest-index tie breaking
            for (std::size_t j = 0; j < n; ++j) w1(0, j) = w2(0, j);
        }
        const oracle::Mat co = oracle::co_predict(oracle::to_mat(w1), oracle::to_mat(w2));
        const Matrix lib_co = co_predict(w1, w2);
        worst[3] = std::max(worst[3], oracle::max_abs_diff(co, lib_co));

        const PseudoBatch batch = make_pseudo_batch(lib_co, rng);
        for (std::size_t b = 0; b < q; ++b) {
            label_mismatch += batch.positive[b] == oracle::argmax(co[b]) ? 0 : 1;
            worst[5] = std::max(worst[5], std::abs(batch.weight[b] - oracle::max_entry(co[b])));
        }
        worst[4] = double(label_mismatch);
        worst[6] = std::max(worst[6], std::abs(weighted_co_loss(m, t, batch).value -
                                               oracle::weighted_ce(probs, batch.positive, batch.weight)));
        worst[7] = std::max(worst[7], std::abs(negative_loss(m, t, batch) -
                                               oracle::weighted_ce(probs, batch.negative, batch.weight)));
    }
    bool ok = label_mismatch == 0;
    for (int i : {0, 1, 2, 3, 5, 6, 7}) ok = ok && worst[i] <= 1e-12;
    return {ok, fmt("100 random inputs; max |diff|: prototypes %.1e, probabilities %.1e, query CE %.1e, "
                    "co-prediction %.1e, positive labels %zu mismatches, weights %.1e, co loss %.1e, "
                    "negative loss %.1e (<= 1e-12)",
                    worst[0], worst[1], worst[2], worst[3], label_mismatch, worst[5], worst[6], worst[7])};
}

struct Campaigns {
    CampaignReport frozen;  // zero fine-tuning iterations
    AblationTable table;
    double full_seconds = 0.0;
};

Verdict behavioral(const Bench& b, Campaigns& c) {
    RunConfig frozen_cfg = b.cfg;
    frozen_cfg.finetune.total_iterations = 0;
    c.frozen = run_campaign(frozen_cfg, b.m1, b.m2, {}, "frozen");

    RunConfig cfg = b.cfg;
    cfg.output_dir = (work_dir() / "ablation").string();
    fs::remove_all(cfg.output_dir);
    c.table = run_ablation_sweep(cfg, b.m1, b.m2);
    const CampaignReport& full = c.table.reports.front();
    c.full_seconds = full.wall_seconds;

    // Per-episode paired margin over the frozen single-model baseline.
    std::vector<double> margin, margin_ens;
    std::size_t wins = 0, losses = 0;
    for (std::size_t i = 0; i < full.episodes.size() && i < c.frozen.episodes.size(); ++i) {
        const double d = full.episodes[i].acc_co - c.frozen.episodes[i].acc_m1;
        margin.push_back(d);
        margin_ens.push_back(full.episodes[i].acc_co - c.frozen.episodes[i].acc_co);
        wins += d > 0;
        losses += d < 0;
    }
    const Summary m = summarize(margin);
    const Summary me = summarize(margin_ens);
    const bool complete = full.episodes.size() == 100 && c.frozen.episodes.size() == 100;
    const double budget = b.pretrain_seconds + full.wall_seconds;
    const bool ok = complete && m.mean >= 0.05 && m.mean - m.ci95 > 0.0 && budget < 600.0;
    return {ok, fmt("E=%zu: AWCoL %.2f%% vs frozen ProtoNet %.2f%%, margin %+.2f +- %.2f points (need >= 5, CI "
                    "excluding 0), wins/losses %zu/%zu; vs frozen two-model ensemble %.2f%% margin %+.2f +- %.2f; "
                    "pretraining + campaign %.1f s single-threaded (< 600 s)",
                    full.episodes.size(), 100 * full.co.mean, 100 * c.frozen.m1.mean, 100 * m.mean, 100 * m.ci95,
                    wins, losses, 100 * c.frozen.co.mean, 100 * me.mean, 100 * me.ci95, budget)};
}

Verdict ablation_direction(const Campaigns& c) {
    const CampaignReport& full = c.table.reports.front();
    std::string lines;
    bool ok = c.table.reports.size() == 8;
    for (const auto& cmp : c.table.comparisons) {
        double mean = 0.0;
        for (const auto& r : c.table.reports)
            if (r.variant == cmp.variant) mean = r.co.mean;
        const bool required = cmp.variant == "no_colearn" || cmp.variant == "no_co_loss" || cmp.variant == "no_wma";
        if (required && full.co.mean < mean) ok = false;
        lines += fmt("\n       %-18s %6.2f%%  full-variant %+6.2f +- %5.2f  wins/losses/ties %zu/%zu/%zu%s",
                     cmp.variant.c_str(), 100 * mean, 100 * cmp.difference.mean, 100 * cmp.difference.ci95,
                     cmp.wins, cmp.losses, cmp.ties, required ? (full.co.mean >= mean ? "  ok" : "  VIOLATED") : "");
    }
    return {ok, fmt("full %.2f%% must be >= no_colearn, no_co_loss, no_wma", 100 * full.co.mean) + lines};
}

Verdict determinism(const Bench& b) {
    RunConfig cfg = b.cfg;
    cfg.episodes = 40;
    const fs::path a = work_dir() / "det_a", bb = work_dir() / "det_b", p = work_dir() / "det_parallel";
    for (const auto& d : {a, bb, p}) fs::remove_all(d);
    run_campaign(cfg, b.m1, b.m2, a);
    run_campaign(cfg, b.m1, b.m2, bb);
    cfg.threads = 4;
    run_campaign(cfg, b.m1, b.m2, p);
    const bool same_csv = slurp(a / "episodes.csv") == slurp(bb / "episodes.csv");
    const bool same_parallel = slurp(a / "episodes.csv") == slurp(p / "episodes.csv") &&
                               slurp(a / "report.txt") == slurp(p / "report.txt");
    const bool nonempty = slurp(a / "episodes.csv").size() > 40;
    return {same_csv && same_parallel && nonempty,
            fmt("40 episodes: repeated serial runs byte-identical episodes.csv: %s; 4-thread vs serial "
                "episodes.csv and report.txt identical: %s",
                same_csv ? "yes" : "no", same_parallel ? "yes" : "no")};
}

Verdict chance_level(const Bench& b) {
    RunConfig cfg = b.cfg;
    cfg.episodes = 600;
    auto constant = [&](int id, double offset) {
        Checkpoint c;
        c.model.model_id = id;
        std::vector<double> bias(cfg.embed_dim);
        for (std::size_t i = 0; i < bias.size(); ++i) bias[i] = offset + 0.1 * double(i);
        c.model.encoder.layers.push_back({Matrix(cfg.embed_dim, cfg.input_dim, 0.0), bias});
        c.model.adam = make_adam(c.model.encoder);
        return c;
    };
    const CampaignReport r = run_campaign(cfg, constant(1, 0.5), constant(2, -1.0), {}, "constant");
    const double n = double(cfg.n_way);
    const double p = 1.0 / n;
    const double trials = double(r.episodes.size() * cfg.n_way * cfg.queries_per_class);
    const double sigma = std::sqrt(p * (1.0 - p) / trials);
    const bool ok = r.episodes.size() == 600 && std::abs(r.co.mean - p) <= 3.0 * sigma;
    return {ok, fmt("E=%zu constant encoders: accuracy %.4f vs 1/N = %.4f, 3 sigma = %.4f", r.episodes.size(),
                    r.co.mean, p, 3.0 * sigma)};
}

}  // namespace

int main() {
    // Runtime budgets are single-threaded; criterion 8 requests its own workers.
    omp_set_num_threads(1);
    std::printf("acceptance suite\n");
    report(1, "gradient suite", gradient_suite);
    report(5, "oracle suite", oracle_suite);

    Bench bench;
    try {
        bench = pretrained_benchmark();
    } catch (const std::exception& e) {
        std::printf("pretraining failed: %s\n", e.what());
        return 1;
    }
    report(2, "simplex suite", [&] { return simplex_suite(bench); });
    report(3, "schedule suite", [&] { return schedule_suite(bench); });
    report(4, "anchoring suite", [&] { return anchoring_suite(bench); });
    Campaigns campaigns;
    report(6, "behavioral reproduction", [&] { return behavioral(bench, campaigns); });
    report(7, "ablation direction", [&] { return ablation_direction(campaigns); });
    report(8, "determinism", [&] { return determinism(bench); });
    report(9, "chance level", [&] { return chance_level(bench); });
    std::printf("%d of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
