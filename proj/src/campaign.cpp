#include "awcol/campaign.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include "awcol/errors.hpp"

namespace awcol {
namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kInitStream = 1;     // + model id
constexpr std::uint64_t kSourceStream = 11;  // + model id
constexpr std::uint64_t kHeldOutStream = 99;
constexpr std::uint64_t kFinetuneStream = 7;
constexpr std::uint64_t kGenStream = 21;
constexpr std::size_t kHeldOutEpisodes = 100;

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

ShiftPair shift_pair(const RunConfig& cfg) {
    return make_shift_pair(cfg.domain_seed, cfg.source_classes, cfg.target_classes, cfg.input_dim, cfg.severity,
                           cfg.shift);
}

std::string fmt(double v, int precision = 4) {
    std::ostringstream ss;
    ss.setf(std::ios::fixed);
    ss.precision(precision);
    ss << v;
    return ss.str();
}

}  // namespace

EpisodeSampler::EpisodeSampler(DomainSpec spec, std::size_t n_way, std::size_t k_shot, std::size_t queries)
    : source_(std::move(spec)), n_way_(n_way), k_shot_(k_shot), queries_(queries) {
    std::get<DomainSpec>(source_).validate();
    if (n_way > std::get<DomainSpec>(source_).n_classes) throw ConfigError("n_way exceeds the domain's classes");
}

EpisodeSampler::EpisodeSampler(EmbeddingDataset data, std::size_t n_way, std::size_t k_shot, std::size_t queries)
    : source_(std::move(data)), n_way_(n_way), k_shot_(k_shot), queries_(queries) {
    std::get<EmbeddingDataset>(source_).check_episode_shape(n_way, k_shot, queries);
}

Episode EpisodeSampler::operator()(std::mt19937_64& rng) const {
    return std::visit([&](const auto& src) { return sample_episode(src, n_way_, k_shot_, queries_, rng); }, source_);
}

std::size_t EpisodeSampler::input_dim() const {
    if (const auto* d = std::get_if<DomainSpec>(&source_)) return d->input_dim;
    return std::get<EmbeddingDataset>(source_).dim;
}

EpisodeSampler source_sampler(const RunConfig& cfg) {
    if (!cfg.source_embeddings.empty()) {
        return {load_embeddings(cfg.source_embeddings), cfg.n_way, cfg.k_shot, cfg.queries_per_class};
    }
    return {shift_pair(cfg).source, cfg.n_way, cfg.k_shot, cfg.queries_per_class};
}

EpisodeSampler target_sampler(const RunConfig& cfg) {
    if (!cfg.target_embeddings.empty()) {
        return {load_embeddings(cfg.target_embeddings), cfg.n_way, cfg.k_shot, cfg.queries_per_class};
    }
    return {shift_pair(cfg).target, cfg.n_way, cfg.k_shot, cfg.queries_per_class};
}

void ensure_writable_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    const auto probe = dir / ".awcol_write_probe";
    {
        std::ofstream out(probe);
        if (!out) throw IoError("output directory " + dir.string() + " is not writable");
    }
    std::filesystem::remove(probe, ec);
}

void check_compatible(const Checkpoint& ckpt, std::size_t feature_dim) {
    const std::size_t in = ckpt.model.encoder.input_dim();
    if (in != feature_dim) {
        throw ConfigError("checkpoint for model " + std::to_string(ckpt.model.model_id) + " expects " +
                          std::to_string(in) + " input features, episodes have " + std::to_string(feature_dim));
    }
}

PretrainOutcome run_pretrain(const RunConfig& cfg) {
    cfg.validate();
    const std::filesystem::path out_dir = cfg.output_dir;
    ensure_writable_dir(out_dir);
    const EpisodeSampler sampler = source_sampler(cfg);
    const auto dims = cfg.encoder_dims(sampler.input_dim());
    const auto hash = config_hash(cfg);

    PretrainOutcome res;
    Checkpoint* ckpts[2] = {&res.model1, &res.model2};
    PretrainTrace* traces[2] = {&res.trace1, &res.trace2};
    double* accs[2] = {&res.source_accuracy1, &res.source_accuracy2};

    const int workers = cfg.threads > 1 ? 2 : 1;
#pragma omp parallel for num_threads(workers) schedule(static, 1)
    for (int m = 0; m < 2; ++m) {
        const int id = m + 1;
        Checkpoint& ck = *ckpts[m];
        ck.seed = cfg.seed;
        ck.config_hash = hash;
        ck.model = make_proto_model(dims, derive_seed(cfg.seed, kInitStream + id), cfg.pretrain_lr, id);
        std::mt19937_64 stream_rng(derive_seed(cfg.seed, kSourceStream + id));
        *traces[m] = pretrain_source(ck.model, [&] { return sampler(stream_rng); }, cfg.pretrain_iterations,
                                     cfg.pretrain_tasks);
        std::mt19937_64 held_out(derive_seed(cfg.seed, kHeldOutStream));
        double acc = 0.0;
        for (std::size_t e = 0; e < kHeldOutEpisodes; ++e) {
            const Episode ep = sampler(held_out);
            acc += evaluate(predict_task(ck.model, ep.task), ep.query_labels);
        }
        *accs[m] = acc / double(kHeldOutEpisodes);
    }

    save_checkpoint(cfg.checkpoint_path(1), res.model1);
    save_checkpoint(cfg.checkpoint_path(2), res.model2);

    std::string csv = "iteration,m1_mean_loss,m1_sum_loss,m2_mean_loss,m2_sum_loss\n";
    for (std::size_t i = 0; i < res.trace1.mean_loss.size(); ++i) {
        csv += std::to_string(i) + "," + format_double(res.trace1.mean_loss[i]) + "," +
               format_double(res.trace1.sum_loss[i]) + "," + format_double(res.trace2.mean_loss[i]) + "," +
               format_double(res.trace2.sum_loss[i]) + "\n";
    }
    write_text(out_dir / "pretrain_trace.csv", csv);
    std::ostringstream rep;
    rep << "pretraining: " << cfg.pretrain_iterations << " iterations x " << cfg.pretrain_tasks << " tasks\n";
    for (int m = 0; m < 2; ++m) {
        const auto& tr = *traces[m];
        rep << "model " << m + 1 << ": final mean loss "
            << (tr.mean_loss.empty() ? std::string("n/a") : fmt(tr.mean_loss.back(), 6))
            << ", held-out source accuracy " << fmt(*accs[m]) << ", clamped CE terms " << tr.clamped << "\n";
    }
    rep << "\n# config\n" << render_config(cfg);
    write_text(out_dir / "pretrain_report.txt", rep.str());
    return res;
}

Summary summarize(const std::vector<double>& values) {
    Summary s;
    if (values.empty()) return s;
    double total = 0.0;
    for (double v : values) total += v;
    s.mean = total / double(values.size());
    if (values.size() < 2) return s;
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    const double stdev = std::sqrt(ss / double(values.size() - 1));
    s.ci95 = 1.96 * stdev / std::sqrt(double(values.size()));
    return s;
}

std::vector<double> CampaignReport::co_accuracies() const {
    std::vector<double> v;
    for (const auto& e : episodes) v.push_back(e.acc_co);
    return v;
}

CampaignReport run_campaign(const RunConfig& cfg, const Checkpoint& m1, const Checkpoint& m2,
                            const std::filesystem::path& out_dir, const std::string& variant) {
    cfg.validate();
    if (!out_dir.empty()) ensure_writable_dir(out_dir);
    const EpisodeSampler sampler = target_sampler(cfg);
    check_compatible(m1, sampler.input_dim());
    check_compatible(m2, sampler.input_dim());
    if (m1.model.encoder.output_dim() != m2.model.encoder.output_dim()) {
        throw ConfigError("the two checkpoints produce embeddings of different dimension");
    }

    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t n = cfg.episodes;
    std::vector<std::optional<EpisodeOutcome>> done(n);
    std::vector<std::optional<EpisodeFailure>> failed(n);

    auto run_one = [&](std::size_t i) {
        const std::uint64_t seed = cfg.seed + i;
        try {
            std::mt19937_64 rng(seed);
            const Episode ep = sampler(rng);
            FinetuneConfig fc = cfg.finetune;
            fc.seed = derive_seed(seed, kFinetuneStream);
            const FinetuneResult r = finetune(m1.model, m2.model, ep.task, fc);
            EpisodeOutcome o;
            o.index = i;
            o.seed = seed;
            o.acc_co = evaluate(r.co_probs, ep.query_labels);
            o.acc_m1 = evaluate(r.wma1, ep.query_labels);
            o.acc_m2 = evaluate(r.wma2, ep.query_labels);
            if (!r.trace.empty()) {
                const auto& last = r.trace.back();
                o.final_loss = last.total_loss[0] + last.total_loss[1];
                o.final_weight = last.mean_weight;
            }
            for (const auto& rec : r.trace) {
                o.clamped += rec.clamped;
                o.neg_floored += rec.neg_floored;
            }
            done[i] = o;
        } catch (const std::exception& e) {
            failed[i] = EpisodeFailure{i, seed, e.what()};
        }
    };

    const auto signed_n = static_cast<std::ptrdiff_t>(n);
    if (cfg.threads > 1) {
#pragma omp parallel for num_threads(static_cast<int>(cfg.threads)) schedule(dynamic, 1)
        for (std::ptrdiff_t i = 0; i < signed_n; ++i) run_one(std::size_t(i));
    } else {
        for (std::ptrdiff_t i = 0; i < signed_n; ++i) run_one(std::size_t(i));
    }

    CampaignReport rep;
    rep.variant = variant;
    rep.config_echo = render_config(cfg, false);
    std::vector<double> co, a1, a2;
    for (std::size_t i = 0; i < n; ++i) {
        if (failed[i]) rep.failures.push_back(*failed[i]);
        if (!done[i]) continue;
        const auto& o = *done[i];
        rep.episodes.push_back(o);
        co.push_back(o.acc_co);
        a1.push_back(o.acc_m1);
        a2.push_back(o.acc_m2);
        rep.mean_final_loss += o.final_loss;
        rep.mean_final_weight += o.final_weight;
        rep.clamped += o.clamped;
        rep.neg_floored += o.neg_floored;
    }
    if (!rep.episodes.empty()) {
        rep.mean_final_loss /= double(rep.episodes.size());
        rep.mean_final_weight /= double(rep.episodes.size());
    }
    rep.co = summarize(co);
    rep.m1 = summarize(a1);
    rep.m2 = summarize(a2);
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (!out_dir.empty()) {
        write_text(out_dir / "episodes.csv", episodes_csv(rep));
        write_text(out_dir / "report.txt", report_text(rep));
    }
    return rep;
}

std::string episodes_csv(const CampaignReport& report) {
    std::string out = "episode,seed,acc_co,acc_m1,acc_m2\n";
    for (const auto& e : report.episodes) {
        out += std::to_string(e.index) + "," + std::to_string(e.seed) + "," + format_double(e.acc_co) + "," +
               format_double(e.acc_m1) + "," + format_double(e.acc_m2) + "\n";
    }
    return out;
}

std::string report_text(const CampaignReport& r) {
    std::ostringstream s;
    s << "variant: " << r.variant << "\n";
    s << "episodes completed: " << r.episodes.size() << "\n";
    s << "episodes failed: " << r.failures.size() << (r.partial() ? " (PARTIAL REPORT)" : "") << "\n";
    s << "co-prediction accuracy: " << fmt(100.0 * r.co.mean, 2) << " +- " << fmt(100.0 * r.co.ci95, 2)
      << " (95% CI, normal approx.)\n";
    s << "model 1 WMA accuracy:   " << fmt(100.0 * r.m1.mean, 2) << " +- " << fmt(100.0 * r.m1.ci95, 2) << "\n";
    s << "model 2 WMA accuracy:   " << fmt(100.0 * r.m2.mean, 2) << " +- " << fmt(100.0 * r.m2.ci95, 2) << "\n";
    s << "mean final total loss:  " << fmt(r.mean_final_loss, 6) << "\n";
    s << "mean final weight:      " << fmt(r.mean_final_weight, 6) << "\n";
    s << "clamped CE terms:       " << r.clamped << "\n";
    s << "floored negative loss:  " << r.neg_floored << "\n";
    for (const auto& f : r.failures) s << "failed episode " << f.index << " (seed " << f.seed << "): " << f.message << "\n";
    s << "\n# config\n" << r.config_echo;
    return s.str();
}

PairedComparison compare_paired(const CampaignReport& full, const CampaignReport& variant) {
    PairedComparison c;
    c.variant = variant.variant;
    std::vector<double> diffs;
    std::size_t j = 0;
    for (const auto& e : full.episodes) {
        while (j < variant.episodes.size() && variant.episodes[j].index < e.index) ++j;
        if (j == variant.episodes.size() || variant.episodes[j].index != e.index) continue;
        const double d = e.acc_co - variant.episodes[j].acc_co;
        diffs.push_back(d);
        if (d > 0) ++c.wins;
        else if (d < 0) ++c.losses;
        else ++c.ties;
    }
    c.difference = summarize(diffs);
    return c;
}

AblationTable run_ablation_sweep(const RunConfig& cfg, const Checkpoint& m1, const Checkpoint& m2) {
    cfg.validate();
    std::vector<std::string> names = cfg.variants.empty() ? all_variants() : cfg.variants;
    // "full" is the reference row and always runs first.
    std::erase(names, std::string("full"));
    names.insert(names.begin(), "full");

    const std::filesystem::path root = cfg.output_dir;
    ensure_writable_dir(root);
    AblationTable table;
    for (const auto& name : names) {
        RunConfig vc = cfg;
        vc.finetune.ablation = variant_ablation(name);
        table.reports.push_back(run_campaign(vc, m1, m2, root / name, name));
    }
    for (std::size_t i = 1; i < table.reports.size(); ++i) {
        table.comparisons.push_back(compare_paired(table.reports[0], table.reports[i]));
    }
    write_text(root / "ablation.txt", ablation_text(table));
    return table;
}

std::string ablation_text(const AblationTable& t) {
    std::ostringstream s;
    s << "variant               acc(%)   ci95   full-variant(%)   ci95   wins/losses/ties\n";
    for (std::size_t i = 0; i < t.reports.size(); ++i) {
        const auto& r = t.reports[i];
        std::string name = r.variant;
        name.resize(20, ' ');
        s << name << "  " << fmt(100.0 * r.co.mean, 2) << "   " << fmt(100.0 * r.co.ci95, 2);
        if (i == 0) {
            s << "   (reference)\n";
            continue;
        }
        const auto& c = t.comparisons[i - 1];
        s << "   " << fmt(100.0 * c.difference.mean, 2) << "           " << fmt(100.0 * c.difference.ci95, 2) << "   "
          << c.wins << "/" << c.losses << "/" << c.ties << (r.partial() ? "  PARTIAL" : "") << "\n";
    }
    return s.str();
}

void run_gen_data(const RunConfig& cfg) {
    cfg.validate();
    const std::filesystem::path out_dir = cfg.output_dir;
    ensure_writable_dir(out_dir);
    const ShiftPair pair = shift_pair(cfg);
    std::mt19937_64 rs(derive_seed(cfg.seed, kGenStream));
    std::mt19937_64 rt(derive_seed(cfg.seed, kGenStream + 1));
    save_embeddings(out_dir / "source.txt", materialize(pair.source, cfg.samples_per_class, rs, "source"));
    save_embeddings(out_dir / "target.txt", materialize(pair.target, cfg.samples_per_class, rt, "target"));
}

}  // namespace awcol
