// Command-line front end: pretrain, eval, ablate, gen-data.
#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "awcol/campaign.hpp"
#include "awcol/errors.hpp"

namespace {

enum Exit { kOk = 0, kConfigError = 1, kRuntimeError = 2, kPartial = 3 };

struct CommonArgs {
    std::string config;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

awcol::RunConfig resolve(const CommonArgs& args, awcol::RunMode mode) {
    awcol::RunConfig cfg;
    if (!args.config.empty()) cfg = awcol::load_config(args.config);
    if (args.seed_set) cfg.seed = args.seed;
    cfg.mode = mode;
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option_function<std::uint64_t>(
        "--seed",
        [&args](const std::uint64_t& s) {
            args.seed = s;
            args.seed_set = true;
        },
        "base seed override");
}

std::pair<awcol::Checkpoint, awcol::Checkpoint> load_pair(const awcol::RunConfig& cfg) {
    return {awcol::load_checkpoint(cfg.checkpoint_path(1)), awcol::load_checkpoint(cfg.checkpoint_path(2))};
}

int run(awcol::RunMode mode, const CommonArgs& args) {
    const awcol::RunConfig cfg = resolve(args, mode);
    switch (mode) {
        case awcol::RunMode::pretrain: {
            const auto out = awcol::run_pretrain(cfg);
            std::cout << "model 1 held-out source accuracy " << out.source_accuracy1 << "\n"
                      << "model 2 held-out source accuracy " << out.source_accuracy2 << "\n"
                      << "checkpoints: " << cfg.checkpoint_path(1).string() << ", "
                      << cfg.checkpoint_path(2).string() << "\n";
            return kOk;
        }
        case awcol::RunMode::eval: {
            const auto [m1, m2] = load_pair(cfg);
            const auto rep = awcol::run_campaign(cfg, m1, m2, cfg.output_dir, "full");
            std::cout << awcol::report_text(rep);
            std::cerr << "wall clock seconds: " << rep.wall_seconds << "\n";
            return rep.partial() ? kPartial : kOk;
        }
        case awcol::RunMode::ablate: {
            const auto [m1, m2] = load_pair(cfg);
            const auto table = awcol::run_ablation_sweep(cfg, m1, m2);
            std::cout << awcol::ablation_text(table);
            for (const auto& r : table.reports)
                if (r.partial()) return kPartial;
            return kOk;
        }
        case awcol::RunMode::gen_data:
            awcol::run_gen_data(cfg);
            std::cout << "wrote " << cfg.output_dir << "/source.txt and target.txt\n";
            return kOk;
    }
    return kRuntimeError;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive weighted co-learning for cross-domain few-shot learning"};
    app.require_subcommand(1);

    CommonArgs args;
    struct Sub {
        const char* name;
        const char* help;
        awcol::RunMode mode;
    };
    const Sub subs[] = {
        {"pretrain", "pretrain two prototypical models on source tasks", awcol::RunMode::pretrain},
        {"eval", "fine-tune and evaluate on seeded target episodes", awcol::RunMode::eval},
        {"ablate", "run every ablation variant on paired episodes", awcol::RunMode::ablate},
        {"gen-data", "write synthetic source/target embedding files", awcol::RunMode::gen_data},
    };
    awcol::RunMode chosen = awcol::RunMode::eval;
    for (const auto& s : subs) {
        auto* sub = app.add_subcommand(s.name, s.help);
        add_common(sub, args);
        sub->callback([&chosen, mode = s.mode] { chosen = mode; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        return run(chosen, args);
    } catch (const awcol::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
}
