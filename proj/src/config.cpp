#include "awcol/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "awcol/errors.hpp"

namespace awcol {
namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw ConfigError("config key `" + key + "`: cannot parse `" + v + "`");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key `" + key + "`: expected true/false, got `" + v + "`");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
    return out;
}

struct Field {
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field num(T RunConfig::*member) {
    return {[member](RunConfig& c, const std::string& k, const std::string& v) { c.*member = parse_number<T>(k, v); },
            [member](const RunConfig& c) {
                if constexpr (std::is_floating_point_v<T>) return format_double(c.*member);
                else return std::to_string(c.*member);
            }};
}

template <typename T>
Field num_at(std::function<T&(RunConfig&)> ref) {
    return {[ref](RunConfig& c, const std::string& k, const std::string& v) { ref(c) = parse_number<T>(k, v); },
            [ref](const RunConfig& c) {
                const T& x = ref(const_cast<RunConfig&>(c));
                if constexpr (std::is_floating_point_v<T>) return format_double(x);
                else return std::to_string(x);
            }};
}

Field flag(bool Ablation::*member) {
    return {[member](RunConfig& c, const std::string& k, const std::string& v) {
                c.finetune.ablation.*member = parse_bool(k, v);
            },
            [member](const RunConfig& c) { return std::string(c.finetune.ablation.*member ? "true" : "false"); }};
}

Field text(std::string RunConfig::*member) {
    return {[member](RunConfig& c, const std::string&, const std::string& v) { c.*member = v; },
            [member](const RunConfig& c) { return c.*member; }};
}

// Ordered so render_config output is stable.
const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = {
        {"seed", num(&RunConfig::seed)},
        {"domain_seed", num(&RunConfig::domain_seed)},
        {"n_way", num(&RunConfig::n_way)},
        {"k_shot", num(&RunConfig::k_shot)},
        {"queries_per_class", num(&RunConfig::queries_per_class)},
        {"episodes", num(&RunConfig::episodes)},
        {"input_dim", num(&RunConfig::input_dim)},
        {"source_classes", num(&RunConfig::source_classes)},
        {"target_classes", num(&RunConfig::target_classes)},
        {"severity", num(&RunConfig::severity)},
        {"radius", num_at<double>([](RunConfig& c) -> double& { return c.shift.radius; })},
        {"min_separation", num_at<double>([](RunConfig& c) -> double& { return c.shift.min_separation; })},
        {"noise_scale", num_at<double>([](RunConfig& c) -> double& { return c.shift.noise_scale; })},
        {"max_translation", num_at<double>([](RunConfig& c) -> double& { return c.shift.max_translation; })},
        {"max_scale_change", num_at<double>([](RunConfig& c) -> double& { return c.shift.max_scale_change; })},
        {"source_embeddings", text(&RunConfig::source_embeddings)},
        {"target_embeddings", text(&RunConfig::target_embeddings)},
        {"samples_per_class", num(&RunConfig::samples_per_class)},
        {"hidden_width", num(&RunConfig::hidden_width)},
        {"hidden_layers", num(&RunConfig::hidden_layers)},
        {"embed_dim", num(&RunConfig::embed_dim)},
        {"pretrain_iterations", num(&RunConfig::pretrain_iterations)},
        {"pretrain_tasks", num(&RunConfig::pretrain_tasks)},
        {"pretrain_lr", num(&RunConfig::pretrain_lr)},
        {"finetune_iterations", num_at<std::size_t>([](RunConfig& c) -> std::size_t& { return c.finetune.total_iterations; })},
        {"finetune_lr", num_at<double>([](RunConfig& c) -> double& { return c.finetune.learning_rate; })},
        {"beta", num_at<std::size_t>([](RunConfig& c) -> std::size_t& { return c.finetune.beta; })},
        {"lambda", num_at<double>([](RunConfig& c) -> double& { return c.finetune.lambda; })},
        {"alpha0", num_at<double>([](RunConfig& c) -> double& { return c.finetune.schedule.alpha0; })},
        {"alpha_min", num_at<double>([](RunConfig& c) -> double& { return c.finetune.schedule.alpha_min; })},
        {"gamma", num_at<double>([](RunConfig& c) -> double& { return c.finetune.schedule.gamma; })},
        {"no_colearn", flag(&Ablation::no_colearn)},
        {"simultaneous_update", flag(&Ablation::simultaneous_update)},
        {"no_wma", flag(&Ablation::no_wma)},
        {"drop_co_loss", flag(&Ablation::drop_co_loss)},
        {"drop_neg_loss", flag(&Ablation::drop_neg_loss)},
        {"unit_weights", flag(&Ablation::unit_weights)},
        {"add_support_loss", flag(&Ablation::add_support_loss)},
        {"checkpoint_1", text(&RunConfig::checkpoint_1)},
        {"checkpoint_2", text(&RunConfig::checkpoint_2)},
        {"output_dir", text(&RunConfig::output_dir)},
        {"threads", num(&RunConfig::threads)},
        {"variants", {[](RunConfig& c, const std::string&, const std::string& v) { c.variants = split_list(v); },
                      [](const RunConfig& c) { return join(c.variants); }}},
    };
    return table;
}

const Field* find_field(const std::string& key) {
    for (const auto& [name, f] : fields())
        if (name == key) return &f;
    return nullptr;
}

}  // namespace

void RunConfig::validate() const {
    if (episodes < 1) throw ConfigError("episodes must be >= 1");
    if (n_way < 2) throw ConfigError("n_way must be >= 2");
    if (k_shot < 1 || queries_per_class < 1) throw ConfigError("k_shot and queries_per_class must be >= 1");
    if (source_embeddings.empty() && n_way > source_classes) throw ConfigError("n_way exceeds source_classes");
    if (target_embeddings.empty() && n_way > target_classes) throw ConfigError("n_way exceeds target_classes");
    if (!(severity >= 0.0 && severity <= 1.0)) throw ConfigError("severity must lie in [0, 1]");
    if (hidden_width == 0 || embed_dim == 0) throw ConfigError("encoder widths must be positive");
    if (!(pretrain_lr > 0.0)) throw ConfigError("pretrain_lr must be positive");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (output_dir.empty()) throw ConfigError("output_dir must be set");
    for (const auto& v : variants) variant_ablation(v);
    for (const auto& p : {source_embeddings, target_embeddings}) {
        if (!p.empty() && !std::filesystem::exists(p)) throw ConfigError("embedding file not found: " + p);
    }
    finetune.validate();
}

std::vector<std::size_t> RunConfig::encoder_dims(std::size_t in_dim) const {
    std::vector<std::size_t> dims{in_dim};
    for (std::size_t i = 0; i < hidden_layers; ++i) dims.push_back(hidden_width);
    dims.push_back(embed_dim);
    return dims;
}

std::filesystem::path RunConfig::checkpoint_path(int model_id) const {
    const std::string& explicit_path = model_id == 1 ? checkpoint_1 : checkpoint_2;
    if (!explicit_path.empty()) return explicit_path;
    return std::filesystem::path(output_dir) / ("model" + std::to_string(model_id) + ".ckpt");
}

RunConfig parse_config(const std::string& text, RunConfig base) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected `key = value`");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const Field* f = find_field(key);
        if (!f) throw ConfigError("config line " + std::to_string(line_no) + ": unknown key `" + key + "`");
        f->set(base, key, value);
    }
    return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

std::string render_config(const RunConfig& cfg, bool include_execution) {
    std::string out;
    for (const auto& [name, f] : fields()) {
        if (!include_execution && (name == "threads" || name == "output_dir")) continue;
        out += name + " = " + f.get(cfg) + "\n";
    }
    return out;
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t state) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        state ^= p[i];
        state *= 0x100000001b3ULL;
    }
    return state;
}

std::uint64_t config_hash(const RunConfig& cfg) {
    const std::string text = render_config(cfg, false);
    return fnv1a64(text.data(), text.size());
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

const std::vector<std::string>& all_variants() {
    static const std::vector<std::string> names = {"full",        "no_colearn",      "no_alt_update",
                                                   "no_wma",      "no_co_loss",      "no_neg_loss",
                                                   "no_adapt_weight", "with_support_loss"};
    return names;
}

Ablation variant_ablation(const std::string& name) {
    Ablation a;
    if (name == "full") return a;
    if (name == "no_colearn") a.no_colearn = true;
    else if (name == "no_alt_update") a.simultaneous_update = true;
    else if (name == "no_wma") a.no_wma = true;
    else if (name == "no_co_loss") a.drop_co_loss = true;
    else if (name == "no_neg_loss") a.drop_neg_loss = true;
    else if (name == "no_adapt_weight") a.unit_weights = true;
    else if (name == "with_support_loss") a.add_support_loss = true;
    else throw ConfigError("unknown ablation variant `" + name + "`");
    return a;
}

}  // namespace awcol
