#include "dgat/config.hpp"

#include <fstream>
#include <stdexcept>
#include <thread>

namespace dgat {

RunConfig::RunConfig() {
    values_ = {
        {"window.w", 40},
        {"window.s", 20},
        {"graph.keep_fraction", 0.30},
        {"model.embed_dim", 64},
        {"model.gat_dims", {128, 128, 64}},
        {"model.heads", 1},
        {"model.leaky_slope", 0.2},
        {"model.pool_hidden", 32},
        {"model.conv_filters", 96},
        {"model.conv_kernel", 3},
        {"model.attn_hidden", 48},
        {"model.cls_hidden", {64, 32}},
        {"model.dropout", {0.5, 0.4}},
        {"model.bn_momentum", 0.1},
        {"model.bn_eps", 1e-5},
        {"model.bn_scope", "window"},
        {"train.lr", 0.001},
        {"train.weight_decay", 1e-4},
        {"train.batch_size", 16},
        {"train.max_epochs", 300},
        {"train.patience", 100},
        {"train.min_epochs", 40},
        {"train.val_fraction", 0.1},
        {"cv.k", 10},
        {"cv.seeds", {0, 1, 2, 3, 4}},
        {"cv.plan_seed", 1234},
        {"metrics.averaging", "macro"},
        {"interpret.heatmap_layer", 2},
        {"interpret.top_k", 20},
        {"jobs", 0},  // 0 = hardware concurrency
        {"synthetic.n_subjects_per_class", 30},
        {"synthetic.n_rois", 32},
        {"synthetic.length", 232},
        {"synthetic.block_size", 8},
        {"synthetic.coupling_delta", 0.6},
        {"synthetic.noise_sd", 1.0},
        {"synthetic.rng_seed", 7},
        {"synthetic.onset_fraction", 0.0},
    };
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("config parse error in " + path + ": " + e.what());
    }
    RunConfig cfg;
    cfg.merge_json(j);
    return cfg;
}

void RunConfig::check_key(const std::string& key) const {
    if (!values_.contains(key)) throw std::invalid_argument("unknown config field: " + key);
}

void RunConfig::merge_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("config must be a flat JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        check_key(it.key());
        values_[it.key()] = it.value();
    }
}

void RunConfig::apply_override(const std::string& kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("override must be key=value: " + kv);
    std::string key = kv.substr(0, eq);
    std::string val = kv.substr(eq + 1);
    check_key(key);
    nlohmann::json parsed = nlohmann::json::parse(val, nullptr, /*allow_exceptions=*/false);
    if (parsed.is_discarded()) parsed = val;  // plain string
    values_[key] = parsed;
}

void RunConfig::write_echo(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config echo: " + path);
    out << values_.dump(2) << '\n';
}

double RunConfig::get_number(const std::string& key) const {
    check_key(key);
    if (!values_[key].is_number())
        throw std::invalid_argument("config field " + key + " must be a number");
    return values_[key].get<double>();
}

std::size_t RunConfig::get_size(const std::string& key) const {
    double v = get_number(key);
    if (v < 0) throw std::invalid_argument("config field " + key + " must be non-negative");
    return static_cast<std::size_t>(v);
}

std::string RunConfig::get_string(const std::string& key) const {
    check_key(key);
    if (!values_[key].is_string())
        throw std::invalid_argument("config field " + key + " must be a string");
    return values_[key].get<std::string>();
}

WindowConfig RunConfig::window_config() const {
    return {get_size("window.w"), get_size("window.s")};
}

GraphConfig RunConfig::graph_config() const { return {get_number("graph.keep_fraction")}; }

ModelConfig RunConfig::model_config() const {
    ModelConfig m;
    m.embed_dim = get_size("model.embed_dim");
    m.gat_dims = values_["model.gat_dims"].get<std::vector<std::size_t>>();
    m.heads = get_size("model.heads");
    m.leaky_slope = get_number("model.leaky_slope");
    m.pool_hidden = get_size("model.pool_hidden");
    m.conv_filters = get_size("model.conv_filters");
    m.conv_kernel = get_size("model.conv_kernel");
    m.attn_hidden = get_size("model.attn_hidden");
    m.cls_hidden = values_["model.cls_hidden"].get<std::vector<std::size_t>>();
    m.dropout_rates = values_["model.dropout"].get<std::vector<double>>();
    m.bn_momentum = get_number("model.bn_momentum");
    m.bn_eps = get_number("model.bn_eps");
    m.bn_scope = get_string("model.bn_scope");
    return m;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig t;
    t.lr = get_number("train.lr");
    t.weight_decay = get_number("train.weight_decay");
    t.batch_size = get_size("train.batch_size");
    t.max_epochs = get_size("train.max_epochs");
    t.patience = get_size("train.patience");
    t.min_epochs = get_size("train.min_epochs");
    return t;
}

CvConfig RunConfig::cv_config() const {
    CvConfig c;
    c.k = get_size("cv.k");
    c.seeds = values_["cv.seeds"].get<std::vector<std::uint64_t>>();
    c.plan_seed = get_size("cv.plan_seed");
    c.val_fraction = get_number("train.val_fraction");
    c.averaging = get_string("metrics.averaging");
    c.jobs = get_size("jobs");
    if (c.jobs == 0) c.jobs = std::max(1u, std::thread::hardware_concurrency());
    return c;
}

SyntheticSpec RunConfig::synthetic_spec() const {
    SyntheticSpec s;
    s.n_subjects_per_class = get_size("synthetic.n_subjects_per_class");
    s.n_rois = get_size("synthetic.n_rois");
    s.length = get_size("synthetic.length");
    s.block_size = get_size("synthetic.block_size");
    s.coupling_delta = get_number("synthetic.coupling_delta");
    s.noise_sd = get_number("synthetic.noise_sd");
    s.rng_seed = get_size("synthetic.rng_seed");
    s.onset_fraction = get_number("synthetic.onset_fraction");
    return s;
}

std::size_t RunConfig::heatmap_layer() const { return get_size("interpret.heatmap_layer"); }
std::size_t RunConfig::top_k() const { return get_size("interpret.top_k"); }
std::string RunConfig::averaging() const { return get_string("metrics.averaging"); }

}  // namespace dgat
