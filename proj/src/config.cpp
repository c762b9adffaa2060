#include "largebatch/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "largebatch/error.hpp"

namespace largebatch {

std::string format_number(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, end);
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out))
        throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
    return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
        throw ConfigError("key '" + key + "': expected a nonnegative integer, got '" + v + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_u64(key, trim(item)));
    if (out.empty()) throw ConfigError("key '" + key + "': empty list");
    return out;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

struct Field {
    std::function<void(Config&, const std::string& key, const std::string&)> set;
    std::function<std::string(const Config&)> get;
};

// Ordered so that config_entries() lists keys in a stable, readable order.
const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = [] {
        std::vector<std::pair<std::string, Field>> t;
        auto size_field = [&](const char* key, std::size_t Config::*member) {
            t.push_back({key, {[member](Config& c, const std::string& k, const std::string& v) {
                                   c.*member = static_cast<std::size_t>(parse_u64(k, v));
                               },
                               [member](const Config& c) { return std::to_string(c.*member); }}});
        };
        auto double_field = [&](const char* key, auto getter) {
            t.push_back({key, {[getter](Config& c, const std::string& k, const std::string& v) {
                                   getter(c) = parse_double(k, v);
                               },
                               [getter](const Config& c) { return format_number(getter(const_cast<Config&>(c))); }}});
        };

        t.push_back({"seed", {[](Config& c, const std::string& k, const std::string& v) { c.seed = parse_u64(k, v); },
                              [](const Config& c) { return std::to_string(c.seed); }}});
        size_field("workers", &Config::workers);
        size_field("b_local", &Config::b_local);
        size_field("epochs", &Config::epochs);
        size_field("iterations_per_epoch", &Config::iterations_per_epoch);
        size_field("threads", &Config::threads);
        t.push_back({"model.layers",
                     {[](Config& c, const std::string& k, const std::string& v) { c.layers = parse_sizes(k, v); },
                      [](const Config& c) { return join_sizes(c.layers); }}});
        t.push_back({"model.batchnorm",
                     {[](Config& c, const std::string& k, const std::string& v) { c.batchnorm = parse_bool(k, v); },
                      [](const Config& c) { return std::string(c.batchnorm ? "true" : "false"); }}});
        double_field("model.init_scale", [](Config& c) -> double& { return c.init_scale; });
        double_field("bn.eps", [](Config& c) -> double& { return c.bn_eps; });
        t.push_back({"bn.variance", {[](Config& c, const std::string&, const std::string& v) {
                                         c.bn_variance = parse_variance_combine(v);
                                     },
                                     [](const Config& c) { return std::string(to_string(c.bn_variance)); }}});
        t.push_back({"schedule",
                     {[](Config& c, const std::string&, const std::string& v) { c.schedule = parse_schedule_kind(v); },
                      [](const Config& c) { return std::string(to_string(c.schedule)); }}});
        double_field("schedule.reference_epochs", [](Config& c) -> double& { return c.reference_epochs; });
        double_field("eta_scale", [](Config& c) -> double& { return c.eta_scale; });
        t.push_back({"optimizer", {[](Config& c, const std::string&, const std::string& v) {
                                       c.optimizer = parse_optimizer_kind(v);
                                   },
                                   [](const Config& c) { return std::string(to_string(c.optimizer)); }}});
        double_field("mu1", [](Config& c) -> double& { return c.hyper.mu1; });
        double_field("mu2", [](Config& c) -> double& { return c.hyper.mu2; });
        double_field("epsilon", [](Config& c) -> double& { return c.hyper.epsilon; });
        double_field("eta_rmsprop", [](Config& c) -> double& { return c.hyper.eta_rmsprop; });
        double_field("beta_center", [](Config& c) -> double& { return c.hyper.beta_center; });
        double_field("beta_period", [](Config& c) -> double& { return c.hyper.beta_period; });
        double_field("weight_decay", [](Config& c) -> double& { return c.weight_decay; });
        t.push_back({"comm.precision", {[](Config& c, const std::string&, const std::string& v) {
                                            c.precision = parse_comm_precision(v);
                                        },
                                        [](const Config& c) { return std::string(to_string(c.precision)); }}});
        double_field("cost.alpha_latency", [](Config& c) -> double& { return c.cost.alpha_latency; });
        double_field("cost.beta_bandwidth", [](Config& c) -> double& { return c.cost.beta_bandwidth; });
        double_field("cost.gamma_compute", [](Config& c) -> double& { return c.cost.gamma_compute; });
        t.push_back({"dataset", {[](Config& c, const std::string& k, const std::string& v) {
                                     if (v != "synthetic" && v.rfind("file:", 0) != 0)
                                         throw ConfigError("key '" + k + "': expected synthetic or file:<path>");
                                     c.dataset = v;
                                 },
                                 [](const Config& c) { return c.dataset; }}});
        size_field("dataset.examples", &Config::dataset_examples);
        double_field("dataset.separation", [](Config& c) -> double& { return c.dataset_separation; });
        t.push_back({"out_dir", {[](Config& c, const std::string&, const std::string& v) { c.out_dir = v; },
                                 [](const Config& c) { return c.out_dir; }}});
        return t;
    }();
    return table;
}

}  // namespace

void apply_setting(Config& config, const std::string& key, const std::string& value) {
    for (const auto& [name, field] : fields()) {
        if (name == key) {
            try {
                field.set(config, key, value);
            } catch (const ConfigError&) {
                throw;
            } catch (const Error& e) {
                throw ConfigError("key '" + key + "': " + e.what());
            }
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

std::pair<std::string, std::string> split_assignment(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed setting '" + text + "' (expected key=value)");
    auto key = trim(text.substr(0, eq));
    if (key.empty()) throw ConfigError("malformed setting '" + text + "' (empty key)");
    return {key, trim(text.substr(eq + 1))};
}

Config parse_config(const std::string& text, Config base) {
    std::stringstream ss(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        try {
            auto [key, value] = split_assignment(t);
            apply_setting(base, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return base;
}

Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::vector<std::pair<std::string, std::string>> config_entries(const Config& config) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [name, field] : fields()) out.emplace_back(name, field.get(config));
    return out;
}

std::string to_config_text(const Config& config) {
    std::string s;
    for (const auto& [k, v] : config_entries(config)) s += k + "=" + v + "\n";
    return s;
}

void Config::validate() const {
    if (workers == 0) throw ConfigError("workers must be positive");
    if (b_local == 0) throw ConfigError("b_local must be positive");
    if (threads == 0) throw ConfigError("threads must be positive");
    if (layers.size() < 3) throw ConfigError("model.layers needs input, >= 1 hidden layer and classes");
    for (auto s : layers)
        if (s == 0) throw ConfigError("model.layers entries must be positive");
    if (layers.back() < 2) throw ConfigError("model.layers: need at least 2 classes");
    if (batchnorm && b_local < 2) throw ConfigError("batch norm needs b_local >= 2");
    if (!(init_scale > 0.0)) throw ConfigError("model.init_scale must be positive");
    if (!(bn_eps > 0.0)) throw ConfigError("bn.eps must be positive");
    if (!(reference_epochs > 0.0)) throw ConfigError("schedule.reference_epochs must be positive");
    if (!(eta_scale > 0.0)) throw ConfigError("eta_scale must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
    if (!(dataset_separation >= 0.0)) throw ConfigError("dataset.separation must be nonnegative");
    try {
        hyper.validate();
        cost.validate();
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    if (epochs > 0 && !(static_cast<double>(epochs) >= 4.0))
        throw ConfigError("epochs must be 0 or at least 4 (four schedule phases)");
}

double Config::base_learning_rate() const { return eta_base(cluster()) * eta_scale; }

OptimizerHyper Config::scaled_hyper() const {
    OptimizerHyper h = hyper;
    h.beta_center *= epoch_scale();
    h.beta_period *= epoch_scale();
    return h;
}

}  // namespace largebatch
