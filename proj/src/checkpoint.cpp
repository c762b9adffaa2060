#include "largebatch/checkpoint.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "largebatch/error.hpp"
#include "largebatch/trainer.hpp"

namespace largebatch {

using nlohmann::json;

namespace {

json tensor_json(const Tensor& t) { return json{{"shape", t.shape()}, {"data", t.values()}}; }

Tensor tensor_from(const json& j) {
    return Tensor(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
}

json optional_tensor_json(const std::optional<Tensor>& t) { return t ? tensor_json(*t) : json(nullptr); }

std::optional<Tensor> optional_tensor_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    return tensor_from(j);
}

}  // namespace

Checkpoint make_checkpoint(const Trainer& trainer) {
    Checkpoint c;
    // The output location is not part of the run, so reruns elsewhere stay byte-identical.
    for (auto& entry : config_entries(trainer.config()))
        if (entry.first != "out_dir") c.config.push_back(std::move(entry));
    c.iteration = trainer.completed_iterations();
    const auto& model = trainer.replicas().front().model;
    const auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        c.parameters.emplace_back(params[i].name, *params[i].value);
        c.optimizer.push_back({params[i].name, trainer.optimizer_states()[i]});
    }
    // BN layer names follow the hidden-layer index of their parameters.
    std::size_t b = 0;
    for (const auto& p : params) {
        if (!p.name.ends_with(".gamma")) continue;
        const auto& bn = model.bn_layers()[b++];
        c.batchnorm.push_back({p.name.substr(0, p.name.find('.')), bn.synced_mean, bn.synced_var});
    }
    return c;
}

std::string to_json(const Checkpoint& c) {
    json j;
    j["format"] = "largebatch-checkpoint";
    j["version"] = c.version;
    json cfg = json::object();
    for (const auto& [k, v] : c.config) cfg[k] = v;
    j["config"] = cfg;
    j["iteration"] = c.iteration;
    json params = json::array();
    for (const auto& [name, t] : c.parameters) params.push_back({{"name", name}, {"tensor", tensor_json(t)}});
    j["parameters"] = params;
    json opt = json::array();
    for (const auto& o : c.optimizer)
        opt.push_back({{"name", o.name}, {"t", o.state.t}, {"m", tensor_json(o.state.m)},
                       {"delta", tensor_json(o.state.delta)}});
    j["optimizer"] = opt;
    json bn = json::array();
    for (const auto& b : c.batchnorm)
        bn.push_back({{"name", b.name},
                      {"synced_mean", optional_tensor_json(b.synced_mean)},
                      {"synced_var", optional_tensor_json(b.synced_var)}});
    j["batchnorm"] = bn;
    return j.dump(1);
}

Checkpoint checkpoint_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        if (j.at("format") != "largebatch-checkpoint") throw Error("checkpoint: unknown format");
        Checkpoint c;
        c.version = j.at("version").get<int>();
        if (c.version != kCheckpointVersion) throw Error("checkpoint: unsupported version " + std::to_string(c.version));
        // json objects are key-sorted; restore the echo order from config_entries.
        const auto& cfg = j.at("config");
        for (const auto& [k, v] : config_entries(Config{}))
            if (cfg.contains(k)) c.config.emplace_back(k, cfg.at(k).get<std::string>());
        c.iteration = j.at("iteration").get<std::uint64_t>();
        for (const auto& p : j.at("parameters"))
            c.parameters.emplace_back(p.at("name").get<std::string>(), tensor_from(p.at("tensor")));
        for (const auto& o : j.at("optimizer"))
            c.optimizer.push_back({o.at("name").get<std::string>(),
                                   {tensor_from(o.at("m")), tensor_from(o.at("delta")), o.at("t").get<std::uint64_t>()}});
        for (const auto& b : j.at("batchnorm"))
            c.batchnorm.push_back({b.at("name").get<std::string>(), optional_tensor_from(b.at("synced_mean")),
                                   optional_tensor_from(b.at("synced_var"))});
        return c;
    } catch (const json::exception& e) {
        throw Error(std::string("checkpoint: malformed document: ") + e.what());
    }
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << to_json(checkpoint) << '\n';
    if (!out) throw Error("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open checkpoint " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return checkpoint_from_json(buf.str());
}

}  // namespace largebatch
