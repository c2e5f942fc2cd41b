#include "imiwae/checkpoint.hpp"

#include <fstream>

#include "imiwae/errors.hpp"

namespace imiwae {

namespace {

constexpr int kCheckpointVersion = 1;

nlohmann::json mlp_to_json(const Mlp& net) {
    nlohmann::json j;
    j["layer_dims"] = net.layer_dims;
    nlohmann::json weights = nlohmann::json::array();
    nlohmann::json biases = nlohmann::json::array();
    for (size_t l = 0; l < net.weights.size(); ++l) {
        std::vector<double> w(net.weights[l].data(), net.weights[l].data() + net.weights[l].size());
        std::vector<double> b(net.biases[l].data(), net.biases[l].data() + net.biases[l].size());
        weights.push_back(w);
        biases.push_back(b);
    }
    j["weights"] = weights;
    j["biases"] = biases;
    return j;
}

Mlp mlp_from_json(const nlohmann::json& j) {
    Mlp net = Mlp::zeros(j.at("layer_dims").get<std::vector<int>>());
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    if (weights.size() != net.weights.size() || biases.size() != net.biases.size())
        throw ParseError("checkpoint: layer count mismatch");
    for (size_t l = 0; l < net.weights.size(); ++l) {
        auto w = weights[l].get<std::vector<double>>();
        auto b = biases[l].get<std::vector<double>>();
        if (static_cast<Eigen::Index>(w.size()) != net.weights[l].size() ||
            static_cast<Eigen::Index>(b.size()) != net.biases[l].size())
            throw ParseError("checkpoint: tensor size mismatch at layer " + std::to_string(l));
        std::copy(w.begin(), w.end(), net.weights[l].data());
        std::copy(b.begin(), b.end(), net.biases[l].data());
    }
    return net;
}

}  // namespace

nlohmann::json model_config_to_json(const ModelConfig& c) {
    return nlohmann::json{{"p", c.p},
                          {"kappa1", c.kappa1},
                          {"kappa2", c.kappa2},
                          {"hidden", c.hidden},
                          {"hidden_layers", c.hidden_layers},
                          {"miss_hidden", c.miss_hidden},
                          {"miss_linearity", to_string(c.miss_linearity)},
                          {"no_self_censoring", c.no_self_censoring},
                          {"K", c.K},
                          {"gamma_init", c.gamma_init},
                          {"mask_channel", c.mask_channel},
                          {"data_decoder", c.data_decoder}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.p = j.at("p").get<int>();
    c.kappa1 = j.value("kappa1", c.kappa1);
    c.kappa2 = j.value("kappa2", c.kappa2);
    c.hidden = j.value("hidden", c.hidden);
    c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
    c.miss_hidden = j.value("miss_hidden", c.miss_hidden);
    c.miss_linearity = linearity_from_string(j.value("miss_linearity", std::string("linear")));
    c.no_self_censoring = j.value("no_self_censoring", c.no_self_censoring);
    c.K = j.value("K", c.K);
    c.gamma_init = j.value("gamma_init", c.gamma_init);
    c.mask_channel = j.value("mask_channel", c.mask_channel);
    c.data_decoder = j.value("data_decoder", c.data_decoder);
    c.validate();
    return c;
}

void save_checkpoint(const std::string& path, const ModelParams& params,
                     std::optional<SeededRng::State> rng_state) {
    nlohmann::json j;
    j["format"] = "imiwae-checkpoint";
    j["version"] = kCheckpointVersion;
    j["config"] = model_config_to_json(params.config);
    j["raw_gamma"] = params.raw_gamma;
    j["enc_mu_z"] = mlp_to_json(params.enc_mu_z);
    j["enc_s_z"] = mlp_to_json(params.enc_s_z);
    if (params.config.kappa2 > 0) {
        j["enc_mu_zt"] = mlp_to_json(params.enc_mu_zt);
        j["enc_s_zt"] = mlp_to_json(params.enc_s_zt);
    }
    j["dec_mu_x"] = mlp_to_json(params.dec_mu_x);
    j["miss"] = mlp_to_json(params.miss);
    if (rng_state) {
        j["rng_state"] = {{"counter", rng_state->counter},
                          {"buf_index", rng_state->buf_index},
                          {"has_cached_normal", rng_state->has_cached_normal},
                          {"cached_normal", rng_state->cached_normal}};
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open checkpoint for writing: " + path);
    f << j.dump();
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open checkpoint: " + path);
    nlohmann::json j = nlohmann::json::parse(f, nullptr, true);
    if (j.value("format", std::string()) != "imiwae-checkpoint")
        throw ParseError("not an imiwae checkpoint: " + path);
    if (j.at("version").get<int>() != kCheckpointVersion)
        throw ParseError("unsupported checkpoint version in " + path);

    Checkpoint out;
    out.params.config = model_config_from_json(j.at("config"));
    out.params.raw_gamma = j.at("raw_gamma").get<double>();
    out.params.enc_mu_z = mlp_from_json(j.at("enc_mu_z"));
    out.params.enc_s_z = mlp_from_json(j.at("enc_s_z"));
    if (out.params.config.kappa2 > 0) {
        out.params.enc_mu_zt = mlp_from_json(j.at("enc_mu_zt"));
        out.params.enc_s_zt = mlp_from_json(j.at("enc_s_zt"));
    }
    out.params.dec_mu_x = mlp_from_json(j.at("dec_mu_x"));
    out.params.miss = mlp_from_json(j.at("miss"));
    if (j.contains("rng_state")) {
        SeededRng::State s;
        s.counter = j["rng_state"].at("counter").get<uint64_t>();
        s.buf_index = j["rng_state"].at("buf_index").get<int>();
        s.has_cached_normal = j["rng_state"].at("has_cached_normal").get<bool>();
        s.cached_normal = j["rng_state"].at("cached_normal").get<double>();
        out.rng_state = s;
    }
    return out;
}

}  // namespace imiwae
