#include "rfm/estimator.hpp"

#include <set>

#include "json.hpp"

namespace rfm {

void EstimatorConfig::validate() const {
    if (latent_dim < 1 || cond_dim < 1 || hidden_dim < 1 || layers < 0 || heads < 1 ||
        ffn_dim < 1 || max_seq_len < 1 || regulate_ratio < 1)
        throw ConfigError("estimator config: all dimensions must be positive (layers may be 0)");
    if (hidden_dim % 2 != 0)
        throw ConfigError("estimator config: hidden_dim must be even, got " +
                          std::to_string(hidden_dim));
    if (hidden_dim % heads != 0)
        throw ConfigError("estimator config: hidden_dim " + std::to_string(hidden_dim) +
                          " not divisible by heads " + std::to_string(heads));
    if (ffn_dim < hidden_dim)
        throw ConfigError("estimator config: ffn_dim " + std::to_string(ffn_dim) +
                          " must be >= hidden_dim " + std::to_string(hidden_dim));
    if (cross_attention)
        throw ConfigError("estimator config: cross_attention is reserved and must be false");
}

EstimatorConfig estimator_config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("estimator config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("estimator config: expected a JSON object");
    static const std::set<std::string> known = {"latent_dim", "cond_dim",    "hidden_dim",
                                                "layers",     "heads",       "ffn_dim",
                                                "max_seq_len", "regulate_ratio", "cross_attention"};
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw ConfigError("estimator config: unknown key \"" + key + "\"");
    EstimatorConfig cfg;
    try {
        if (j.contains("latent_dim")) cfg.latent_dim = j.at("latent_dim").get<int>();
        if (j.contains("cond_dim")) cfg.cond_dim = j.at("cond_dim").get<int>();
        if (j.contains("hidden_dim")) cfg.hidden_dim = j.at("hidden_dim").get<int>();
        if (j.contains("layers")) cfg.layers = j.at("layers").get<int>();
        if (j.contains("heads")) cfg.heads = j.at("heads").get<int>();
        if (j.contains("ffn_dim")) cfg.ffn_dim = j.at("ffn_dim").get<int>();
        if (j.contains("max_seq_len")) cfg.max_seq_len = j.at("max_seq_len").get<int>();
        if (j.contains("regulate_ratio")) cfg.regulate_ratio = j.at("regulate_ratio").get<int>();
        if (j.contains("cross_attention")) cfg.cross_attention = j.at("cross_attention").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("estimator config: bad field type: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string estimator_config_to_json(const EstimatorConfig& cfg) {
    nlohmann::json j;
    j["latent_dim"] = cfg.latent_dim;
    j["cond_dim"] = cfg.cond_dim;
    j["hidden_dim"] = cfg.hidden_dim;
    j["layers"] = cfg.layers;
    j["heads"] = cfg.heads;
    j["ffn_dim"] = cfg.ffn_dim;
    j["max_seq_len"] = cfg.max_seq_len;
    j["regulate_ratio"] = cfg.regulate_ratio;
    j["cross_attention"] = cfg.cross_attention;
    return j.dump();
}

// Closed-form count for the layout in init_estimator. With H = hidden_dim,
// F = ffn_dim, M = max_seq_len, K = 3:
//   conv(cin -> cout):   cout*cin*K + cout
//   linear(in -> out):   in*out + out
//   norm(H):             2H
//   stem:    conv(D_x -> H/2) + conv(H/2 -> H/2) + conv(D_c -> H/2) + conv(H/2 -> H/2)
//   time:    2 * linear(H -> H)
//   pos:     (M + 1) * H
//   block:   2*norm(H) + 4*linear(H -> H) + conv(H -> F) + conv(F -> H)
//   head:    norm(H) + conv(H -> D_x)
long count_params(const EstimatorConfig& cfg) {
    cfg.validate();
    const long H = cfg.hidden_dim, half = H / 2, K = 3;
    const long Dx = cfg.latent_dim, Dc = cfg.cond_dim, F = cfg.ffn_dim;
    auto conv = [K](long cin, long cout) { return cout * cin * K + cout; };
    auto lin = [](long in, long out) { return in * out + out; };
    const long stem = conv(Dx, half) + conv(half, half) + conv(Dc, half) + conv(half, half);
    const long time = 2 * lin(H, H);
    const long pos = static_cast<long>(cfg.max_seq_len + 1) * H;
    const long block = 2 * (2 * H) + 4 * lin(H, H) + conv(H, F) + conv(F, H);
    const long head = 2 * H + conv(H, Dx);
    return stem + time + pos + cfg.layers * block + head;
}

}  // namespace rfm
