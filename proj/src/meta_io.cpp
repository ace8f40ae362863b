#include "inkdiff/meta_io.hpp"

#include <algorithm>

#include "inkdiff/errors.hpp"

namespace inkdiff {

void require_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                  const std::string& what) {
    if (!j.is_object()) throw UsageError(what + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) != allowed.end()) continue;
        std::string keys;
        for (const std::string& k : allowed) keys += (keys.empty() ? "" : ", ") + k;
        throw UsageError(what + ": unknown key '" + it.key() + "' (valid keys: " + keys + ")");
    }
}

namespace {

template <typename T>
void pick(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace

nlohmann::json denoiser_config_to_json(const DenoiserConfig& cfg) {
    return {{"image_size", cfg.image_size}, {"in_channels", cfg.in_channels},
            {"channels", cfg.channels},     {"res_blocks", cfg.res_blocks},
            {"groups", cfg.groups},         {"temb_dim", cfg.temb_dim},
            {"embed_dim", cfg.embed_dim},   {"max_tokens", cfg.max_tokens}};
}

DenoiserConfig denoiser_config_from_json(const nlohmann::json& j) {
    require_keys(j, {"image_size", "in_channels", "channels", "res_blocks", "groups", "temb_dim",
                     "embed_dim", "max_tokens"},
                 "denoiser config");
    DenoiserConfig cfg;
    pick(j, "image_size", cfg.image_size);
    pick(j, "in_channels", cfg.in_channels);
    pick(j, "channels", cfg.channels);
    pick(j, "res_blocks", cfg.res_blocks);
    pick(j, "groups", cfg.groups);
    pick(j, "temb_dim", cfg.temb_dim);
    pick(j, "embed_dim", cfg.embed_dim);
    pick(j, "max_tokens", cfg.max_tokens);
    cfg.validate();
    return cfg;
}

nlohmann::json classifier_config_to_json(const ClassifierConfig& cfg) {
    return {{"image_size", cfg.image_size}, {"in_channels", cfg.in_channels},
            {"channels", cfg.channels},     {"feature_dim", cfg.feature_dim},
            {"classes", cfg.classes},       {"groups", cfg.groups}};
}

ClassifierConfig classifier_config_from_json(const nlohmann::json& j) {
    require_keys(j, {"image_size", "in_channels", "channels", "feature_dim", "classes", "groups"},
                 "classifier config");
    ClassifierConfig cfg;
    pick(j, "image_size", cfg.image_size);
    pick(j, "in_channels", cfg.in_channels);
    pick(j, "channels", cfg.channels);
    pick(j, "feature_dim", cfg.feature_dim);
    pick(j, "classes", cfg.classes);
    pick(j, "groups", cfg.groups);
    cfg.validate();
    return cfg;
}

nlohmann::json autoencoder_config_to_json(const AutoencoderConfig& cfg) {
    return {{"image_size", cfg.image_size},
            {"in_channels", cfg.in_channels},
            {"hidden", cfg.hidden},
            {"latent_channels", cfg.latent_channels},
            {"groups", cfg.groups}};
}

AutoencoderConfig autoencoder_config_from_json(const nlohmann::json& j) {
    require_keys(j, {"image_size", "in_channels", "hidden", "latent_channels", "groups"},
                 "autoencoder config");
    AutoencoderConfig cfg;
    pick(j, "image_size", cfg.image_size);
    pick(j, "in_channels", cfg.in_channels);
    pick(j, "hidden", cfg.hidden);
    pick(j, "latent_channels", cfg.latent_channels);
    pick(j, "groups", cfg.groups);
    cfg.validate();
    return cfg;
}

nlohmann::json schedule_to_json(const NoiseSchedule& s) {
    return {{"T", s.T},
            {"beta1", s.T > 0 ? s.beta.front() : 0.0},
            {"betaT", s.T > 0 ? s.beta.back() : 0.0},
            {"sigma", s.sigma_kind == SigmaKind::posterior ? "posterior" : "beta"}};
}

NoiseSchedule schedule_from_json(const nlohmann::json& j) {
    require_keys(j, {"T", "beta1", "betaT", "sigma"}, "schedule");
    int T = 1000;
    double b1 = 1e-4, bT = 0.02;
    std::string sigma = "beta";
    pick(j, "T", T);
    pick(j, "beta1", b1);
    pick(j, "betaT", bT);
    pick(j, "sigma", sigma);
    if (sigma != "beta" && sigma != "posterior")
        throw UsageError("schedule: sigma must be 'beta' or 'posterior'");
    return make_schedule(T, b1, bT, sigma == "posterior" ? SigmaKind::posterior : SigmaKind::beta_sqrt);
}

} // namespace inkdiff
