#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "inkdiff/autoencoder.hpp"
#include "inkdiff/classifier.hpp"
#include "inkdiff/denoiser.hpp"
#include "inkdiff/schedule.hpp"

namespace inkdiff {

// strict object parsing: any key outside `allowed` is a usage error that
// lists the valid keys
void require_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                  const std::string& what);

nlohmann::json denoiser_config_to_json(const DenoiserConfig& cfg);
DenoiserConfig denoiser_config_from_json(const nlohmann::json& j);

nlohmann::json classifier_config_to_json(const ClassifierConfig& cfg);
ClassifierConfig classifier_config_from_json(const nlohmann::json& j);

nlohmann::json autoencoder_config_to_json(const AutoencoderConfig& cfg);
AutoencoderConfig autoencoder_config_from_json(const nlohmann::json& j);

nlohmann::json schedule_to_json(const NoiseSchedule& s);
NoiseSchedule schedule_from_json(const nlohmann::json& j);

} // namespace inkdiff
