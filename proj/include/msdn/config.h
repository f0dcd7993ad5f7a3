#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "msdn/dataset.h"
#include "msdn/training.h"
#include "msdn/zsl_eval.h"

namespace msdn {

// Flat `key = value` text. Blank lines and lines starting with '#' are
// ignored. Duplicate keys and lines without '=' raise ArgumentError.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& path);

// Training run settings. Keys mirror the TrainConfig/LossConfig field
// names; alpha1/alpha2 set the fusion used when a run is evaluated.
struct RunConfig {
  TrainConfig train;
  PredictConfig predict;
};

// Unknown keys and malformed values raise ArgumentError.
RunConfig run_config_from(const KeyValues& kv);
SynthSpec synth_spec_from(const KeyValues& kv);

std::string to_key_values(const RunConfig& cfg);
std::string to_key_values(const SynthSpec& spec);

}  // namespace msdn
