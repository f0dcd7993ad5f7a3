#include "msdn/config.h"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "msdn/errors.h"

namespace msdn {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* begin = value.data();
  const char* end = begin + value.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || ptr != end) {
    throw ArgumentError("config key '" + key + "': cannot parse '" + value + "' as a number");
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

using Setter = std::function<void(const std::string& key, const std::string& value)>;

void apply(const KeyValues& kv, const std::map<std::string, Setter>& setters, const char* what) {
  for (const auto& [key, value] : kv) {
    auto it = setters.find(key);
    if (it == setters.end()) throw ArgumentError(std::string("unknown ") + what + " key '" + key + "'");
    it->second(key, value);
  }
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ArgumentError("line " + std::to_string(line_no) + ": expected key=value, got '" + t + "'");
    }
    std::string key = trim(std::string_view(t).substr(0, eq));
    std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) throw ArgumentError("line " + std::to_string(line_no) + ": empty key");
    if (!kv.emplace(key, value).second) {
      throw ArgumentError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_key_values(buf.str());
}

RunConfig run_config_from(const KeyValues& kv) {
  RunConfig cfg;
  auto& t = cfg.train;
  auto& l = cfg.train.loss;
  auto real = [](double& field) {
    return [&field](const std::string& k, const std::string& v) { field = parse_number<double>(k, v); };
  };
  auto integer = [](int& field) {
    return [&field](const std::string& k, const std::string& v) { field = parse_number<int>(k, v); };
  };
  const std::map<std::string, Setter> setters = {
      {"learning_rate", real(t.learning_rate)},
      {"batch_size", integer(t.batch_size)},
      {"momentum", real(t.momentum)},
      {"weight_decay", real(t.weight_decay)},
      {"epochs", integer(t.epochs)},
      {"seed", [&t](const std::string& k, const std::string& v) { t.seed = parse_number<std::uint64_t>(k, v); }},
      {"rms_decay", real(t.rms_decay)},
      {"epsilon_opt", real(t.epsilon_opt)},
      {"lambda_cal", real(l.lambda_cal)},
      {"lambda_distill", real(l.lambda_distill)},
      {"epsilon_kl", real(l.epsilon_kl)},
      {"calibration_sign", [&l](const std::string&, const std::string& v) { l.calibration_sign = parse_calibration_sign(v); }},
      {"distill_terms", [&l](const std::string&, const std::string& v) { l.distill_terms = parse_distill_terms(v); }},
      {"branches", [&l](const std::string&, const std::string& v) { l.branches = parse_branches(v); }},
      {"alpha1", real(cfg.predict.alpha1)},
      {"alpha2", real(cfg.predict.alpha2)},
  };
  apply(kv, setters, "run config");
  cfg.train.validate();
  cfg.predict.validate();
  return cfg;
}

SynthSpec synth_spec_from(const KeyValues& kv) {
  SynthSpec spec;
  auto integer = [](int& field) {
    return [&field](const std::string& k, const std::string& v) { field = parse_number<int>(k, v); };
  };
  const std::map<std::string, Setter> setters = {
      {"num_seen", integer(spec.num_seen)},
      {"num_unseen", integer(spec.num_unseen)},
      {"num_attributes", integer(spec.num_attributes)},
      {"num_regions", integer(spec.num_regions)},
      {"dim_visual", integer(spec.dim_visual)},
      {"dim_attribute", integer(spec.dim_attribute)},
      {"samples_per_class", integer(spec.samples_per_class)},
      {"noise_std", [&spec](const std::string& k, const std::string& v) { spec.noise_std = parse_number<double>(k, v); }},
      {"test_seen_fraction",
       [&spec](const std::string& k, const std::string& v) { spec.test_seen_fraction = parse_number<double>(k, v); }},
      {"seed", [&spec](const std::string& k, const std::string& v) { spec.seed = parse_number<std::uint64_t>(k, v); }},
  };
  apply(kv, setters, "synthetic spec");
  validate_synth_spec(spec);
  return spec;
}

std::string to_key_values(const RunConfig& cfg) {
  const auto& t = cfg.train;
  const auto& l = cfg.train.loss;
  std::ostringstream out;
  out << "learning_rate = " << format_double(t.learning_rate) << "\n"
      << "batch_size = " << t.batch_size << "\n"
      << "momentum = " << format_double(t.momentum) << "\n"
      << "weight_decay = " << format_double(t.weight_decay) << "\n"
      << "epochs = " << t.epochs << "\n"
      << "seed = " << t.seed << "\n"
      << "rms_decay = " << format_double(t.rms_decay) << "\n"
      << "epsilon_opt = " << format_double(t.epsilon_opt) << "\n"
      << "lambda_cal = " << format_double(l.lambda_cal) << "\n"
      << "lambda_distill = " << format_double(l.lambda_distill) << "\n"
      << "epsilon_kl = " << format_double(l.epsilon_kl) << "\n"
      << "calibration_sign = " << to_string(l.calibration_sign) << "\n"
      << "distill_terms = " << to_string(l.distill_terms) << "\n"
      << "branches = " << to_string(l.branches) << "\n"
      << "alpha1 = " << format_double(cfg.predict.alpha1) << "\n"
      << "alpha2 = " << format_double(cfg.predict.alpha2) << "\n";
  return out.str();
}

std::string to_key_values(const SynthSpec& spec) {
  std::ostringstream out;
  out << "num_seen = " << spec.num_seen << "\n"
      << "num_unseen = " << spec.num_unseen << "\n"
      << "num_attributes = " << spec.num_attributes << "\n"
      << "num_regions = " << spec.num_regions << "\n"
      << "dim_visual = " << spec.dim_visual << "\n"
      << "dim_attribute = " << spec.dim_attribute << "\n"
      << "samples_per_class = " << spec.samples_per_class << "\n"
      << "noise_std = " << format_double(spec.noise_std) << "\n"
      << "test_seen_fraction = " << format_double(spec.test_seen_fraction) << "\n"
      << "seed = " << spec.seed << "\n";
  return out.str();
}

}  // namespace msdn
