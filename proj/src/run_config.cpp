#include "udkit/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace udkit {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("key '" + key + "': '" + value + "' is not a valid number");
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) throw ConfigError("key '" + key + "': '" + value + "' is not a valid number");
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value,
                                  const std::filesystem::path& base)>;

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  std::filesystem::path p(value);
  return p.is_absolute() || base.empty() ? p : (base / p).lexically_normal();
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto dbl = [&t](const char* key, double TrainConfig::*field) {
      t[key] = [field](RunConfig& c, const std::string& k, const std::string& v, const auto&) {
        c.train.*field = parse_double(k, v);
      };
    };
    auto enc = [&t](const char* key, int EncoderConfig::*field) {
      t[key] = [field](RunConfig& c, const std::string& k, const std::string& v, const auto&) {
        c.model.encoder.*field = parse_number<int>(k, v);
      };
    };
    t["train"] = [](RunConfig& c, const std::string&, const std::string& v, const std::filesystem::path& base) {
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) c.train_files.push_back(resolve(base, item));
      }
      if (c.train_files.empty()) throw ConfigError("key 'train' lists no files");
    };
    t["dev"] = [](RunConfig& c, const std::string&, const std::string& v, const auto& base) {
      c.dev_file = resolve(base, v);
    };
    t["vocab"] = [](RunConfig& c, const std::string&, const std::string& v, const auto& base) {
      c.vocab_file = resolve(base, v);
    };
    t["output_dir"] = [](RunConfig& c, const std::string&, const std::string& v, const auto& base) {
      c.output_dir = resolve(base, v);
    };
    dbl("base_lr", &TrainConfig::base_lr);
    dbl("encoder_lr", &TrainConfig::encoder_lr);
    dbl("mask_prob", &TrainConfig::mask_prob);
    dbl("label_smoothing", &TrainConfig::label_smoothing);
    dbl("dropout", &TrainConfig::dropout);
    dbl("encoder_dropout", &TrainConfig::encoder_dropout);
    dbl("layer_dropout", &TrainConfig::layer_dropout);
    dbl("weight_decay", &TrainConfig::weight_decay);
    dbl("beta1", &TrainConfig::beta1);
    dbl("beta2", &TrainConfig::beta2);
    dbl("grad_clip", &TrainConfig::grad_clip);
    dbl("length_fuzz", &TrainConfig::length_fuzz);
    t["warmup_steps"] = [](RunConfig& c, const std::string& k, const std::string& v, const auto&) {
      c.train.warmup_steps = parse_number<long>(k, v);
    };
    t["batch_size"] = [](RunConfig& c, const std::string& k, const std::string& v, const auto&) {
      c.train.batch_size = parse_number<std::size_t>(k, v);
    };
    t["epochs"] = [](RunConfig& c, const std::string& k, const std::string& v, const auto&) {
      c.train.epochs = parse_number<int>(k, v);
    };
    t["seed"] = [](RunConfig& c, const std::string& k, const std::string& v, const auto&) {
      c.train.seed = parse_number<std::uint64_t>(k, v);
    };
    enc("num_layers", &EncoderConfig::num_layers);
    enc("num_heads", &EncoderConfig::num_heads);
    enc("hidden", &EncoderConfig::hidden);
    enc("feedforward", &EncoderConfig::feedforward);
    enc("max_positions", &EncoderConfig::max_positions);
    t["arc_dim"] = [](RunConfig& c, const std::string& k, const std::string& v, const auto&) {
      c.model.parser.arc = parse_number<int>(k, v);
    };
    t["tag_dim"] = [](RunConfig& c, const std::string& k, const std::string& v, const auto&) {
      c.model.parser.tag = parse_number<int>(k, v);
    };
    t["parser_preset"] = [](RunConfig& c, const std::string& k, const std::string& v, const auto&) {
      if (v == "table") {
        c.model.parser = ParserDims::table_preset();
      } else if (v == "prose") {
        c.model.parser = ParserDims::prose_preset();
      } else {
        throw ConfigError("key '" + k + "': expected 'table' or 'prose', got '" + v + "'");
      }
    };
    return t;
  }();
  return table;
}

}  // namespace

std::vector<std::string> run_config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir) {
  RunConfig c;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string raw;
  for (std::size_t line_no = 1; std::getline(in, raw); ++line_no) {
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "key '" + key + "' given twice");
    if (value.empty()) throw ConfigError(where + "key '" + key + "' has no value");
    try {
      it->second(c, key, value, base_dir);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  for (const char* key : {"train", "vocab", "output_dir"}) {
    if (!seen.count(key)) throw ConfigError(std::string("missing required key '") + key + "'");
  }
  c.model.encoder.attention_dropout = c.train.encoder_dropout;
  c.model.encoder.hidden_dropout = c.train.encoder_dropout;
  try {
    c.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str(), path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace udkit
