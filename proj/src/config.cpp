#include "mmcl/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace mmcl {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config: key '" + key + "' expects a boolean, got '" + value + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  T out;
  is >> out;
  if (is.fail() || !is.eof()) {
    throw ConfigError("config: key '" + key + "' has unparsable value '" + value + "'");
  }
  return out;
}

using Setter = std::function<void(TrainConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"batch_size", [](TrainConfig& c, const std::string& k, const std::string& v) { c.batch_size = parse_number<int>(k, v); }},
      {"embed_dim", [](TrainConfig& c, const std::string& k, const std::string& v) { c.embed_dim = parse_number<int>(k, v); }},
      {"lstm_hidden", [](TrainConfig& c, const std::string& k, const std::string& v) { c.lstm_hidden = parse_number<int>(k, v); }},
      {"heads", [](TrainConfig& c, const std::string& k, const std::string& v) { c.heads = parse_number<int>(k, v); }},
      {"gat_layers", [](TrainConfig& c, const std::string& k, const std::string& v) { c.gat_layers = parse_number<int>(k, v); }},
      {"tau", [](TrainConfig& c, const std::string& k, const std::string& v) { c.tau = parse_number<double>(k, v); }},
      {"label_smoothing", [](TrainConfig& c, const std::string& k, const std::string& v) { c.label_smoothing = parse_number<double>(k, v); }},
      {"learning_rate", [](TrainConfig& c, const std::string& k, const std::string& v) { c.learning_rate = parse_number<double>(k, v); }},
      {"max_epochs", [](TrainConfig& c, const std::string& k, const std::string& v) { c.max_epochs = parse_number<int>(k, v); }},
      {"patience", [](TrainConfig& c, const std::string& k, const std::string& v) { c.patience = parse_number<int>(k, v); }},
      {"seed", [](TrainConfig& c, const std::string& k, const std::string& v) { c.seed = parse_number<std::uint64_t>(k, v); }},
      {"dropout", [](TrainConfig& c, const std::string& k, const std::string& v) { c.dropout = parse_number<double>(k, v); }},
      {"vote_threshold", [](TrainConfig& c, const std::string& k, const std::string& v) { c.vote_threshold = parse_number<double>(k, v); }},
      {"knn_k", [](TrainConfig& c, const std::string& k, const std::string& v) { c.knn_k = parse_number<int>(k, v); }},
      {"negatives_per_anchor", [](TrainConfig& c, const std::string& k, const std::string& v) { c.negatives_per_anchor = parse_number<int>(k, v); }},
      {"slot_window", [](TrainConfig& c, const std::string& k, const std::string& v) { c.slot_window = parse_number<int>(k, v); }},
      {"gat_elu", [](TrainConfig& c, const std::string& k, const std::string& v) { c.gat_elu = parse_bool(k, v); }},
      {"gat_residual", [](TrainConfig& c, const std::string& k, const std::string& v) { c.gat_residual = parse_bool(k, v); }},
      {"dedup_dictionary", [](TrainConfig& c, const std::string& k, const std::string& v) { c.dedup_dictionary = parse_bool(k, v); }},
      {"enable_cucl", [](TrainConfig& c, const std::string& k, const std::string& v) { c.enable_cucl = parse_bool(k, v); }},
      {"enable_fucl", [](TrainConfig& c, const std::string& k, const std::string& v) { c.enable_fucl = parse_bool(k, v); }},
      {"enable_scl", [](TrainConfig& c, const std::string& k, const std::string& v) { c.enable_scl = parse_bool(k, v); }},
      {"enable_wcl", [](TrainConfig& c, const std::string& k, const std::string& v) { c.enable_wcl = parse_bool(k, v); }},
      {"enable_skl", [](TrainConfig& c, const std::string& k, const std::string& v) { c.enable_skl = parse_bool(k, v); }},
      {"enable_ikl", [](TrainConfig& c, const std::string& k, const std::string& v) { c.enable_ikl = parse_bool(k, v); }},
      {"weight_cucl", [](TrainConfig& c, const std::string& k, const std::string& v) { c.weight_cucl = parse_number<double>(k, v); }},
      {"weight_fucl", [](TrainConfig& c, const std::string& k, const std::string& v) { c.weight_fucl = parse_number<double>(k, v); }},
      {"weight_scl", [](TrainConfig& c, const std::string& k, const std::string& v) { c.weight_scl = parse_number<double>(k, v); }},
      {"weight_wcl", [](TrainConfig& c, const std::string& k, const std::string& v) { c.weight_wcl = parse_number<double>(k, v); }},
      {"weight_skl", [](TrainConfig& c, const std::string& k, const std::string& v) { c.weight_skl = parse_number<double>(k, v); }},
      {"weight_ikl", [](TrainConfig& c, const std::string& k, const std::string& v) { c.weight_ikl = parse_number<double>(k, v); }},
  };
  return table;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1 || embed_dim < 1 || lstm_hidden < 1 || heads < 1 ||
      gat_layers < 1 || max_epochs < 1) {
    throw ConfigError("config: sizes must be positive");
  }
  if (patience < 1) throw ConfigError("config: patience must be >= 1");
  if (tau <= 0.0) throw ConfigError("config: tau must be positive");
  if (learning_rate <= 0.0) throw ConfigError("config: learning_rate must be positive");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
    throw ConfigError("config: label_smoothing must be in [0,1)");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ConfigError("config: dropout must be in [0,1)");
  }
  if (vote_threshold <= 0.0 || vote_threshold >= 1.0) {
    throw ConfigError("config: vote_threshold must be in (0,1)");
  }
  if (knn_k < 0) throw ConfigError("config: knn_k must be >= 0");
  if (negatives_per_anchor < 0) {
    throw ConfigError("config: negatives_per_anchor must be >= 0");
  }
  if (slot_window < 0) throw ConfigError("config: slot_window must be >= 0");
  if ((2 * lstm_hidden) % heads != 0) {
    throw ConfigError("config: 2*lstm_hidden must be divisible by heads");
  }
}

TrainConfig parse_config_text(const std::string& text) {
  TrainConfig config;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = setters().find(key);
    if (it == setters().end()) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": unknown key '" + key + "'");
    }
    it->second(config, key, value);
  }
  config.validate();
  return config;
}

TrainConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string config_to_text(const TrainConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "batch_size = " << c.batch_size << "\n"
     << "embed_dim = " << c.embed_dim << "\n"
     << "lstm_hidden = " << c.lstm_hidden << "\n"
     << "heads = " << c.heads << "\n"
     << "gat_layers = " << c.gat_layers << "\n"
     << "tau = " << c.tau << "\n"
     << "label_smoothing = " << c.label_smoothing << "\n"
     << "learning_rate = " << c.learning_rate << "\n"
     << "max_epochs = " << c.max_epochs << "\n"
     << "patience = " << c.patience << "\n"
     << "seed = " << c.seed << "\n"
     << "dropout = " << c.dropout << "\n"
     << "vote_threshold = " << c.vote_threshold << "\n"
     << "knn_k = " << c.knn_k << "\n"
     << "negatives_per_anchor = " << c.negatives_per_anchor << "\n"
     << "slot_window = " << c.slot_window << "\n"
     << "gat_elu = " << (c.gat_elu ? "true" : "false") << "\n"
     << "gat_residual = " << (c.gat_residual ? "true" : "false") << "\n"
     << "dedup_dictionary = " << (c.dedup_dictionary ? "true" : "false") << "\n"
     << "enable_cucl = " << (c.enable_cucl ? "true" : "false") << "\n"
     << "enable_fucl = " << (c.enable_fucl ? "true" : "false") << "\n"
     << "enable_scl = " << (c.enable_scl ? "true" : "false") << "\n"
     << "enable_wcl = " << (c.enable_wcl ? "true" : "false") << "\n"
     << "enable_skl = " << (c.enable_skl ? "true" : "false") << "\n"
     << "enable_ikl = " << (c.enable_ikl ? "true" : "false") << "\n"
     << "weight_cucl = " << c.weight_cucl << "\n"
     << "weight_fucl = " << c.weight_fucl << "\n"
     << "weight_scl = " << c.weight_scl << "\n"
     << "weight_wcl = " << c.weight_wcl << "\n"
     << "weight_skl = " << c.weight_skl << "\n"
     << "weight_ikl = " << c.weight_ikl << "\n";
  return os.str();
}

}  // namespace mmcl
