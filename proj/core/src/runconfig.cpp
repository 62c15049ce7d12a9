#include "sgcl/runconfig.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace sgcl {

namespace {

std::string trim(const std::string& s) {
  std::size_t begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  std::size_t end = s.find_last_not_of(" \t");
  return s.substr(begin, end - begin + 1);
}

int parse_int(const std::string& key, const std::string& value) {
  int out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw ConfigError("invalid integer for " + key + ": '" + value + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw ConfigError("invalid integer for " + key + ": '" + value + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double out = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("invalid number for " + key + ": '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("invalid boolean for " + key + ": '" + value + "'");
}

std::vector<int> parse_layer_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  if (trim(value).empty()) return out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_int(key, trim(item)));
  return out;
}

struct Field {
  RunConfig::Entry entry;
  std::function<void(RunConfig&, const std::string&)> apply;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {{"encoder", "num_layers", "transformer layer count l", "4"},
       [](RunConfig& c, const std::string& v) { c.encoder.num_layers = parse_int("num_layers", v); }},
      {{"encoder", "hidden_size", "hidden width d", "64"},
       [](RunConfig& c, const std::string& v) { c.encoder.hidden_size = parse_int("hidden_size", v); }},
      {{"encoder", "num_heads", "attention heads", "4"},
       [](RunConfig& c, const std::string& v) { c.encoder.num_heads = parse_int("num_heads", v); }},
      {{"encoder", "ffn_size", "feed-forward width", "128"},
       [](RunConfig& c, const std::string& v) { c.encoder.ffn_size = parse_int("ffn_size", v); }},
      {{"encoder", "max_seq_len", "token cap incl. [CLS]/[SEP]", "64"},
       [](RunConfig& c, const std::string& v) { c.encoder.max_seq_len = parse_int("max_seq_len", v); }},
      {{"encoder", "dropout_rate", "dropout in [0,1)", "0.1"},
       [](RunConfig& c, const std::string& v) { c.encoder.dropout_rate = parse_double("dropout_rate", v); }},
      {{"train", "batch_size", "sentences per step", "16"},
       [](RunConfig& c, const std::string& v) { c.train.batch_size = parse_int("batch_size", v); }},
      {{"train", "learning_rate", "AdamW learning rate", "5e-05"},
       [](RunConfig& c, const std::string& v) { c.train.learning_rate = parse_double("learning_rate", v); }},
      {{"train", "beta1", "AdamW beta1", "0.9"},
       [](RunConfig& c, const std::string& v) { c.train.beta1 = parse_double("beta1", v); }},
      {{"train", "beta2", "AdamW beta2", "0.9"},
       [](RunConfig& c, const std::string& v) { c.train.beta2 = parse_double("beta2", v); }},
      {{"train", "weight_decay", "decoupled weight decay", "0.01"},
       [](RunConfig& c, const std::string& v) { c.train.weight_decay = parse_double("weight_decay", v); }},
      {{"train", "adam_eps", "AdamW epsilon", "1e-08"},
       [](RunConfig& c, const std::string& v) { c.train.adam_eps = parse_double("adam_eps", v); }},
      {{"train", "epochs", "passes over the corpus", "1"},
       [](RunConfig& c, const std::string& v) { c.train.epochs = parse_int("epochs", v); }},
      {{"train", "eval_step", "steps between validations", "50"},
       [](RunConfig& c, const std::string& v) { c.train.eval_step = parse_int("eval_step", v); }},
      {{"train", "endurance", "non-improving evals before stop", "10"},
       [](RunConfig& c, const std::string& v) { c.train.endurance = parse_int("endurance", v); }},
      {{"train", "seed", "run seed", "1"},
       [](RunConfig& c, const std::string& v) {
         c.train.seed = parse_u64("seed", v);
         c.encoder.seed = c.train.seed;
       }},
      {{"loss", "variant", "base|opt1|opt2|opt3", "opt3"},
       [](RunConfig& c, const std::string& v) {
         try {
           c.train.variant = variant_from_string(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(e.what());
         }
       }},
      {{"loss", "temperature", "softmax temperature tau", "0.01"},
       [](RunConfig& c, const std::string& v) { c.train.temperature = parse_double("temperature", v); }},
      {{"loss", "reg_weight", "regularizer weight lambda", "0.1"},
       [](RunConfig& c, const std::string& v) { c.train.reg_weight = parse_double("reg_weight", v); }},
      {{"loss", "pooling", "view pooling: max|mean|cls", "max"},
       [](RunConfig& c, const std::string& v) {
         try {
           c.train.pooling = pooling_from_string(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(e.what());
         }
       }},
      {{"loss", "sampler_layers", "eligible view layers, comma list (empty = all)", ""},
       [](RunConfig& c, const std::string& v) { c.train.sampler_layers = parse_layer_list("sampler_layers", v); }},
      {{"loss", "projection_hidden", "head hidden width (0 = 4*d)", "0"},
       [](RunConfig& c, const std::string& v) { c.projection_hidden = parse_int("projection_hidden", v); }},
      {{"loss", "projection_out", "head output width (0 = d)", "0"},
       [](RunConfig& c, const std::string& v) { c.projection_out = parse_int("projection_out", v); }},
      {{"loss", "no_projection_head", "use the identity map as f", "false"},
       [](RunConfig& c, const std::string& v) { c.no_projection_head = parse_bool("no_projection_head", v); }},
      {{"data", "train_corpus", "training sentences (raw lines or pair TSV)", ""},
       [](RunConfig& c, const std::string& v) { c.train_corpus = v; }},
      {{"data", "valid_tsv", "validation pair TSV", ""},
       [](RunConfig& c, const std::string& v) { c.valid_tsv = v; }},
      {{"data", "test_tsv", "test pair TSV (optional)", ""},
       [](RunConfig& c, const std::string& v) { c.test_tsv = v; }},
      {{"data", "min_count", "vocabulary frequency threshold", "1"},
       [](RunConfig& c, const std::string& v) { c.min_count = parse_int("min_count", v); }},
      {{"output", "out_dir", "directory for reports, logs and checkpoints", "out"},
       [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
  };
  return table;
}

}  // namespace

std::vector<RunConfig::Entry> RunConfig::registry() {
  std::vector<Entry> out;
  for (const auto& f : fields()) out.push_back(f.entry);
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.entry.key == key) {
      f.apply(*this, value);
      return;
    }
  }
  throw ConfigError("unknown configuration key: '" + key + "'");
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    if (stripped.front() == '[' && stripped.back() == ']') {
      section = trim(stripped.substr(1, stripped.size() - 2));
      bool known = false;
      for (const auto& f : fields()) known = known || f.entry.section == section;
      if (!known)
        throw ConfigError("unknown config section: '" + section + "' at " +
                          path + ":" + std::to_string(line_no));
      continue;
    }
    auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected key = value at " + path + ":" +
                        std::to_string(line_no));
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    bool applied = false;
    for (const auto& f : fields()) {
      if (f.entry.key == key) {
        if (!section.empty() && f.entry.section != section)
          throw ConfigError("key '" + key + "' does not belong to section [" +
                            section + "] at " + path + ":" +
                            std::to_string(line_no));
        f.apply(*this, value);
        applied = true;
        break;
      }
    }
    if (!applied)
      throw ConfigError("unknown configuration key: '" + key + "' at " + path +
                        ":" + std::to_string(line_no));
  }
}

HeadConfig RunConfig::head_config() const {
  HeadConfig head;
  head.hidden = projection_hidden;
  head.out = projection_out;
  head.identity = no_projection_head;
  head.seed = train.seed + 0x5e554ull;
  return head;
}

LossConfig RunConfig::loss_config() const {
  return {train.variant, train.temperature, train.reg_weight, train.pooling,
          train.sampler_for(encoder.num_layers)};
}

}  // namespace sgcl
