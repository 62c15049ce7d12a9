#include "sgcl/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace sgcl {

namespace {

constexpr char kMagic[4] = {'S', 'G', 'E', '1'};
constexpr std::uint32_t kVersion = 1;

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    table[i] = c;
  }
  return table;
}

const std::array<std::uint32_t, 256>& crc_table() {
  static const auto table = make_crc_table();
  return table;
}

class ByteWriter {
 public:
  void raw(const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    bytes_.insert(bytes_.end(), p, p + size);
  }
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    raw(b, 4);
  }
  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    raw(b, 8);
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  const std::vector<unsigned char>& bytes() const { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<unsigned char> bytes)
      : bytes_(std::move(bytes)) {}

  void raw(void* out, std::size_t size) {
    if (pos_ + size > bytes_.size())
      throw std::runtime_error("checkpoint truncated");
    std::memcpy(out, bytes_.data() + pos_, size);
    pos_ += size;
  }
  std::uint32_t u32() {
    unsigned char b[4];
    raw(b, 4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::uint64_t u64() {
    unsigned char b[8];
    raw(b, 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  std::size_t position() const { return pos_; }
  std::size_t size() const { return bytes_.size(); }
  std::span<const unsigned char> prefix(std::size_t n) const {
    return {bytes_.data(), n};
  }

 private:
  std::vector<unsigned char> bytes_;
  std::size_t pos_ = 0;
};

std::string format_double(double v) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", v);
  return buffer;
}

std::string header_text(const Checkpoint& c) {
  std::ostringstream out;
  out << "encoder.num_layers=" << c.config.num_layers << '\n'
      << "encoder.hidden_size=" << c.config.hidden_size << '\n'
      << "encoder.num_heads=" << c.config.num_heads << '\n'
      << "encoder.ffn_size=" << c.config.ffn_size << '\n'
      << "encoder.vocab_size=" << c.config.vocab_size << '\n'
      << "encoder.max_seq_len=" << c.config.max_seq_len << '\n'
      << "encoder.dropout_rate=" << format_double(c.config.dropout_rate) << '\n'
      << "encoder.seed=" << c.config.seed << '\n'
      << "train.batch_size=" << c.train_config.batch_size << '\n'
      << "train.learning_rate=" << format_double(c.train_config.learning_rate) << '\n'
      << "train.beta1=" << format_double(c.train_config.beta1) << '\n'
      << "train.beta2=" << format_double(c.train_config.beta2) << '\n'
      << "train.weight_decay=" << format_double(c.train_config.weight_decay) << '\n'
      << "train.adam_eps=" << format_double(c.train_config.adam_eps) << '\n'
      << "train.epochs=" << c.train_config.epochs << '\n'
      << "train.eval_step=" << c.train_config.eval_step << '\n'
      << "train.endurance=" << c.train_config.endurance << '\n'
      << "train.temperature=" << format_double(c.train_config.temperature) << '\n'
      << "train.reg_weight=" << format_double(c.train_config.reg_weight) << '\n'
      << "train.seed=" << c.train_config.seed << '\n'
      << "train.variant=" << to_string(c.train_config.variant) << '\n'
      << "train.pooling=" << to_string(c.train_config.pooling) << '\n';
  out << "train.sampler_layers=";
  for (std::size_t i = 0; i < c.train_config.sampler_layers.size(); ++i)
    out << (i ? "," : "") << c.train_config.sampler_layers[i];
  out << '\n';
  out << "best_metric=" << format_double(c.best_metric) << '\n';
  out << "vocab.size=" << c.vocab.size() << '\n';
  for (int i = 0; i < c.vocab.size(); ++i)
    out << "vocab." << i << '=' << c.vocab.id_to_token[static_cast<std::size_t>(i)]
        << '\n';
  return out.str();
}

std::map<std::string, std::string> parse_header(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("malformed checkpoint header line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

const std::string& header_get(const std::map<std::string, std::string>& kv,
                              const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end())
    throw std::runtime_error("checkpoint header missing key: " + key);
  return it->second;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(std::stoi(item));
  return out;
}

}  // namespace

std::uint32_t crc32(std::span<const unsigned char> bytes) {
  const auto& table = crc_table();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (unsigned char b : bytes) crc = table[(crc ^ b) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

Checkpoint make_checkpoint(const EncoderParams& tuned, const Vocab& vocab,
                           const TrainConfig& train_config, double best_metric) {
  Checkpoint c;
  c.config = tuned.config;
  c.vocab = vocab;
  c.train_config = train_config;
  c.best_metric = best_metric;
  c.tuned.reserve(tuned.params.size());
  for (const auto& p : tuned.params)
    c.tuned.push_back({p.name, p.tensor.detach()});
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  ByteWriter w;
  w.raw(kMagic, 4);
  w.u32(checkpoint.version);
  w.str(header_text(checkpoint));
  w.u32(static_cast<std::uint32_t>(checkpoint.tuned.size()));
  for (const auto& p : checkpoint.tuned) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.tensor.rank()));
    for (auto e : p.tensor.shape()) w.u64(static_cast<std::uint64_t>(e));
    for (double v : p.tensor.values()) w.f64(v);
  }
  const std::uint32_t crc = crc32(w.bytes());
  w.u32(crc);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(w.bytes().data()),
            static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::vector<unsigned char> bytes(
      (std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12) throw std::runtime_error("checkpoint truncated");

  ByteReader r(std::move(bytes));
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint file (bad magic)");

  Checkpoint c;
  c.version = r.u32();
  if (c.version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(c.version));

  const std::string header = r.str();
  const std::uint32_t tensor_count = r.u32();
  for (std::uint32_t t = 0; t < tensor_count; ++t) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    Shape shape;
    std::int64_t numel = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      shape.push_back(static_cast<std::int64_t>(r.u64()));
      numel *= shape.back();
    }
    if (numel <= 0 || numel > (1ll << 32))
      throw std::runtime_error("checkpoint tensor has invalid shape: " + name);
    std::vector<double> values(static_cast<std::size_t>(numel));
    for (auto& v : values) v = r.f64();
    c.tuned.push_back(
        {std::move(name), Tensor::from_values(std::move(shape), std::move(values))});
  }

  const std::size_t payload_end = r.position();
  const std::uint32_t stored_crc = r.u32();
  if (r.position() != r.size())
    throw std::runtime_error("checkpoint has trailing bytes");
  if (crc32(r.prefix(payload_end)) != stored_crc)
    throw std::runtime_error("checkpoint checksum mismatch");

  auto kv = parse_header(header);
  c.config.num_layers = std::stoi(header_get(kv, "encoder.num_layers"));
  c.config.hidden_size = std::stoi(header_get(kv, "encoder.hidden_size"));
  c.config.num_heads = std::stoi(header_get(kv, "encoder.num_heads"));
  c.config.ffn_size = std::stoi(header_get(kv, "encoder.ffn_size"));
  c.config.vocab_size = std::stoi(header_get(kv, "encoder.vocab_size"));
  c.config.max_seq_len = std::stoi(header_get(kv, "encoder.max_seq_len"));
  c.config.dropout_rate = std::stod(header_get(kv, "encoder.dropout_rate"));
  c.config.seed = std::stoull(header_get(kv, "encoder.seed"));
  c.train_config.batch_size = std::stoi(header_get(kv, "train.batch_size"));
  c.train_config.learning_rate = std::stod(header_get(kv, "train.learning_rate"));
  c.train_config.beta1 = std::stod(header_get(kv, "train.beta1"));
  c.train_config.beta2 = std::stod(header_get(kv, "train.beta2"));
  c.train_config.weight_decay = std::stod(header_get(kv, "train.weight_decay"));
  c.train_config.adam_eps = std::stod(header_get(kv, "train.adam_eps"));
  c.train_config.epochs = std::stoi(header_get(kv, "train.epochs"));
  c.train_config.eval_step = std::stoi(header_get(kv, "train.eval_step"));
  c.train_config.endurance = std::stoi(header_get(kv, "train.endurance"));
  c.train_config.temperature = std::stod(header_get(kv, "train.temperature"));
  c.train_config.reg_weight = std::stod(header_get(kv, "train.reg_weight"));
  c.train_config.seed = std::stoull(header_get(kv, "train.seed"));
  c.train_config.variant = variant_from_string(header_get(kv, "train.variant"));
  c.train_config.pooling = pooling_from_string(header_get(kv, "train.pooling"));
  c.train_config.sampler_layers =
      parse_int_list(header_get(kv, "train.sampler_layers"));
  c.best_metric = std::stod(header_get(kv, "best_metric"));

  const int vocab_size = std::stoi(header_get(kv, "vocab.size"));
  for (int i = 0; i < vocab_size; ++i) {
    const std::string& token = header_get(kv, "vocab." + std::to_string(i));
    c.vocab.token_to_id.emplace(token, i);
    c.vocab.id_to_token.push_back(token);
  }
  return c;
}

EncoderParams params_from_checkpoint(const Checkpoint& checkpoint) {
  check_layout(checkpoint, checkpoint.config);
  EncoderParams params;
  params.config = checkpoint.config;
  params.role = "tuned";
  params.params.reserve(checkpoint.tuned.size());
  for (const auto& p : checkpoint.tuned)
    params.params.push_back({p.name, p.tensor.detach()});
  return params;
}

void check_layout(const Checkpoint& checkpoint, const EncoderConfig& expected) {
  EncoderConfig reference_config = expected;
  reference_config.validate();
  EncoderParams reference = init_params(reference_config);
  const std::size_t n =
      std::min(reference.params.size(), checkpoint.tuned.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& want = reference.params[i];
    const auto& got = checkpoint.tuned[i];
    if (want.name != got.name)
      throw std::runtime_error("checkpoint layout mismatch at tensor '" +
                               got.name + "' (expected '" + want.name + "')");
    if (want.tensor.shape() != got.tensor.shape())
      throw std::runtime_error("checkpoint layout mismatch at tensor '" +
                               got.name + "': shape differs");
  }
  if (reference.params.size() != checkpoint.tuned.size()) {
    const auto& extra = reference.params.size() > checkpoint.tuned.size()
                            ? reference.params[n].name
                            : checkpoint.tuned[n].name;
    throw std::runtime_error("checkpoint layout mismatch at tensor '" + extra +
                             "': tensor count differs");
  }
}

}  // namespace sgcl
