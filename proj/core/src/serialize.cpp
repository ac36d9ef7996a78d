#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "attnflow/model.hpp"

namespace attnflow {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; add byte swapping for this target");

namespace {

constexpr char kMagic[8] = {'M', 'I', 'N', 'I', 'L', 'M', '1', '\0'};

template <class T>
void put(std::vector<char>& out, T value) {
  const auto* p = reinterpret_cast<const char*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const char> bytes) : bytes_(bytes) {}
  template <class T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw std::runtime_error("checkpoint: truncated file");
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<char> serialize_params(const ModelParams& params) {
  const ModelConfig& c = params.config;
  std::vector<char> out(std::begin(kMagic), std::end(kMagic));
  for (std::size_t dim : {c.n_layers, c.n_heads, c.d_model, c.d_head, c.d_mlp, c.vocab_size,
                          c.max_seq_len}) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
  }
  put<double>(out, c.ln_epsilon);
  put<std::uint64_t>(out, c.init_seed);
  put<std::uint64_t>(out, params.parameter_count());
  params.visit([&](std::string_view, std::span<const double> values) {
    for (double v : values) put<float>(out, static_cast<float>(v));
  });
  return out;
}

ModelParams deserialize_params(std::span<const char> bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("checkpoint: bad magic (expected MINILM1)");
  }
  Reader r(bytes.subspan(sizeof(kMagic)));
  ModelConfig c;
  c.n_layers = r.get<std::uint32_t>();
  c.n_heads = r.get<std::uint32_t>();
  c.d_model = r.get<std::uint32_t>();
  c.d_head = r.get<std::uint32_t>();
  c.d_mlp = r.get<std::uint32_t>();
  c.vocab_size = r.get<std::uint32_t>();
  c.max_seq_len = r.get<std::uint32_t>();
  c.ln_epsilon = r.get<double>();
  c.init_seed = r.get<std::uint64_t>();
  ModelParams params = ModelParams::zeros(c);
  if (r.get<std::uint64_t>() != params.parameter_count()) {
    throw std::runtime_error("checkpoint: parameter count does not match config");
  }
  params.visit([&](std::string_view name, std::span<double> values) {
    for (double& v : values) {
      v = r.get<float>();
      if (!std::isfinite(v)) {
        throw std::runtime_error("checkpoint: non-finite value in " + std::string(name));
      }
    }
  });
  if (!r.done()) throw std::runtime_error("checkpoint: trailing bytes");
  return params;
}

void save_params(const ModelParams& params, const std::filesystem::path& path) {
  const auto bytes = serialize_params(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

ModelParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_params(bytes);
}

}  // namespace attnflow
