#include "ipg/harness/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "ipg/errors.hpp"

namespace ipg {

namespace {

constexpr char kMagic[4] = {'I', 'P', 'G', 'N'};

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  template <typename T>
  void le(T value) {
    std::uint8_t bytes[sizeof(T)];
    std::uint64_t bits = 0;
    std::memcpy(&bits, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<std::uint8_t>(bits >> (8 * i));
    os_.write(reinterpret_cast<const char*>(bytes), sizeof(T));
  }
  void raw(const void* data, std::size_t n) { os_.write(static_cast<const char*>(data), n); }

  void record(const std::string& name, const Tensor& t) {
    le<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    raw(name.data(), name.size());
    const Shape& s = t.shape();
    for (int d : {s.n, s.c, s.h, s.w}) le<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (double v : t.values()) le<double>(v);
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string path) : is_(is), path_(std::move(path)) {}

  template <typename T>
  T le() {
    std::uint8_t bytes[sizeof(T)];
    raw(bytes, sizeof(T));
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    T value;
    std::memcpy(&value, &bits, sizeof(T));
    return value;
  }
  void raw(void* data, std::size_t n) {
    is_.read(static_cast<char*>(data), n);
    if (static_cast<std::size_t>(is_.gcount()) != n) {
      throw PreconditionError("checkpoint " + path_ + " is truncated");
    }
  }

  std::pair<std::string, Tensor> record() {
    const auto len = le<std::uint32_t>();
    if (len > 4096) throw PreconditionError("checkpoint " + path_ + ": corrupt record name");
    std::string name(len, '\0');
    raw(name.data(), len);
    Shape s;
    s.n = static_cast<int>(le<std::uint32_t>());
    s.c = static_cast<int>(le<std::uint32_t>());
    s.h = static_cast<int>(le<std::uint32_t>());
    s.w = static_cast<int>(le<std::uint32_t>());
    if (s.numel() > (std::size_t{1} << 32)) {
      throw PreconditionError("checkpoint " + path_ + ": corrupt shape for " + name);
    }
    std::vector<double> v(s.numel());
    for (double& x : v) x = le<double>();
    return {name, Tensor(s, std::move(v))};
  }

 private:
  std::istream& is_;
  std::string path_;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw PreconditionError("cannot write checkpoint " + tmp);
    Writer w(os);
    w.raw(kMagic, 4);
    w.le<std::uint32_t>(Checkpoint::kVersion);
    w.le<std::uint64_t>(ckpt.config_digest);
    w.le<std::uint32_t>(ckpt.epoch);
    w.le<std::uint64_t>(ckpt.iteration);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(ckpt.rng_state.size()));
    w.raw(ckpt.rng_state.data(), ckpt.rng_state.size());
    for (const auto* section : {&ckpt.parameters, &ckpt.momentum}) {
      w.le<std::uint32_t>(static_cast<std::uint32_t>(section->size()));
      for (const auto& [name, t] : *section) w.record(name, t);
    }
    if (!os) throw PreconditionError("failed writing checkpoint " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw PreconditionError("cannot move checkpoint into place at " + path);
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw PreconditionError("cannot open checkpoint " + path);
  Reader r(is, path);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw PreconditionError(path + " is not an IPGN checkpoint");
  const auto version = r.le<std::uint32_t>();
  if (version != Checkpoint::kVersion) {
    throw PreconditionError("checkpoint " + path + " has unsupported version " +
                            std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.config_digest = r.le<std::uint64_t>();
  ckpt.epoch = r.le<std::uint32_t>();
  ckpt.iteration = r.le<std::uint64_t>();
  const auto rng_len = r.le<std::uint32_t>();
  if (rng_len > 1 << 20) throw PreconditionError("checkpoint " + path + ": corrupt rng state");
  ckpt.rng_state.resize(rng_len);
  r.raw(ckpt.rng_state.data(), rng_len);
  for (auto* section : {&ckpt.parameters, &ckpt.momentum}) {
    const auto count = r.le<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) section->insert(r.record());
  }
  return ckpt;
}

std::map<std::string, Tensor> snapshot(const ParamStore& store) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, p] : store.all()) out.emplace(name, p.tensor.detach());
  return out;
}

void restore(const Checkpoint& ckpt, ParamStore& store, std::uint64_t expected_digest) {
  if (ckpt.config_digest != expected_digest) {
    throw ConfigError("checkpoint was written for a different network configuration");
  }
  if (ckpt.parameters.size() != store.all().size()) {
    throw ConfigError("checkpoint holds " + std::to_string(ckpt.parameters.size()) +
                      " parameters, model has " + std::to_string(store.all().size()));
  }
  for (const auto& [name, p] : store.all()) {
    auto it = ckpt.parameters.find(name);
    if (it == ckpt.parameters.end()) throw ConfigError("checkpoint lacks parameter " + name);
    if (it->second.shape() != p.tensor.shape()) {
      throw ConfigError("checkpoint shape mismatch for " + name);
    }
    Tensor dst = p.tensor;
    auto v = dst.mutable_values();
    std::copy(it->second.values().begin(), it->second.values().end(), v.begin());
  }
}

}  // namespace ipg
