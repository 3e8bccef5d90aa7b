#include "pyrsal/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

namespace pyrsal {
namespace {

constexpr char kMagic[4] = {'P', 'S', 'C', 'K'};
constexpr uint32_t kVersion = 1;
constexpr uint64_t kMaxElems = uint64_t(1) << 28;
constexpr uint64_t kMaxJson = uint64_t(1) << 24;

template <typename U>
void put_le(std::ostream& os, U v) {
  unsigned char b[sizeof(U)];
  for (size_t i = 0; i < sizeof(U); ++i)
    b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), sizeof(U));
}

template <typename U>
U get_le(std::istream& is) {
  unsigned char b[sizeof(U)];
  is.read(reinterpret_cast<char*>(b), sizeof(U));
  if (!is) throw std::runtime_error("truncated checkpoint");
  U v = 0;
  for (size_t i = 0; i < sizeof(U); ++i) v |= U(b[i]) << (8 * i);
  return v;
}

void put_tensor(std::ostream& os, const std::string& name,
                const Tensor<float>& t) {
  if (name.empty() || name.size() > 0xffff)
    throw std::runtime_error("bad tensor name: " + name);
  put_le<uint16_t>(os, uint16_t(name.size()));
  os.write(name.data(), std::streamsize(name.size()));
  put_le<uint8_t>(os, 4);
  for (int d : {t.n, t.c, t.h, t.w}) put_le<uint32_t>(os, uint32_t(d));
  for (float f : t.data) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_le<uint32_t>(os, bits);
  }
}

std::pair<std::string, Tensor<float>> get_tensor(std::istream& is) {
  auto name_len = get_le<uint16_t>(is);
  if (name_len == 0) throw std::runtime_error("empty tensor name");
  std::string name(name_len, '\0');
  is.read(name.data(), name_len);
  if (!is) throw std::runtime_error("truncated checkpoint");
  auto ndim = get_le<uint8_t>(is);
  if (ndim != 4)
    throw std::runtime_error("unsupported tensor rank in checkpoint: " +
                             std::to_string(int(ndim)));
  uint32_t d[4];
  uint64_t elems = 1;
  for (auto& v : d) {
    v = get_le<uint32_t>(is);
    elems *= v;
  }
  if (elems == 0 || elems > kMaxElems)
    throw std::runtime_error("bad tensor size in checkpoint: " + name);
  Tensor<float> t(static_cast<int>(d[0]), static_cast<int>(d[1]),
                  static_cast<int>(d[2]), static_cast<int>(d[3]));
  for (auto& f : t.data) {
    uint32_t bits = get_le<uint32_t>(is);
    std::memcpy(&f, &bits, 4);
  }
  return {std::move(name), std::move(t)};
}

}  // namespace

Checkpoint snapshot(PyramidSaliencyNet<float>& model, const RunConfig& cfg) {
  ParamStore<float> st;
  model.collect(st);
  Checkpoint ck;
  ck.config = cfg;
  for (const auto& [name, v] : st.params) ck.tensors.emplace_back(name, v->value);
  for (const auto& [name, t] : st.buffers) ck.tensors.emplace_back(name, *t);
  return ck;
}

void restore(PyramidSaliencyNet<float>& model, const Checkpoint& ck) {
  std::unordered_map<std::string, const Tensor<float>*> by_name;
  for (const auto& [name, t] : ck.tensors)
    if (!by_name.emplace(name, &t).second)
      throw std::runtime_error("duplicate tensor in checkpoint: " + name);

  ParamStore<float> st;
  model.collect(st);
  size_t used = 0;
  auto fetch = [&](const std::string& name, const Tensor<float>& have) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint missing tensor: " + name);
    const Tensor<float>& t = *it->second;
    if (t.n != have.n || t.c != have.c || t.h != have.h || t.w != have.w)
      throw std::runtime_error("shape mismatch for " + name + ": file " +
                               t.shape_str() + ", model " + have.shape_str());
    ++used;
    return &t;
  };
  for (auto& [name, v] : st.params) v->value = *fetch(name, v->value);
  for (auto& [name, t] : st.buffers) *t = *fetch(name, *t);
  if (used != ck.tensors.size())
    throw std::runtime_error("checkpoint holds " +
                             std::to_string(ck.tensors.size() - used) +
                             " tensors unknown to the model");
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
  os.write(kMagic, 4);
  put_le<uint32_t>(os, kVersion);
  std::string cfg = to_json(ck.config);
  put_le<uint64_t>(os, cfg.size());
  os.write(cfg.data(), std::streamsize(cfg.size()));
  put_le<uint32_t>(os, uint32_t(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) put_tensor(os, name, t);
  if (!os) throw std::runtime_error("short write: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint file (bad magic): " + path);
  auto version = get_le<uint32_t>(is);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version) + " (want " +
                             std::to_string(kVersion) + "): " + path);
  auto json_len = get_le<uint64_t>(is);
  if (json_len == 0 || json_len > kMaxJson)
    throw std::runtime_error("bad config length in checkpoint: " + path);
  std::string cfg(json_len, '\0');
  is.read(cfg.data(), std::streamsize(json_len));
  if (!is) throw std::runtime_error("truncated checkpoint");
  Checkpoint ck;
  ck.config = run_config_from_json(cfg);
  auto count = get_le<uint32_t>(is);
  ck.tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) ck.tensors.push_back(get_tensor(is));
  if (is.peek() != std::char_traits<char>::eof())
    throw std::runtime_error("trailing bytes after checkpoint payload: " +
                             path);
  return ck;
}

}  // namespace pyrsal
