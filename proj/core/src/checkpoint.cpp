#include "maxim/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

namespace maxim {

namespace {
constexpr char kMagic[4] = {'M', 'X', 'I', 'M'};
constexpr uint32_t kVersion = 1;

// x86-64 target: raw writes are little-endian.
template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("checkpoint: truncated file");
  return v;
}

void put_entry(std::ostream& out, const std::string& name, const Tensor& t) {
  put<uint32_t>(out, static_cast<uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<uint32_t>(out, static_cast<uint32_t>(t.rank()));
  for (int64_t e : t.shape()) put<uint64_t>(out, static_cast<uint64_t>(e));
  if (t.dtype() == DType::f32) {
    auto d = t.data<float>();
    out.write(reinterpret_cast<const char*>(d.data()),
              static_cast<std::streamsize>(d.size() * sizeof(float)));
  } else {
    // format stores 32-bit floats; verification-mode stores round down
    std::vector<float> buf(t.numel());
    auto d = t.data<double>();
    for (int64_t i = 0; i < t.numel(); ++i) buf[i] = static_cast<float>(d[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
}

struct Entry {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

Entry get_entry(std::istream& in) {
  Entry e;
  uint32_t len = get<uint32_t>(in);
  e.name.resize(len);
  in.read(e.name.data(), len);
  uint32_t rank = get<uint32_t>(in);
  for (uint32_t i = 0; i < rank; ++i) e.shape.push_back(static_cast<int64_t>(get<uint64_t>(in)));
  int64_t n = shape_numel(e.shape);
  e.data.resize(static_cast<size_t>(n));
  in.read(reinterpret_cast<char*>(e.data.data()),
          static_cast<std::streamsize>(e.data.size() * sizeof(float)));
  if (!in) throw IoError("checkpoint: truncated tensor data");
  return e;
}

Tensor to_tensor(const Entry& e, DType dt) {
  if (dt == DType::f32) return Tensor::from_f32(e.shape, e.data);
  Tensor t = Tensor::zeros(e.shape, DType::f64);
  auto p = t.raw_mutable<double>();
  for (size_t i = 0; i < e.data.size(); ++i) p[i] = static_cast<double>(e.data[i]);
  return t;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store, uint64_t config_digest,
                     bool include_optimizer_state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kMagic, 4);
  put<uint32_t>(out, kVersion);
  put<uint64_t>(out, config_digest);
  put<uint64_t>(out, static_cast<uint64_t>(store.count()));
  for (int64_t i = 0; i < store.count(); ++i)
    put_entry(out, store.name(ParamId{static_cast<int32_t>(i)}), store.value(i));
  bool with_state = include_optimizer_state && store.has_optimizer_state();
  put<uint8_t>(out, with_state ? 1 : 0);
  if (with_state) {
    put<int64_t>(out, store.adam_step());
    for (int64_t i = 0; i < store.count(); ++i)
      put_entry(out, store.name(ParamId{static_cast<int32_t>(i)}) + "#m", store.adam_m()[i]);
    for (int64_t i = 0; i < store.count(); ++i)
      put_entry(out, store.name(ParamId{static_cast<int32_t>(i)}) + "#v", store.adam_v()[i]);
  }
  if (!out) throw IoError("short write: " + path);
}

void load_checkpoint(const std::string& path, ParamStore& store, uint64_t config_digest) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("not a checkpoint file: " + path);
  uint32_t ver = get<uint32_t>(in);
  if (ver != kVersion) throw IoError("unsupported checkpoint version");
  uint64_t digest = get<uint64_t>(in);
  if (digest != config_digest)
    throw IoError("checkpoint was written for a different model configuration");
  uint64_t count = get<uint64_t>(in);
  if (count != static_cast<uint64_t>(store.count()))
    throw IoError("checkpoint entry count mismatch");
  for (uint64_t i = 0; i < count; ++i) {
    Entry e = get_entry(in);
    int idx = store.find(e.name);
    if (idx < 0) throw IoError("checkpoint has unknown parameter: " + e.name);
    store.set_value(idx, to_tensor(e, store.dtype()));
  }
  uint8_t with_state = get<uint8_t>(in);
  if (with_state) {
    store.adam_step() = get<int64_t>(in);
    store.adam_m().resize(store.count());
    store.adam_v().resize(store.count());
    for (uint64_t i = 0; i < count; ++i) {
      Entry e = get_entry(in);
      store.adam_m()[i] = to_tensor(e, store.dtype());
    }
    for (uint64_t i = 0; i < count; ++i) {
      Entry e = get_entry(in);
      store.adam_v()[i] = to_tensor(e, store.dtype());
    }
  }
}

uint64_t checkpoint_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("not a checkpoint file: " + path);
  get<uint32_t>(in);
  return get<uint64_t>(in);
}

}  // namespace maxim
