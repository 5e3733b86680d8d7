#include "massl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "massl/errors.hpp"

namespace massl {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void f64_tensor(const std::string& name, const double* data, std::vector<std::uint64_t> dims) {
    bytes(name);
    pod(DType::F64);
    pod(static_cast<std::uint32_t>(dims.size()));
    std::uint64_t count = 1;
    for (auto d : dims) {
      pod(d);
      count *= d;
    }
    out_.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) truncated();
    return v;
  }
  std::string bytes() {
    const auto n = pod<std::uint32_t>();
    if (n > (1u << 26)) corrupt("string length " + std::to_string(n));
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (!in_) truncated();
    return s;
  }
  void raw(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!in_) truncated();
  }
  /// Reads a named f64 tensor and checks its name and dims.
  void f64_tensor(const std::string& name, double* dst, const std::vector<std::uint64_t>& dims) {
    const std::string got = bytes();
    if (got != name) corrupt("expected tensor '" + name + "', found '" + got + "'");
    if (pod<DType>() != DType::F64) corrupt("tensor '" + name + "' is not f64");
    const auto rank = pod<std::uint32_t>();
    if (rank != dims.size()) corrupt("tensor '" + name + "' has rank " + std::to_string(rank));
    std::uint64_t count = 1;
    for (auto d : dims) {
      if (pod<std::uint64_t>() != d) corrupt("tensor '" + name + "' has unexpected shape");
      count *= d;
    }
    raw(dst, count * sizeof(double));
  }
  [[noreturn]] void truncated() { fail(ErrorKind::IoError, "checkpoint '" + path_ + "' is truncated"); }
  [[noreturn]] void corrupt(const std::string& what) {
    fail(ErrorKind::IoError, "checkpoint '" + path_ + "': " + what);
  }

 private:
  std::istream& in_;
  std::string path_;
};

std::vector<std::uint64_t> dims_of(const Mat& m) {
  return {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
}
std::vector<std::uint64_t> dims_of(const Vec& v) { return {static_cast<std::uint64_t>(v.size())}; }

void write_layers(Writer& w, const std::string& prefix, const std::vector<LayerTensors>& layers) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string base = prefix + ".L" + std::to_string(l);
    w.f64_tensor(base + ".weight", layers[l].weight.data(), dims_of(layers[l].weight));
    w.f64_tensor(base + ".bias", layers[l].bias.data(), dims_of(layers[l].bias));
  }
}

void read_layers(Reader& r, const std::string& prefix, std::vector<LayerTensors>& layers) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string base = prefix + ".L" + std::to_string(l);
    r.f64_tensor(base + ".weight", layers[l].weight.data(), dims_of(layers[l].weight));
    r.f64_tensor(base + ".bias", layers[l].bias.data(), dims_of(layers[l].bias));
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ostringstream buf(std::ios::binary);
  Writer w(buf);
  buf.write(kCheckpointMagic, 4);
  w.pod(kCheckpointVersion);
  w.bytes(config_to_json(ckpt.config));
  w.pod(ckpt.step);
  w.pod(ckpt.epoch);
  w.pod(ckpt.rng_seed);
  const auto layers = static_cast<std::uint32_t>(ckpt.student.layers.size());
  w.pod(static_cast<std::uint32_t>(layers * 8));
  write_layers(w, "student", ckpt.student.layers);
  write_layers(w, "teacher", ckpt.teacher.layers);
  write_layers(w, "adam.m", ckpt.optimizer.first_moment);
  write_layers(w, "adam.v", ckpt.optimizer.second_moment);
  w.pod(ckpt.optimizer.step);
  w.pod(ckpt.optimizer.hyper.beta1);
  w.pod(ckpt.optimizer.hyper.beta2);
  w.pod(ckpt.optimizer.hyper.eps);

  const Memory& mem = ckpt.memory;
  w.pod(static_cast<std::uint64_t>(mem.capacity()));
  w.pod(static_cast<std::uint64_t>(mem.dim()));
  w.pod(static_cast<std::uint64_t>(mem.cursor()));
  w.pod(mem.inserted());
  for (auto a : mem.ages()) w.pod(a);
  const Mat& slots = mem.slots();
  for (Eigen::Index i = 0; i < slots.size(); ++i) w.pod(static_cast<float>(slots.data()[i]));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot write checkpoint '" + path + "'");
  const std::string data = buf.str();
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) fail(ErrorKind::IoError, "failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open checkpoint '" + path + "'");
  Reader r(in, path);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) r.corrupt("bad magic bytes");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    fail(ErrorKind::CheckpointVersionMismatch, "checkpoint '" + path + "' has format version " +
                                                   std::to_string(version) + ", expected " +
                                                   std::to_string(kCheckpointVersion));
  }
  Checkpoint c;
  c.config = config_from_json(r.bytes());
  c.step = r.pod<std::uint64_t>();
  c.epoch = r.pod<std::uint64_t>();
  c.rng_seed = r.pod<std::uint64_t>();
  // Shapes come from the architecture echoed in the config.
  c.student = init_params(c.config.arch, 0);
  c.teacher = c.student;
  c.optimizer = make_adamw_state(c.student);
  const auto tensors = r.pod<std::uint32_t>();
  if (tensors != c.student.layers.size() * 8) r.corrupt("tensor count does not match the architecture");
  read_layers(r, "student", c.student.layers);
  read_layers(r, "teacher", c.teacher.layers);
  read_layers(r, "adam.m", c.optimizer.first_moment);
  read_layers(r, "adam.v", c.optimizer.second_moment);
  c.optimizer.step = r.pod<std::uint64_t>();
  c.optimizer.hyper.beta1 = r.pod<double>();
  c.optimizer.hyper.beta2 = r.pod<double>();
  c.optimizer.hyper.eps = r.pod<double>();

  const auto K = r.pod<std::uint64_t>();
  const auto D = r.pod<std::uint64_t>();
  const auto cursor = r.pod<std::uint64_t>();
  const auto inserted = r.pod<std::uint64_t>();
  if (K == 0 || D == 0 || K > (1ull << 32) || D > (1ull << 20)) r.corrupt("implausible memory shape");
  std::vector<std::uint64_t> ages(K);
  r.raw(ages.data(), K * sizeof(std::uint64_t));
  std::vector<float> raw(K * D);
  r.raw(raw.data(), raw.size() * sizeof(float));
  Mat slots(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(D));
  for (std::size_t i = 0; i < raw.size(); ++i) slots.data()[i] = static_cast<double>(raw[i]);
  c.memory = Memory::restore(std::move(slots), std::move(ages), static_cast<std::size_t>(cursor), inserted);
  return c;
}

}  // namespace massl
