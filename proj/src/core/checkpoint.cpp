#include "abunet/checkpoint.hpp"

#include "abunet/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace abunet {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'A', 'B', 'U', 'N', 'E', 'T', 'C', 'K'};

class Writer {
public:
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
      u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i)
      u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void doubles(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v)
      f64(x);
  }
  const std::vector<char>& bytes() const { return bytes_; }

private:
  std::vector<char> bytes_;
};

class Reader {
public:
  Reader(std::vector<char> bytes, std::string origin) : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = count(1);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> doubles() {
    std::vector<double> v(count(8));
    for (auto& x : v)
      x = f64();
    return v;
  }
  std::size_t count(std::size_t element_bytes) {
    const std::uint64_t n = u64();
    if (n > (bytes_.size() - pos_) / element_bytes)
      fail("length " + std::to_string(n) + " runs past the end");
    return static_cast<std::size_t>(n);
  }
  bool done() const { return pos_ == bytes_.size(); }
  [[noreturn]] void fail(const std::string& what) const {
    throw IoError(origin_ + ": corrupt checkpoint at offset " + std::to_string(pos_) + ": " + what);
  }

private:
  void need(std::size_t n) {
    if (bytes_.size() - pos_ < n)
      fail("unexpected end of file");
  }

  std::vector<char> bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

} // namespace

const StoredArray* Checkpoint::find(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name)
      return &p;
  return nullptr;
}

void save_checkpoint(const fs::path& file, const Checkpoint& ckpt) {
  Writer w;
  for (char c : kMagic)
    w.u8(static_cast<std::uint8_t>(c));
  w.u32(ckpt.version);
  w.str(ckpt.variant);
  w.str(ckpt.activation);
  w.u32(static_cast<std::uint32_t>(ckpt.num_classes));
  w.u64(ckpt.dims.input_hw);
  w.u64(ckpt.dims.input_channels);
  w.u64(ckpt.dims.conv_channels);
  w.u64(ckpt.dims.dense1);
  w.u64(ckpt.dims.dense2);
  w.u8(ckpt.dims.bn_after_activation ? 1 : 0);
  w.u64(ckpt.global_step);
  w.str(ckpt.rng_state);

  w.u64(ckpt.params.size());
  for (const auto& p : ckpt.params) {
    w.str(p.name);
    w.u64(p.shape.size());
    for (auto d : p.shape)
      w.u64(d);
    w.doubles(p.values);
  }
  w.u64(ckpt.batch_norms.size());
  for (const auto& bn : ckpt.batch_norms) {
    w.f64(bn.momentum);
    w.f64(bn.epsilon);
    w.doubles(bn.running_mean);
    w.doubles(bn.running_var);
  }
  w.str(ckpt.optimizer.kind);
  w.u64(ckpt.optimizer.step);
  w.u64(ckpt.optimizer.slots.size());
  for (const auto& [name, values] : ckpt.optimizer.slots) {
    w.str(name);
    w.doubles(values);
  }

  // Write-then-rename so an interrupted run never leaves a torn file.
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw IoError("cannot write checkpoint " + tmp.string());
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out)
      throw IoError("write failed for checkpoint " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, file, ec);
  if (ec)
    throw IoError("cannot move checkpoint into place at " + file.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in)
    throw IoError("cannot open checkpoint " + file.string());
  Reader r(std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()), file.string());
  for (char c : kMagic)
    if (r.u8() != static_cast<std::uint8_t>(c))
      r.fail("bad magic, not a checkpoint");
  Checkpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != kCheckpointVersion)
    r.fail("unsupported format version " + std::to_string(ckpt.version));
  ckpt.variant = r.str();
  ckpt.activation = r.str();
  ckpt.num_classes = static_cast<int>(r.u32());
  ckpt.dims.input_hw = r.u64();
  ckpt.dims.input_channels = r.u64();
  ckpt.dims.conv_channels = r.u64();
  ckpt.dims.dense1 = r.u64();
  ckpt.dims.dense2 = r.u64();
  ckpt.dims.bn_after_activation = r.u8() != 0;
  ckpt.global_step = r.u64();
  ckpt.rng_state = r.str();

  const auto n_params = r.count(1);
  for (std::size_t i = 0; i < n_params; ++i) {
    StoredArray p;
    p.name = r.str();
    p.shape.resize(r.count(8));
    for (auto& d : p.shape)
      d = r.u64();
    p.values = r.doubles();
    if (shape_size(p.shape) != p.values.size())
      r.fail("parameter " + p.name + " has " + std::to_string(p.values.size()) + " values for shape " +
             shape_str(p.shape));
    ckpt.params.push_back(std::move(p));
  }
  const auto n_bn = r.count(1);
  for (std::size_t i = 0; i < n_bn; ++i) {
    ops::BatchNormState bn;
    bn.momentum = r.f64();
    bn.epsilon = r.f64();
    bn.running_mean = r.doubles();
    bn.running_var = r.doubles();
    ckpt.batch_norms.push_back(std::move(bn));
  }
  ckpt.optimizer.kind = r.str();
  ckpt.optimizer.step = r.u64();
  const auto n_slots = r.count(1);
  for (std::size_t i = 0; i < n_slots; ++i) {
    auto name = r.str();
    ckpt.optimizer.slots[name] = r.doubles();
  }
  if (!r.done())
    r.fail("trailing bytes");
  return ckpt;
}

Checkpoint snapshot(const Network& net, std::uint64_t global_step, const std::string& rng_state,
                    const OptimizerSnapshot& optimizer) {
  Checkpoint ckpt;
  ckpt.variant = std::string(variant_name(net.variant()));
  ckpt.activation = net.activation_config().name();
  ckpt.num_classes = net.num_classes();
  ckpt.dims = net.dims();
  ckpt.global_step = global_step;
  ckpt.rng_state = rng_state;
  for (const auto& p : net.params().all()) {
    const auto v = p.tensor.values();
    ckpt.params.push_back({p.name, p.tensor.shape(), std::vector<double>(v.begin(), v.end())});
  }
  ckpt.batch_norms = net.batch_norms();
  ckpt.optimizer = optimizer;
  return ckpt;
}

void load_parameters(Network& net, const Checkpoint& ckpt) {
  if (ckpt.params.size() != net.params().all().size())
    throw ConfigError("checkpoint holds " + std::to_string(ckpt.params.size()) + " parameters, network has " +
                      std::to_string(net.params().all().size()));
  for (auto& p : net.params().all()) {
    const StoredArray* s = ckpt.find(p.name);
    if (!s)
      throw ConfigError("checkpoint lacks parameter '" + p.name + "'");
    if (s->shape != p.tensor.shape())
      throw ShapeError("checkpoint parameter '" + p.name + "' has shape " + shape_str(s->shape) +
                       ", network expects " + shape_str(p.tensor.shape()));
    std::copy(s->values.begin(), s->values.end(), p.tensor.values().begin());
  }
  if (ckpt.batch_norms.size() != net.batch_norms().size())
    throw ConfigError("checkpoint batch-norm count does not match the network");
  for (std::size_t i = 0; i < ckpt.batch_norms.size(); ++i) {
    if (ckpt.batch_norms[i].running_mean.size() != net.batch_norms()[i].running_mean.size())
      throw ShapeError("checkpoint batch-norm " + std::to_string(i) + " has the wrong channel count");
    net.batch_norms()[i] = ckpt.batch_norms[i];
  }
}

Network restore_network(const Checkpoint& ckpt) {
  Network net = Network::build_smcn(parse_variant(ckpt.variant), ActivationConfig::parse(ckpt.activation),
                                    ckpt.num_classes, 0, ckpt.dims);
  load_parameters(net, ckpt);
  return net;
}

} // namespace abunet
