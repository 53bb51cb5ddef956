#include "pfm/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "pfm/binary_io.hpp"
#include "pfm/errors.hpp"

namespace pfm {

namespace {

constexpr char kMagic[4] = {'M', 'P', 'C', 'K'};
constexpr char kHistoryMagic[4] = {'H', 'I', 'S', 'T'};
constexpr std::uint32_t kMaxNameLength = 4096;
constexpr std::uint32_t kMaxRank = 8;

void put_floats(std::ostream& out, std::span<const float> values) {
  std::vector<char> buf(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t v;
    std::memcpy(&v, &values[i], 4);
    for (int b = 0; b < 4; ++b) buf[4 * i + b] = static_cast<char>((v >> (8 * b)) & 0xff);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

bool get_floats(std::istream& in, std::span<float> values) {
  std::vector<unsigned char> buf(values.size() * 4);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) return false;
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(buf[4 * i + b]) << (8 * b);
    std::memcpy(&values[i], &v, 4);
  }
  return true;
}

std::string layer_of(const std::string& tensor_name) { return tensor_name.substr(0, tensor_name.rfind('.')); }

std::map<std::string, Shape> shapes_of(const Checkpoint& c) {
  std::map<std::string, Shape> out;
  for (const auto& [name, t] : c.tensors) out[name] = t.shape();
  return out;
}

std::map<std::string, Shape> shapes_of(const ParamSet& params) {
  std::map<std::string, Shape> out;
  for (const auto& [name, p] : params) {
    out[name + ".weight"] = p.weight.shape();
    out[name + ".bias"] = p.bias.shape();
  }
  return out;
}

}  // namespace

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw NotFoundError("checkpoint has no tensor '" + name + "'");
}

Checkpoint make_checkpoint(const ParamSet& params, std::uint64_t fingerprint, std::vector<HistoryRecord> history) {
  Checkpoint c;
  c.fingerprint = fingerprint;
  for (const auto& [name, p] : params) {
    c.tensors.emplace_back(name + ".weight", Tensor(p.weight.shape(), p.weight.storage()));
    c.tensors.emplace_back(name + ".bias", Tensor(p.bias.shape(), p.bias.storage()));
  }
  c.history = std::move(history);
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kMagic, 4);
    binio::put_u16(out, Checkpoint::kVersion);
    binio::put_u64(out, c.fingerprint);
    binio::put_u32(out, static_cast<std::uint32_t>(c.tensors.size()));
    for (const auto& [name, t] : c.tensors) {
      binio::put_u32(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      binio::put_u32(out, static_cast<std::uint32_t>(t.rank()));
      for (int d : t.shape()) binio::put_u32(out, static_cast<std::uint32_t>(d));
      put_floats(out, t.data());
    }
    out.write(kHistoryMagic, 4);
    binio::put_u32(out, static_cast<std::uint32_t>(c.history.size()));
    for (const HistoryRecord& r : c.history) {
      binio::put_u32(out, r.iteration);
      binio::put_f32(out, r.loss);
      binio::put_f32(out, r.val_acc);
    }
    if (!out) throw IoError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open checkpoint " + path.string());
  const std::string where = path.string() + ": ";
  auto fail = [&](const std::string& what) { throw IntegrityError(where + what); };
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) fail("not a checkpoint (bad magic)");
  std::uint16_t version = 0;
  if (!binio::get_u16(in, version)) fail("truncated header");
  if (version != Checkpoint::kVersion) fail("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  std::uint32_t count = 0;
  if (!binio::get_u64(in, c.fingerprint) || !binio::get_u32(in, count)) fail("truncated header");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t len = 0, rank = 0;
    if (!binio::get_u32(in, len) || len == 0 || len > kMaxNameLength) fail("bad tensor name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) fail("truncated tensor name");
    if (!binio::get_u32(in, rank) || rank == 0 || rank > kMaxRank) fail("bad rank for tensor '" + name + "'");
    Shape shape(rank);
    std::size_t numel = 1;
    for (auto& d : shape) {
      std::uint32_t v = 0;
      if (!binio::get_u32(in, v) || v == 0 || v > (1u << 30)) fail("bad dimension for tensor '" + name + "'");
      d = static_cast<int>(v);
      numel *= v;
      if (numel > (std::size_t{1} << 32)) fail("tensor '" + name + "' is implausibly large");
    }
    Tensor t(shape);
    if (!get_floats(in, t.data())) fail("truncated data for tensor '" + name + "'");
    c.tensors.emplace_back(std::move(name), std::move(t));
  }
  std::uint32_t records = 0;
  if (!in.read(magic, 4) || std::memcmp(magic, kHistoryMagic, 4) != 0) fail("missing history section");
  if (!binio::get_u32(in, records)) fail("truncated history header");
  for (std::uint32_t i = 0; i < records; ++i) {
    HistoryRecord r;
    if (!binio::get_u32(in, r.iteration) || !binio::get_f32(in, r.loss) || !binio::get_f32(in, r.val_acc))
      fail("truncated history");
    c.history.push_back(r);
  }
  if (in.peek() != std::char_traits<char>::eof()) fail("trailing bytes after history");
  return c;
}

void restore_params(const Checkpoint& checkpoint, ParamSet& params, std::uint64_t fingerprint) {
  const auto stored = shapes_of(checkpoint);
  const auto wanted = shapes_of(params);
  if (checkpoint.fingerprint != fingerprint) {
    std::ostringstream diff;
    diff << "checkpoint architecture does not match the model:";
    std::set<std::string> names;
    for (const auto& [n, s] : stored) names.insert(n);
    for (const auto& [n, s] : wanted) names.insert(n);
    bool any = false;
    for (const std::string& n : names) {
      const auto a = stored.find(n);
      const auto b = wanted.find(n);
      if (a != stored.end() && b != wanted.end() && a->second == b->second) continue;
      any = true;
      diff << "\n  " << n << ": checkpoint " << (a == stored.end() ? "-" : shape_string(a->second)) << " vs model "
           << (b == wanted.end() ? "-" : shape_string(b->second));
    }
    if (!any) diff << "\n  (same layer shapes, different layer configuration)";
    throw FingerprintError(diff.str());
  }
  if (stored != wanted) throw IntegrityError("checkpoint tensors do not match the model despite equal fingerprints");
  for (const auto& [name, t] : checkpoint.tensors) {
    LayerParams& p = params.at(layer_of(name));
    Tensor& dst = name.ends_with(".weight") ? p.weight : p.bias;
    dst.storage() = t.storage();
  }
  for (auto& [name, p] : params) {
    std::fill(p.weight_velocity.data().begin(), p.weight_velocity.data().end(), 0.0f);
    std::fill(p.bias_velocity.data().begin(), p.bias_velocity.data().end(), 0.0f);
  }
}

ParamSet params_from_checkpoint(const Checkpoint& checkpoint) {
  std::map<std::string, std::pair<Tensor, Tensor>> layers;
  for (const auto& [name, t] : checkpoint.tensors) {
    auto& slot = layers[layer_of(name)];
    if (name.ends_with(".weight")) slot.first = t;
    else if (name.ends_with(".bias")) slot.second = t;
    else throw IntegrityError("unexpected tensor name '" + name + "'");
  }
  ParamSet out;
  for (auto& [name, wb] : layers) {
    if (wb.first.empty() || wb.second.empty()) throw IntegrityError("layer '" + name + "' lacks weight or bias");
    out.add_raw(name, std::move(wb.first), std::move(wb.second));
  }
  return out;
}

}  // namespace pfm
