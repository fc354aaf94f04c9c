#include "clt/models.hpp"

#include <cstdint>
#include <fstream>

namespace clt {

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::cnn: return "cnn";
    case ModelKind::baggedcnn: return "baggedcnn";
    case ModelKind::letranets: return "letranets";
  }
  throw ContractViolation("to_string: unknown model kind");
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "cnn") return ModelKind::cnn;
  if (s == "baggedcnn") return ModelKind::baggedcnn;
  if (s == "letranets") return ModelKind::letranets;
  throw DataError("unknown model kind '" + s + "' (expected cnn|baggedcnn|letranets)");
}

long long expected_param_count(ModelKind kind, const ModelConfig& cfg, int vocab_size) {
  const long long e = cfg.emb_dim;
  const long long maps = cfg.maps_per_width;
  const long long d = cfg.encoder_dim();
  const long long c = cfg.num_classes;
  long long enc = 0;
  for (int w : cfg.widths) enc += maps * (w * e) + maps;
  const long long attn = cfg.attn_dim * d + cfg.attn_dim + cfg.attn_dim;
  const long long head_d = c * d + c;
  const long long head_2d = c * 2 * d + c;
  const long long emb = static_cast<long long>(vocab_size) * e;
  switch (kind) {
    case ModelKind::cnn: return emb + enc + head_d;
    case ModelKind::baggedcnn: return emb + enc + attn + head_d;
    case ModelKind::letranets: return emb + 2 * enc + attn + 2 * head_d + head_2d;
  }
  throw ContractViolation("expected_param_count: unknown model kind");
}

namespace {

constexpr char kMagic[4] = {'C', 'L', 'T', 'M'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kByteOrderTag = 0x01020304u;

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("load_model: truncated checkpoint " + path);
  return v;
}

}  // namespace

void save_model(Model<Real>& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_model: cannot open " + path + " for writing");
  out.write(kMagic, 4);
  write_pod(out, kVersion);
  write_pod(out, kByteOrderTag);
  write_pod<std::int32_t>(out, static_cast<std::int32_t>(m.kind));
  write_pod<std::int32_t>(out, m.cfg.num_classes);
  write_pod<std::int32_t>(out, m.vocab_size());
  write_pod<std::int32_t>(out, m.cfg.emb_dim);
  write_pod<std::int32_t>(out, m.cfg.attn_dim);
  write_pod<std::int32_t>(out, m.cfg.maps_per_width);
  write_pod<std::int32_t>(out, static_cast<std::int32_t>(m.cfg.widths.size()));
  for (int w : m.cfg.widths) write_pod<std::int32_t>(out, w);

  const auto params = m.parameters();
  write_pod<std::int32_t>(out, static_cast<std::int32_t>(params.size()));
  for (const auto* p : params) {
    write_pod<std::int32_t>(out, static_cast<std::int32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_pod<std::int32_t>(out, static_cast<std::int32_t>(p->value.shape().size()));
    for (int dim : p->value.shape()) write_pod<std::int32_t>(out, dim);
    for (int i = 0; i < p->size(); ++i) write_pod<double>(out, double(p->value[i]));
  }
  if (!out) throw DataError("save_model: write failed for " + path);
}

Model<Real> load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_model: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kMagic, 4))
    throw DataError("load_model: " + path + " is not a model checkpoint");
  if (read_pod<std::uint32_t>(in, path) != kVersion)
    throw DataError("load_model: unsupported checkpoint version in " + path);
  if (read_pod<std::uint32_t>(in, path) != kByteOrderTag)
    throw DataError("load_model: byte order mismatch in " + path);

  const auto kind = static_cast<ModelKind>(read_pod<std::int32_t>(in, path));
  ModelConfig cfg;
  cfg.num_classes = read_pod<std::int32_t>(in, path);
  const int vocab = read_pod<std::int32_t>(in, path);
  cfg.emb_dim = read_pod<std::int32_t>(in, path);
  cfg.attn_dim = read_pod<std::int32_t>(in, path);
  cfg.maps_per_width = read_pod<std::int32_t>(in, path);
  const int n_widths = read_pod<std::int32_t>(in, path);
  cfg.widths.clear();
  for (int i = 0; i < n_widths; ++i) cfg.widths.push_back(read_pod<std::int32_t>(in, path));

  Model<Real> m = make_model<Real>(kind, cfg, vocab, 0);
  const auto params = m.parameters();
  const int stored = read_pod<std::int32_t>(in, path);
  if (stored != static_cast<int>(params.size()))
    throw DataError("load_model: parameter count mismatch in " + path);
  for (auto* p : params) {
    const int name_len = read_pod<std::int32_t>(in, path);
    std::string name(std::size_t(name_len), '\0');
    in.read(name.data(), name_len);
    if (!in || name != p->name)
      throw DataError("load_model: expected parameter '" + p->name + "', found '" +
                      name + "' in " + path);
    const int ndim = read_pod<std::int32_t>(in, path);
    std::vector<int> shape;
    for (int i = 0; i < ndim; ++i) shape.push_back(read_pod<std::int32_t>(in, path));
    if (shape != p->value.shape())
      throw DataError("load_model: shape mismatch for '" + name + "' in " + path);
    for (int i = 0; i < p->size(); ++i)
      p->value[i] = static_cast<Real>(read_pod<double>(in, path));
  }
  return m;
}

}  // namespace clt
