#include "mpt/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace mpt {

namespace {

constexpr char kMagic[4] = {'M', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;

void put_u32(std::vector<unsigned char>& out, uint32_t v) {
  out.push_back((unsigned char)(v & 0xff));
  out.push_back((unsigned char)((v >> 8) & 0xff));
  out.push_back((unsigned char)((v >> 16) & 0xff));
  out.push_back((unsigned char)((v >> 24) & 0xff));
}

void put_u64(std::vector<unsigned char>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back((unsigned char)((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<unsigned char>& out, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

struct Reader {
  const unsigned char* data;
  size_t size;
  size_t pos = 0;

  void need(size_t n, const char* what) const {
    if (pos + n > size) throw FormatError(std::string("truncated checkpoint while reading ") + what, pos);
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(data[pos + size_t(i)]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(data[pos + size_t(i)]) << (8 * i);
    pos += 8;
    return v;
  }
  float f32(const char* what) {
    const uint32_t bits = u32(what);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  std::string bytes(size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(data + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& cp) {
  std::vector<unsigned char> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, cp.version);
  put_u32(out, uint32_t(cp.tensors.size()));
  for (const auto& [name, blob] : cp.tensors) {
    if (shape_numel(blob.shape) != int64_t(blob.data.size()))
      throw std::invalid_argument("serialize_checkpoint: tensor '" + name + "' shape/data mismatch");
    put_u32(out, uint32_t(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, uint32_t(blob.shape.size()));
    for (int d : blob.shape) put_u32(out, uint32_t(d));
    for (float f : blob.data) put_f32(out, f);
  }
  put_u64(out, uint64_t(cp.config_json.size()));
  out.insert(out.end(), cp.config_json.begin(), cp.config_json.end());
  return out;
}

Checkpoint parse_checkpoint(const unsigned char* data, size_t size) {
  Reader r{data, size};
  r.need(4, "magic");
  if (std::memcmp(data, kMagic, 4) != 0) throw FormatError("bad checkpoint magic", 0);
  r.pos = 4;
  Checkpoint cp;
  cp.version = r.u32("version");
  if (cp.version != kVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(cp.version), 4);
  const uint32_t count = r.u32("tensor count");
  cp.tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = r.u32("tensor name length");
    std::string name = r.bytes(name_len, "tensor name");
    const uint32_t rank = r.u32("tensor rank");
    if (rank > 8) throw FormatError("implausible tensor rank " + std::to_string(rank), r.pos - 4);
    TensorBlob blob;
    int64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      const uint32_t dim = r.u32("tensor dim");
      blob.shape.push_back(int(dim));
      numel *= int64_t(dim);
    }
    blob.data.reserve(size_t(numel));
    for (int64_t k = 0; k < numel; ++k) blob.data.push_back(r.f32("tensor data"));
    cp.tensors.emplace_back(std::move(name), std::move(blob));
  }
  const uint64_t json_len = r.u64("config length");
  cp.config_json = r.bytes(size_t(json_len), "config JSON");
  if (r.pos != size) throw FormatError("trailing bytes after checkpoint payload", r.pos);
  return cp;
}

void save_checkpoint(const Checkpoint& cp, const std::string& path) {
  const auto bytes = serialize_checkpoint(cp);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw std::runtime_error("save_checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes.data(), bytes.size());
}

Checkpoint make_checkpoint(const MptModel<float>& model, const CheckpointMeta& meta) {
  Checkpoint cp;
  for (const auto& [name, t] : model.params()) {
    TensorBlob blob;
    blob.shape = t.shape();
    blob.data.assign(t.value().begin(), t.value().end());
    cp.tensors.emplace_back(name, std::move(blob));
  }
  nlohmann::ordered_json j;
  j["format"] = "mpt-checkpoint";
  j["seed"] = meta.seed;
  j["step"] = meta.step;
  const ModelConfig& m = meta.model;
  j["model"] = nlohmann::ordered_json{{"dim", m.dim},
                                      {"n_heads", m.n_heads},
                                      {"n_enc_layers", m.n_enc_layers},
                                      {"n_dec_layers", m.n_dec_layers},
                                      {"ffn_ratio", m.ffn_ratio},
                                      {"dropout", m.dropout_p},
                                      {"droppath", m.droppath_p},
                                      {"patch_count", m.patch_count},
                                      {"patch_size", m.patch_size},
                                      {"pos_hidden", m.pos_hidden},
                                      {"head_hidden", m.head_hidden},
                                      {"ln_eps", m.ln_eps}};
  j["mask"] = nlohmann::ordered_json{{"ratio", meta.mask.ratio},
                                     {"mode", mask_mode_name(meta.mask.mode)},
                                     {"n_queries", meta.mask.n_queries},
                                     {"gamma_fps_count", meta.mask.gamma_fps_count}};
  j["loss"] = nlohmann::ordered_json{{"alpha", meta.loss.alpha}, {"gamma", meta.loss.gamma}};
  cp.config_json = j.dump();
  return cp;
}

CheckpointMeta meta_from_checkpoint(const Checkpoint& cp) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(cp.config_json);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint config JSON: ") + e.what());
  }
  CheckpointMeta meta;
  try {
    meta.seed = j.at("seed").get<uint64_t>();
    meta.step = j.at("step").get<int64_t>();
    const auto& m = j.at("model");
    meta.model.dim = m.at("dim").get<int>();
    meta.model.n_heads = m.at("n_heads").get<int>();
    meta.model.n_enc_layers = m.at("n_enc_layers").get<int>();
    meta.model.n_dec_layers = m.at("n_dec_layers").get<int>();
    meta.model.ffn_ratio = m.at("ffn_ratio").get<int>();
    meta.model.dropout_p = m.at("dropout").get<double>();
    meta.model.droppath_p = m.at("droppath").get<double>();
    meta.model.patch_count = m.at("patch_count").get<int>();
    meta.model.patch_size = m.at("patch_size").get<int>();
    meta.model.pos_hidden = m.at("pos_hidden").get<int>();
    meta.model.head_hidden = m.at("head_hidden").get<int>();
    meta.model.ln_eps = m.at("ln_eps").get<double>();
    const auto& k = j.at("mask");
    meta.mask.ratio = k.at("ratio").get<double>();
    meta.mask.mode = mask_mode_from_name(k.at("mode").get<std::string>());
    meta.mask.n_queries = k.at("n_queries").get<int>();
    meta.mask.gamma_fps_count = k.at("gamma_fps_count").get<int>();
    const auto& l = j.at("loss");
    meta.loss.alpha = l.at("alpha").get<double>();
    meta.loss.gamma = l.at("gamma").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint config JSON: ") + e.what());
  }
  return meta;
}

MptModel<float> model_from_checkpoint(const Checkpoint& cp) {
  const CheckpointMeta meta = meta_from_checkpoint(cp);
  MptModel<float> model(meta.model, meta.seed);
  size_t used = 0;
  for (const auto& [name, t] : model.params()) {
    const TensorBlob* found = nullptr;
    for (const auto& [bname, blob] : cp.tensors) {
      if (bname == name) {
        found = &blob;
        break;
      }
    }
    if (!found) throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
    if (found->shape != t.shape())
      throw std::runtime_error("checkpoint: tensor '" + name + "' has shape " + shape_str(found->shape) +
                               ", model expects " + shape_str(t.shape()));
    auto handle = t;  // tensors share nodes; writing through the copy updates the model
    std::copy(found->data.begin(), found->data.end(), handle.value_mut().begin());
    ++used;
  }
  if (used != cp.tensors.size())
    throw std::runtime_error("checkpoint: " + std::to_string(cp.tensors.size() - used) + " unused tensor(s)");
  return model;
}

}  // namespace mpt
