#include "seqstn/checkpoint.hpp"

#include <fstream>
#include <map>

#include "seqstn/bytesio.hpp"

namespace seqstn {

namespace {
constexpr uint16_t kCkptVersion = 1;

void write_table(std::ostream& os, const std::vector<std::pair<std::string, Tensor>>& table) {
  bytesio::put_u32le(os, static_cast<uint32_t>(table.size()));
  for (const auto& [name, tensor] : table) {
    bytesio::put_u32le(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(os, tensor);
  }
}

std::vector<std::pair<std::string, Tensor>> read_table(std::istream& is) {
  const uint32_t count = bytesio::get_u32le(is);
  std::vector<std::pair<std::string, Tensor>> table;
  table.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t len = bytesio::get_u32le(is);
    if (len > 4096) throw FormatError("checkpoint: tensor name too long");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw FormatError("checkpoint: truncated name");
    table.emplace_back(std::move(name), read_tensor(is));
  }
  return table;
}
}  // namespace

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  bytesio::put_magic(os, "CKPT");
  bytesio::put_u16le(os, kCkptVersion);
  bytesio::put_u16le(os, static_cast<uint16_t>(ckpt.kind));
  bytesio::put_u16le(os, ckpt.d);
  write_table(os, ckpt.params);
  write_table(os, ckpt.slots);
  bytesio::put_u64le(os, ckpt.step);
  if (!os) throw FormatError("short write to " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  bytesio::expect_magic(is, "CKPT", "checkpoint");
  const uint16_t version = bytesio::get_u16le(is);
  if (version != kCkptVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  const uint16_t kind = bytesio::get_u16le(is);
  if (kind < 1 || kind > 3) throw FormatError("checkpoint: unknown model kind");
  ckpt.kind = static_cast<ModelKind>(kind);
  ckpt.d = bytesio::get_u16le(is);
  ckpt.params = read_table(is);
  ckpt.slots = read_table(is);
  ckpt.step = bytesio::get_u64le(is);
  return ckpt;
}

Checkpoint snapshot_model(Model& m, uint64_t step, const std::vector<Tensor>* slots) {
  Checkpoint ckpt;
  ckpt.kind = m.kind();
  ckpt.d = static_cast<uint16_t>(m.config().d);
  ckpt.step = step;
  std::vector<ParamRef> refs = m.params();
  for (const ParamRef& r : refs) ckpt.params.emplace_back(r.name, *r.value);
  if (slots) {
    if (slots->size() != refs.size()) throw ValueError("snapshot_model: slot count mismatch");
    for (size_t i = 0; i < refs.size(); ++i)
      ckpt.slots.emplace_back(refs[i].name, (*slots)[i]);
  }
  return ckpt;
}

void load_model_params(Model& m, const Checkpoint& ckpt) {
  if (ckpt.kind != m.kind())
    throw FormatError("checkpoint/model mismatch: checkpoint holds a " +
                      model_kind_name(ckpt.kind) + " model");
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, tensor] : ckpt.params) by_name[name] = &tensor;
  std::vector<ParamRef> refs = m.params();
  if (by_name.size() != refs.size())
    throw FormatError("checkpoint/model mismatch: parameter count differs");
  for (ParamRef& r : refs) {
    auto it = by_name.find(r.name);
    if (it == by_name.end())
      throw FormatError("checkpoint/model mismatch: missing tensor " + r.name);
    if (!it->second->same_shape(*r.value))
      throw FormatError("checkpoint/model mismatch: tensor " + r.name + " has shape " +
                        it->second->shape_str() + ", model wants " + r.value->shape_str());
    *r.value = *it->second;
  }
}

}  // namespace seqstn
