#include "hmar/model/checkpoint.hpp"

#include "hmar/common/binary_io.hpp"
#include "hmar/common/kv.hpp"

namespace hmar {
namespace {

constexpr std::string_view kProvenance = "[run]\n";

}  // namespace

std::string checkpoint_to_bytes(const Checkpoint& ck) {
  io::ByteWriter w;
  w.magic("HMAR");
  w.u32(kCheckpointVersion);
  const std::string blob = ck.config.to_text() + "meta.phase = " + std::to_string(ck.phase) +
                           "\nmeta.step = " + std::to_string(ck.step) + "\n" + std::string(kProvenance) +
                           ck.run_config;
  w.str(blob);
  w.u32(static_cast<std::uint32_t>(ck.params.size()));
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    const Tensor<float>& t = ck.params.at(i);
    w.str(ck.params.names()[i]);
    w.u32(0);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.data()) w.f32(v);
  }
  return w.bytes();
}

Checkpoint checkpoint_from_bytes(const std::string& bytes, const std::string& what) {
  io::ByteReader r(bytes, what);
  r.expect_magic("HMAR");
  r.expect_version(kCheckpointVersion);
  const std::string blob = r.str();
  Checkpoint ck;
  const auto split = blob.find(kProvenance);
  std::string head = blob.substr(0, split);
  if (split != std::string::npos) ck.run_config = blob.substr(split + kProvenance.size());
  std::string model_text;
  try {
    for (const auto& kv : parse_key_values(head, what)) {
      if (kv.key == "meta.phase") {
        ck.phase = static_cast<std::uint32_t>(parse_size(kv.value, kv.key));
      } else if (kv.key == "meta.step") {
        ck.step = parse_size(kv.value, kv.key);
      } else {
        model_text += kv.key + " = " + kv.value + "\n";
      }
    }
    ck.config = ModelConfig::from_text(model_text);
  } catch (const InvalidArgument& e) {
    throw FormatError(what + ": bad config blob: " + e.what());
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    const std::uint32_t dtype = r.u32();
    if (dtype != 0) throw FormatError(what + ": tensor \"" + name + "\" has unsupported dtype " + std::to_string(dtype));
    Shape shape(r.u32());
    for (auto& d : shape) d = r.u32();
    Tensor<float> t(shape);
    for (auto& v : t.data()) v = r.f32();
    ck.params.add(name, std::move(t));
  }
  if (!r.at_end()) throw FormatError(what + ": trailing bytes after tensor table");
  validate_params(ck.params, ck.config);
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  io::write_file_atomic(path, checkpoint_to_bytes(ck));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_bytes(io::read_file(path), path.string());
}

}  // namespace hmar
