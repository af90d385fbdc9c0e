#include "saan/checkpoint.hpp"

#include <limits>
#include <set>

#include "bytes.hpp"
#include "saan/error.hpp"
#include "saan/io.hpp"

namespace saan {

std::string encode_checkpoint(const ModelParams<float>& params) {
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ValidationError("checkpoint: parameter name too long: " + name);
    }
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.dims()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.data()) w.f32(v);
  }
  return w.take();
}

ModelParams<float> decode_checkpoint(std::string_view bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  if (r.bytes(kCheckpointMagic.size(), "magic") != kCheckpointMagic) {
    throw ParseError("checkpoint: bad magic (expected SAANCK1)", 0);
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(version));
  const std::uint32_t count = r.u32("parameter count");
  ModelParams<float> params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t name_len = r.u16("name length");
    if (name_len == 0) r.fail("empty parameter name");
    std::string name(r.bytes(name_len, "name"));
    const std::size_t rank = r.u8("rank");
    if (rank < 1 || rank > 4) r.fail("parameter '" + name + "' has rank " + std::to_string(rank));
    Shape dims(rank);
    std::size_t volume = 1;
    for (auto& d : dims) {
      d = r.u32("dim");
      if (d == 0) r.fail("parameter '" + name + "' has a zero extent");
      volume *= d;
    }
    if ((bytes.size() - r.offset()) / 4 < volume) {
      r.fail("truncated data for parameter '" + name + "'");
    }
    std::vector<float> data(volume);
    for (auto& v : data) v = r.f32("value");
    if (params.contains(name)) r.fail("duplicate parameter '" + name + "'");
    params.add(std::move(name), Tensor(std::move(dims), std::move(data)));
  }
  if (!r.at_end()) r.fail("trailing bytes after last parameter");
  return params;
}

void validate_inventory(const ModelParams<float>& params, const NetworkConfig& config) {
  std::set<std::string, std::less<>> expected;
  for (const auto& spec : param_inventory(config)) {
    expected.insert(spec.name);
    if (!params.contains(spec.name)) throw InventoryError(spec.name, "missing from checkpoint");
    const auto& t = params.at(spec.name);
    if (t.dims() != spec.shape) {
      throw InventoryError(spec.name, "shape " + shape_string(t.dims()) + " but the " + config.name +
                                          " model expects " + shape_string(spec.shape));
    }
  }
  for (const auto& [name, _] : params) {
    if (!expected.count(name)) throw InventoryError(name, "not part of the " + config.name + " model");
  }
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& params) {
  write_file(path, encode_checkpoint(params));
}

ModelParams<float> read_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

ModelParams<float> load_checkpoint(const std::filesystem::path& path, const NetworkConfig& config) {
  ModelParams<float> params = read_checkpoint(path);
  validate_inventory(params, config);
  return params;
}

NetworkConfig detect_config(const ModelParams<float>& params) {
  const NetworkConfig tiny = NetworkConfig::tiny();
  try {
    validate_inventory(params, tiny);
    return tiny;
  } catch (const InventoryError&) {
  }
  const NetworkConfig standard = NetworkConfig::standard();
  validate_inventory(params, standard);
  return standard;
}

}  // namespace saan
