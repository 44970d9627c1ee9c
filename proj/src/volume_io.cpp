#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "segcl/phantom.hpp"

namespace segcl::phantom {

namespace {

constexpr const char* kMagic = "SEGCLVOL1";

const std::array<const char*, 8> kHeaderKeys = {
    "magic", "dims", "spacing_um", "domain", "dtype", "has_mask", "class_names", "volume_id"};

}  // namespace

void save_volume(const std::string& path, const Volume& volume, const MaskVolume* mask) {
  volume.validate();
  if (mask) mask->validate(&volume);

  nlohmann::json header;
  header["magic"] = kMagic;
  header["dims"] = {volume.depth(), volume.height(), volume.width()};
  header["spacing_um"] = {volume.spacing_um[0], volume.spacing_um[1], volume.spacing_um[2]};
  header["domain"] = to_string(volume.domain);
  header["dtype"] = "f32le";
  header["has_mask"] = mask != nullptr;
  header["class_names"] = mask ? mask->class_names : std::vector<std::string>{};
  header["volume_id"] = volume.volume_id;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), "io.open", "cannot open for writing: " + path);
  out << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(volume.voxels.ptr()),
            static_cast<std::streamsize>(volume.voxels.numel() * sizeof(float)));
  if (mask) {
    out.write(reinterpret_cast<const char*>(mask->labels.ptr()),
              static_cast<std::streamsize>(mask->labels.numel()));
  }
  require(out.good(), "io.write", "short write: " + path);
}

std::pair<Volume, std::optional<MaskVolume>> load_volume(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "io.open", "cannot open for reading: " + path);

  std::string header_line;
  require(static_cast<bool>(std::getline(in, header_line)), "io.header",
          "missing header line: " + path);

  nlohmann::json header = nlohmann::json::parse(header_line, nullptr, false);
  require(!header.is_discarded() && header.is_object(), "io.header",
          "header is not a JSON object: " + path);
  for (const auto& [key, value] : header.items()) {
    bool known = false;
    for (const char* k : kHeaderKeys) known |= key == k;
    require(known, "io.header", "unknown header key '" + key + "': " + path);
  }
  for (const char* k : kHeaderKeys)
    require(header.contains(k), "io.header", std::string("header missing key '") + k + "': " + path);
  require(header["magic"] == kMagic, "io.header", "bad magic: " + path);
  require(header["dtype"] == "f32le", "io.header", "unsupported dtype: " + path);

  std::array<int, 3> dims{};
  try {
    dims = header["dims"].get<std::array<int, 3>>();
  } catch (const nlohmann::json::exception&) {
    throw Error("io.header", "dims must be a 3-element integer array: " + path);
  }
  require(dims[0] >= 2 && dims[1] >= 16 && dims[2] >= 16, "io.shape",
          "dims violate volume invariants: " + path);

  Volume volume;
  try {
    auto spacing = header["spacing_um"].get<std::array<float, 3>>();
    volume.spacing_um = spacing;
  } catch (const nlohmann::json::exception&) {
    throw Error("io.header", "spacing_um must be a 3-element array: " + path);
  }
  for (float s : volume.spacing_um)
    require(s > 0.0f, "io.shape", "non-positive spacing: " + path);
  volume.domain = domain_from_string(header["domain"].get<std::string>());
  volume.volume_id = header["volume_id"].get<std::string>();
  volume.voxels = Tensor<float>({dims[0], dims[1], dims[2]});

  in.read(reinterpret_cast<char*>(volume.voxels.ptr()),
          static_cast<std::streamsize>(volume.voxels.numel() * sizeof(float)));
  require(in.gcount() == static_cast<std::streamsize>(volume.voxels.numel() * sizeof(float)),
          "io.truncated", "voxel payload truncated: " + path);
  for (float v : volume.voxels.data)
    require(v >= 0.0f && v <= 1.0f, "io.range", "voxel intensity outside [0,1]: " + path);

  std::optional<MaskVolume> mask;
  bool has_mask = header["has_mask"].get<bool>();
  auto class_names = header["class_names"].get<std::vector<std::string>>();
  if (has_mask) {
    require(!class_names.empty(), "io.header", "has_mask with empty class_names: " + path);
    MaskVolume m;
    m.class_names = class_names;
    m.labels =
        Tensor<std::uint8_t>({dims[0], dims[1], dims[2], static_cast<int>(class_names.size())});
    in.read(reinterpret_cast<char*>(m.labels.ptr()),
            static_cast<std::streamsize>(m.labels.numel()));
    require(in.gcount() == static_cast<std::streamsize>(m.labels.numel()), "io.truncated",
            "mask payload truncated: " + path);
    for (std::uint8_t v : m.labels.data)
      require(v <= 1, "io.mask", "mask channel value outside {0,1}: " + path);
    mask = std::move(m);
  }

  // Reject trailing bytes so the format stays unambiguous.
  in.peek();
  require(in.eof(), "io.truncated", "trailing bytes after payload: " + path);

  return {std::move(volume), std::move(mask)};
}

}  // namespace segcl::phantom
