#include "raincycle/serialize.hpp"

#include <cstring>

#include <nlohmann/json.hpp>

#include "raincycle/error.hpp"
#include "raincycle/image.hpp"

namespace raincycle {

namespace {

constexpr char kMagic[4] = {'R', 'C', 'T', 'A'};

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint32_t get_u32(const uint8_t* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
  return v;
}

uint64_t get_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

const Tensor& Archive::find(const std::string& name) const {
  for (const NamedTensor& nt : tensors) {
    if (nt.name == name) return nt.tensor;
  }
  throw IoError("archive: missing tensor '" + name + "'");
}

bool Archive::contains(const std::string& name) const {
  for (const NamedTensor& nt : tensors) {
    if (nt.name == name) return true;
  }
  return false;
}

std::vector<uint8_t> archive_to_bytes(const Archive& a) {
  nlohmann::json header = nlohmann::json::array();
  uint64_t offset = 0;
  for (const NamedTensor& nt : a.tensors) {
    nlohmann::json rec;
    rec["name"] = nt.name;
    rec["dtype"] = "f64";
    rec["shape"] = nt.tensor.shape;
    rec["offset"] = offset;
    header.push_back(rec);
    offset += static_cast<uint64_t>(nt.tensor.numel()) * 8;
  }
  const std::string htext = header.dump();

  std::vector<uint8_t> out;
  out.reserve(20 + htext.size() + offset);
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, a.version);
  put_u64(out, a.config_hash);
  put_u32(out, static_cast<uint32_t>(htext.size()));
  out.insert(out.end(), htext.begin(), htext.end());
  for (const NamedTensor& nt : a.tensors) {
    const size_t bytes = nt.tensor.data.size() * 8;
    const size_t pos = out.size();
    out.resize(pos + bytes);
    std::memcpy(out.data() + pos, nt.tensor.data.data(), bytes);
  }
  return out;
}

Archive archive_from_bytes(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw IoError("archive: bad magic, not a tensor archive");
  }
  Archive a;
  a.version = get_u32(bytes.data() + 4);
  if (a.version != kArchiveVersion) {
    throw IoError("archive: format version " + std::to_string(a.version) +
                  " unsupported, expected " + std::to_string(kArchiveVersion));
  }
  a.config_hash = get_u64(bytes.data() + 8);
  const uint32_t hlen = get_u32(bytes.data() + 16);
  if (20 + static_cast<size_t>(hlen) > bytes.size()) {
    throw IoError("archive: truncated header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 20, bytes.begin() + 20 + hlen);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("archive: header parse failed: ") + e.what());
  }
  const size_t payload = 20 + static_cast<size_t>(hlen);
  for (const auto& rec : header) {
    NamedTensor nt;
    nt.name = rec.at("name").get<std::string>();
    const std::string dtype = rec.at("dtype").get<std::string>();
    if (dtype != "f64") throw IoError("archive: unsupported dtype " + dtype);
    const std::vector<int> shape = rec.at("shape").get<std::vector<int>>();
    const uint64_t off = rec.at("offset").get<uint64_t>();
    nt.tensor = Tensor(shape);
    const size_t nbytes = nt.tensor.data.size() * 8;
    if (payload + off + nbytes > bytes.size()) {
      throw IoError("archive: payload for '" + nt.name + "' out of bounds");
    }
    std::memcpy(nt.tensor.data.data(), bytes.data() + payload + off, nbytes);
    a.tensors.push_back(std::move(nt));
  }
  return a;
}

void save_archive(const std::string& path, const Archive& a) {
  const std::vector<uint8_t> bytes = archive_to_bytes(a);
  write_binary_file(path, bytes.data(), bytes.size());
}

Archive load_archive(const std::string& path) {
  return archive_from_bytes(read_binary_file(path));
}

}  // namespace raincycle
