#include "cslab/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "cslab/errors.hpp"

namespace cslab {

namespace {

constexpr char kMagic[8] = {'C', 'S', 'L', 'A', 'B', '0', '0', '1'};

void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::string encode_payload(const std::vector<Tensor>& tensors) {
  std::string out;
  std::size_t total = 0;
  for (const auto& t : tensors) total += t.size();
  out.reserve(total * 8);
  for (const auto& t : tensors)
    for (std::size_t i = 0; i < t.size(); ++i)
      put_u64_le(out, std::bit_cast<std::uint64_t>(t[i]));
  return out;
}

}  // namespace

void Container::push(std::string name, Tensor t) {
  names.push_back(std::move(name));
  tensors.push_back(std::move(t));
}

bool Container::has(const std::string& name) const {
  for (const auto& n : names)
    if (n == name) return true;
  return false;
}

const Tensor& Container::get(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return tensors[i];
  throw IoError("container has no tensor named " + name);
}

std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 14695981039346656037ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t payload_checksum(const std::vector<Tensor>& tensors) {
  const std::string payload = encode_payload(tensors);
  return fnv1a64(payload.data(), payload.size());
}

std::string checksum_hex(std::uint64_t sum) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[sum & 0xF];
    sum >>= 4;
  }
  return out;
}

void save_container(const std::string& path, const Container& c) {
  if (c.names.size() != c.tensors.size()) throw IoError("container names/tensors mismatch");
  const std::string payload = encode_payload(c.tensors);

  nlohmann::json header;
  header["kind"] = c.kind;
  header["tensors"] = nlohmann::json::array();
  for (std::size_t i = 0; i < c.names.size(); ++i)
    header["tensors"].push_back({{"name", c.names[i]}, {"shape", c.tensors[i].shape()}});
  header["meta"] = c.meta;
  header["payload_checksum"] = checksum_hex(fnv1a64(payload.data(), payload.size()));
  const std::string head = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  std::string len;
  put_u64_le(len, head.size());
  out.write(len.data(), 8);
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failed: " + path);
}

Container load_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("not a cslab container: " + path);
  unsigned char lenbuf[8];
  in.read(reinterpret_cast<char*>(lenbuf), 8);
  if (!in) throw IoError("truncated header: " + path);
  const std::uint64_t head_len = get_u64_le(lenbuf);
  std::string head(head_len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head_len));
  if (!in) throw IoError("truncated header: " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(head);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad container header in " + path + ": " + e.what());
  }

  Container c;
  c.kind = header.value("kind", "");
  c.meta = header.value("meta", nlohmann::json::object());

  std::size_t total = 0;
  std::vector<std::vector<std::size_t>> shapes;
  for (const auto& t : header.at("tensors")) {
    c.names.push_back(t.at("name").get<std::string>());
    shapes.push_back(t.at("shape").get<std::vector<std::size_t>>());
    std::size_t n = shapes.back().empty() ? 0 : 1;
    for (auto d : shapes.back()) n *= d;
    total += n;
  }

  std::string payload(total * 8, '\0');
  in.read(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!in || in.gcount() != static_cast<std::streamsize>(payload.size()))
    throw IoError("truncated payload: " + path);

  const std::string want = header.at("payload_checksum").get<std::string>();
  const std::string got = checksum_hex(fnv1a64(payload.data(), payload.size()));
  if (want != got)
    throw IoError("checksum mismatch in " + path + " (expected " + want + ", got " + got + ")");

  const auto* p = reinterpret_cast<const unsigned char*>(payload.data());
  for (const auto& shape : shapes) {
    std::size_t n = shape.empty() ? 0 : 1;
    for (auto d : shape) n *= d;
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i, p += 8)
      data[i] = std::bit_cast<double>(get_u64_le(p));
    c.tensors.emplace_back(shape, std::move(data));
  }
  return c;
}

}  // namespace cslab
