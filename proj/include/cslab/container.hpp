#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cslab/tensor.hpp"

namespace cslab {

// On-disk format for datasets, dictionaries and checkpoints: an 8-byte magic,
// a little-endian u64 header length, a JSON header (kind, named tensor
// shapes, free-form meta, payload checksum), then the tensor payload as raw
// little-endian IEEE-754 doubles in declaration order. The checksum covers
// the payload bytes; a mismatch at load is an error.
struct Container {
  std::string kind;
  std::vector<std::string> names;
  std::vector<Tensor> tensors;
  nlohmann::json meta = nlohmann::json::object();

  void push(std::string name, Tensor t);
  bool has(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
};

void save_container(const std::string& path, const Container& c);
Container load_container(const std::string& path);

std::uint64_t fnv1a64(const void* data, std::size_t len);
// Checksum of a tensor list as it would appear in a container payload.
std::uint64_t payload_checksum(const std::vector<Tensor>& tensors);
std::string checksum_hex(std::uint64_t sum);

}  // namespace cslab
