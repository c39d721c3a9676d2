// auxsup/checkpoint.hpp
//
// Copyright 2026 The auxsup Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "auxsup/autodiff.hpp"
#include "auxsup/tensor.hpp"

namespace auxsup {

// Parameter checkpoint container, little-endian binary:
//   magic "AUXP", u32 count, then per entry:
//   u16 name length, name bytes, u8 rank, u32 dims..., values as f64.

namespace detail {

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file " + path);
  return v;
}

}  // namespace detail

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

inline void write_tensor_file(const std::string& path, const NamedTensors& entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
  os.write("AUXP", 4);
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, tensor] : entries) {
    if (name.size() > 0xffff) throw std::invalid_argument("checkpoint: name too long: " + name);
    detail::write_pod<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(tensor.rank()));
    for (std::size_t d : tensor.shape())
      detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(tensor.data()),
             static_cast<std::streamsize>(tensor.numel() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

inline NamedTensors read_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "AUXP", 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const auto count = detail::read_pod<std::uint32_t>(is, path);
  NamedTensors entries;
  entries.reserve(count);
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto name_len = detail::read_pod<std::uint16_t>(is, path);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw std::runtime_error("checkpoint: truncated file " + path);
    const auto rank = detail::read_pod<std::uint8_t>(is, path);
    if (rank > 3) throw std::runtime_error("checkpoint: bad rank in " + path);
    std::vector<std::size_t> shape;
    for (std::uint8_t d = 0; d < rank; ++d)
      shape.push_back(detail::read_pod<std::uint32_t>(is, path));
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated file " + path);
    entries.emplace_back(std::move(name), std::move(t));
  }
  return entries;
}

inline void save_parameters(const std::string& path, const ParameterStore& params) {
  NamedTensors entries;
  entries.reserve(params.all().size());
  for (const auto& p : params.all()) entries.emplace_back(p->name, p->value);
  write_tensor_file(path, entries);
}

// Loads values into an existing store; every checkpoint entry must match an
// existing parameter by name and shape.
inline void load_parameters(const std::string& path, ParameterStore& params) {
  NamedTensors entries = read_tensor_file(path);
  if (entries.size() != params.all().size())
    throw std::runtime_error("checkpoint: " + path + " has " + std::to_string(entries.size()) +
                             " entries, model expects " + std::to_string(params.all().size()));
  for (auto& [name, tensor] : entries) {
    ParameterPtr p = params.find(name);
    if (!p) throw std::runtime_error("checkpoint: unknown parameter '" + name + "' in " + path);
    if (!p->value.same_shape(tensor))
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "': file " +
                               tensor.shape_str() + " vs model " + p->value.shape_str());
    p->value = std::move(tensor);
  }
}

}  // namespace auxsup
