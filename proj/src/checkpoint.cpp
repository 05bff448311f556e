/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 teedepth contributors. All rights reserved.
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "teedepth/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "teedepth/common.hpp"

namespace teedepth {

namespace {

constexpr char kMagic[8] = {'T', 'D', 'C', 'K', 'P', 'T', '0', '1'};

}  // namespace

void save_checkpoint(const std::string& path, const nlohmann::ordered_json& meta,
                     const std::vector<nn::StateEntry<float>>& entries) {
  nlohmann::ordered_json header = meta;
  nlohmann::ordered_json index = nlohmann::ordered_json::array();
  for (const auto& e : entries)
    index.push_back({{"name", e.name}, {"size", e.data->size()}});
  header["tensors"] = std::move(index);
  std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  std::uint64_t len = header_text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (const auto& e : entries)
    out.write(reinterpret_cast<const char*>(e.data->data()),
              static_cast<std::streamsize>(e.data->size() * sizeof(float)));
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

namespace {

nlohmann::ordered_json read_header(std::ifstream& in, const std::string& path) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("truncated checkpoint header: " + path);
  return nlohmann::ordered_json::parse(text);
}

}  // namespace

nlohmann::ordered_json load_checkpoint(
    const std::string& path, const std::vector<nn::StateEntry<float>>& entries) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  nlohmann::ordered_json header = read_header(in, path);

  std::map<std::string, std::vector<float>*> by_name;
  for (const auto& e : entries) by_name[e.name] = e.data;

  for (const auto& t : header.at("tensors")) {
    std::string name = t.at("name").get<std::string>();
    std::size_t size = t.at("size").get<std::size_t>();
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint tensor not expected by model: " + name);
    if (it->second->size() != size)
      throw std::runtime_error("checkpoint tensor size mismatch: " + name);
    in.read(reinterpret_cast<char*>(it->second->data()),
            static_cast<std::streamsize>(size * sizeof(float)));
    by_name.erase(it);
  }
  if (!by_name.empty())
    throw std::runtime_error("checkpoint is missing tensor: " +
                             by_name.begin()->first);
  if (!in) throw std::runtime_error("truncated checkpoint payload: " + path);
  return header;
}

nlohmann::ordered_json peek_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  return read_header(in, path);
}

}  // namespace teedepth
