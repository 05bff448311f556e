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

#ifndef TEEDEPTH_CHECKPOINT_HPP
#define TEEDEPTH_CHECKPOINT_HPP

#include <string>
#include <vector>

#include "json.hpp"
#include "teedepth/nn/layers.hpp"

namespace teedepth {

/**
 * Self-describing checkpoint archive.
 *
 * Layout: 8-byte magic "TDCKPT01", u64 little-endian header length, UTF-8
 * JSON header, then the raw float32 buffers in header index order. Loading
 * restores buffers byte for byte, so reloaded models reproduce outputs
 * bit-exactly.
 */
void save_checkpoint(const std::string& path, const nlohmann::ordered_json& meta,
                     const std::vector<nn::StateEntry<float>>& entries);

/// Reads the meta header and fills `entries` (matched by name and size).
nlohmann::ordered_json load_checkpoint(const std::string& path,
                                       const std::vector<nn::StateEntry<float>>& entries);

/// Reads only the meta header.
nlohmann::ordered_json peek_checkpoint(const std::string& path);

}  // namespace teedepth

#endif  // TEEDEPTH_CHECKPOINT_HPP
