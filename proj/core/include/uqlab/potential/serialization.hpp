/*
 * Copyright 2026 The uqlab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "uqlab/potential/model.hpp"

namespace uqlab {

inline constexpr int kModelFormatVersion = 1;

nlohmann::json descriptor_to_json(const DescriptorConfig& cfg);
DescriptorConfig descriptor_from_json(const nlohmann::json& j);
nlohmann::json architecture_to_json(const Architecture& arch);
Architecture architecture_from_json(const nlohmann::json& j);

// Parameter segments are stored as base64 little-endian float64 blocks.
nlohmann::json model_to_json(const ModelBundle& model);
ModelBundle model_from_json(const nlohmann::json& j);

void save_model(const ModelBundle& model, const std::filesystem::path& path);
ModelBundle load_model(const std::filesystem::path& path);

nlohmann::json structure_to_json(const Structure& s);
Structure structure_from_json(const nlohmann::json& j);

// Reads / writes a whole JSON document, mapping failures to IoError.
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace uqlab
