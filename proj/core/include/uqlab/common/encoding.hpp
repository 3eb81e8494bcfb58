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

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace uqlab {

std::string base64_encode(std::span<const unsigned char> bytes);
std::vector<unsigned char> base64_decode(std::string_view text);

// Little-endian IEEE-754 doubles <-> base64.
std::string encode_doubles(std::span<const double> values);
std::vector<double> decode_doubles(std::string_view text);

// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

}  // namespace uqlab
