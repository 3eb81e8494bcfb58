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

namespace uqlab {

// Raises glibc's mmap and trim thresholds so the large, short-lived tape
// buffers are recycled from the heap instead of being mapped and unmapped on
// every step. No-op on other C libraries. Call once at program start.
void configure_allocator();

}  // namespace uqlab
