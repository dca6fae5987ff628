// Copyright 2026 The clinsynth Authors.
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

#ifndef CLINSYNTH_IO_HPP_
#define CLINSYNTH_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace clinsynth {

std::string read_file(const std::filesystem::path& path);

// Writes via a temporary sibling and rename, creating parent directories.
void write_file(const std::filesystem::path& path, std::string_view contents);

void append_line(const std::filesystem::path& path, std::string_view line);

std::vector<std::string> read_lines(const std::filesystem::path& path);

/// Hex FNV-1a of a file's bytes.
std::string hash_file(const std::filesystem::path& path);

std::string hex64(std::uint64_t value);

std::vector<std::string> split_whitespace(std::string_view text);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace clinsynth

#endif  // CLINSYNTH_IO_HPP_
