// Copyright 2026 The udgs Authors. All Rights Reserved.
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

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace udgs::train {

/// Flat key=value run configuration. Every key has a registered default;
/// unknown keys are rejected. Lines starting with '#' are comments.
class Config {
 public:
  struct Key {
    std::string name;
    std::string default_value;
    std::string help;
  };
  static const std::vector<Key>& registry();

  Config();

  void load_file(const std::filesystem::path& path);
  void set(std::string_view key, std::string_view value);
  bool contains(std::string_view key) const;

  const std::string& text(std::string_view key) const;
  double number(std::string_view key) const;
  long integer(std::string_view key) const;
  std::size_t count(std::string_view key) const;  // integer >= 0
  std::vector<long> integer_list(std::string_view key) const;

  /// Every key in registry order as "key = value" lines.
  std::string resolved() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

}  // namespace udgs::train
