/* Copyright 2026 The blocksparse Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "blocksparse/hardware.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <thread>

namespace blocksparse {
namespace {

std::string read_line(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string s;
  std::getline(in, s);
  return s;
}

}  // namespace

std::size_t hardware_cores() {
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

std::string hardware_tag() {
  namespace fs = std::filesystem;
  std::map<std::string, std::string> caches;
  const fs::path root = "/sys/devices/system/cpu/cpu0/cache";
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(root, ec)) {
    if (entry.path().filename().string().rfind("index", 0) != 0) continue;
    const std::string level = read_line(entry.path() / "level");
    const std::string type = read_line(entry.path() / "type");
    const std::string size = read_line(entry.path() / "size");
    if (level.empty() || size.empty() || type == "Instruction") continue;
    caches["L" + level + (type == "Data" ? "d" : "")] = size;
  }
  std::string tag = "cores=" + std::to_string(hardware_cores());
  if (caches.empty()) return tag + ";unknown";
  for (const auto& [name, size] : caches) tag += ";" + name + "=" + size;
  return tag;
}

}  // namespace blocksparse
