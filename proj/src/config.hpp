// config.hpp
//
// Copyright 2026 VQP Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied. See the License for the specific language governing
// permissions and limitations under the License.

#ifndef VQP_CONFIG_HPP_
#define VQP_CONFIG_HPP_

#include <cstdint>
#include <map>
#include <string>

namespace vqp {

// Flat key=value configuration. Keys are namespaced with dots
// (pretrain.kappa, tcn.layers, ...). '#' starts a comment; blank lines
// ignored. Later Set() calls (CLI flags) override file values.
class Config {
 public:
  Config() = default;
  static Config FromFile(const std::string& path);
  void Set(const std::string& key, const std::string& value);
  bool Has(const std::string& key) const;

  std::string GetString(const std::string& key, const std::string& dflt) const;
  int64_t GetInt(const std::string& key, int64_t dflt) const;
  double GetDouble(const std::string& key, double dflt) const;
  bool GetBool(const std::string& key, bool dflt) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace vqp

#endif  // VQP_CONFIG_HPP_
