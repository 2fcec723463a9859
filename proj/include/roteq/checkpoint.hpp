#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "roteq/autodiff.hpp"
#include "roteq/common.hpp"
#include "roteq/config.hpp"
#include "roteq/equivariant.hpp"
#include "roteq/tensor.hpp"

namespace roteq {

// Checkpoint layout ("REQ1"): magic, u32 config text length, config text
// (key=value lines), u32 parameter count, then per parameter a u32 name
// length, the name bytes, and a gtensor ("GT01") dump. Parameters that
// are not rank 4 are stored with folded dims: rank-1 {n} as (n,1,1,1),
// rank-5 {a,b,c,d,e} as (a*b, c, d, e); the config block disambiguates.

namespace detail {

inline GroupTensor to_gt(const ad::Buf<float>& b) {
  int d[4] = {1, 1, 1, 1};
  if (b.rank() == 1) {
    d[0] = b.dim(0);
  } else if (b.rank() == 4) {
    for (int i = 0; i < 4; ++i) d[i] = b.dim(i);
  } else if (b.rank() == 5) {
    d[0] = b.dim(0) * b.dim(1);
    d[1] = b.dim(2);
    d[2] = b.dim(3);
    d[3] = b.dim(4);
  } else {
    throw ShapeMismatch("checkpoint: unsupported parameter rank");
  }
  GroupTensor g(d[0], d[1], d[2], d[3]);
  g.data = b.v;
  return g;
}

}  // namespace detail

struct Checkpoint {
  ConfigMap config;
  std::vector<std::pair<std::string, GroupTensor>> params;

  const GroupTensor* find(const std::string& name) const {
    for (const auto& [n, t] : params)
      if (n == name) return &t;
    return nullptr;
  }
};

inline void save_checkpoint(
    const std::string& path, const ConfigMap& config,
    const std::vector<std::pair<std::string, const ad::Buf<float>*>>& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  const std::string cfg = serialize_config(config);
  const uint32_t cfg_len = uint32_t(cfg.size());
  const uint32_t count = uint32_t(params.size());
  os.write("REQ1", 4);
  os.write(reinterpret_cast<const char*>(&cfg_len), 4);
  os.write(cfg.data(), std::streamsize(cfg.size()));
  os.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& [name, buf] : params) {
    const uint32_t nl = uint32_t(name.size());
    os.write(reinterpret_cast<const char*>(&nl), 4);
    os.write(name.data(), std::streamsize(name.size()));
    dump_tensor(os, detail::to_gt(*buf));
  }
  if (!os) throw IoError("short write: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "REQ1")
    throw IoError("bad checkpoint magic in " + path);
  uint32_t cfg_len = 0;
  is.read(reinterpret_cast<char*>(&cfg_len), 4);
  if (!is || cfg_len > (1u << 20))
    throw IoError("implausible config block in " + path);
  std::string cfg(cfg_len, '\0');
  is.read(cfg.data(), cfg_len);
  uint32_t count = 0;
  is.read(reinterpret_cast<char*>(&count), 4);
  if (!is || count > (1u << 16))
    throw IoError("implausible parameter count in " + path);
  Checkpoint ck;
  ck.config = parse_config_text(cfg);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t nl = 0;
    is.read(reinterpret_cast<char*>(&nl), 4);
    if (!is || nl > 4096) throw IoError("implausible name length in " + path);
    std::string name(nl, '\0');
    is.read(name.data(), nl);
    if (!is) throw IoError("truncated checkpoint: " + path);
    ck.params.emplace_back(std::move(name), load_tensor(is));
  }
  return ck;
}

inline ConfigMap backbone_config_to_map(const eq::BackboneConfig& c) {
  ConfigMap m;
  m["group_order"] = std::to_string(c.group_order);
  m["widths"] = join_ints(c.widths);
  m["strides"] = join_ints(c.strides);
  m["kernel_size"] = std::to_string(c.kernel_size);
  m["pyramid"] = join_ints(c.pyramid);
  return m;
}

inline eq::BackboneConfig backbone_config_from_map(const ConfigMap& m) {
  eq::BackboneConfig c;
  c.group_order = get_int(m, "group_order", c.group_order);
  c.widths = get_int_list(m, "widths", c.widths);
  c.strides = get_int_list(m, "strides", c.strides);
  c.kernel_size = get_int(m, "kernel_size", c.kernel_size);
  c.pyramid = get_int_list(m, "pyramid", c.pyramid);
  c.validate();
  return c;
}

/// Saves a backbone plus arbitrary extra config entries and extra named
/// tensors (e.g. optimizer moments).
inline void save_backbone(
    const std::string& path, eq::Backbone<float>& model, ConfigMap extras = {},
    const std::vector<std::pair<std::string, const ad::Buf<float>*>>& extra_params =
        {}) {
  ConfigMap cfg = backbone_config_to_map(model.cfg);
  for (auto& [k, v] : extras) {
    if (cfg.count(k)) throw ConfigError("checkpoint extra key collides: " + k);
    cfg[k] = v;
  }
  std::vector<std::pair<std::string, const ad::Buf<float>*>> ps;
  for (auto* p : model.params()) ps.emplace_back(p->name, &p->value);
  for (auto& [n, b] : extra_params) ps.emplace_back(n, b);
  save_checkpoint(path, cfg, ps);
}

struct LoadedBackbone {
  eq::Backbone<float> model;
  ConfigMap config;  // full config block, backbone keys included
  std::vector<std::pair<std::string, GroupTensor>> extra_params;
};

inline LoadedBackbone load_backbone(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  LoadedBackbone lb{eq::Backbone<float>(backbone_config_from_map(ck.config)),
                    std::move(ck.config),
                    {}};
  for (auto& [name, t] : ck.params) {
    bool matched = false;
    for (auto* p : lb.model.params()) {
      if (p->name != name) continue;
      if (p->value.size() != t.data.size())
        throw ShapeMismatch("checkpoint parameter '" + name + "' has wrong size");
      p->value.v = t.data;
      matched = true;
      break;
    }
    if (!matched) lb.extra_params.emplace_back(std::move(name), std::move(t));
  }
  return lb;
}

}  // namespace roteq
