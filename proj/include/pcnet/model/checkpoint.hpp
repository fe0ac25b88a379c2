#pragma once

// Checkpoint layout: a text manifest terminated by "end\n", then one PCTN
// record per manifest entry in the same order.
//
//   pcnet-checkpoint 1
//   variant PCNet
//   spatial_rank 2
//   base_channels 16
//   levels 3
//   seed 0
//   tensors 123
//   param enc1.conv1.weight 16,1,3,3
//   buffer enc1.bn1.running_mean 16
//   ...
//   end

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pcnet/model/network.hpp"

namespace pcnet::model {

namespace ckpt {

struct ManifestEntry {
  std::string kind, name;
  std::vector<std::size_t> dims;
};

inline std::string dims_text(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.rank(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out;
}

template <Real T>
std::vector<std::pair<ManifestEntry, Tensor<T>*>> checkpoint_entries(ModelGraph<T>& m) {
  std::vector<std::pair<ManifestEntry, Tensor<T>*>> out;
  for (auto* p : m.parameters()) out.push_back({{"param", p->name, p->value.shape().dims()}, &p->value});
  for (const auto& [name, st] : m.store().buffers()) {
    out.push_back({{"buffer", name + ".running_mean", st->running_mean.shape().dims()}, &st->running_mean});
    out.push_back({{"buffer", name + ".running_var", st->running_var.shape().dims()}, &st->running_var});
  }
  return out;
}

}  // namespace ckpt

template <Real T>
void save_checkpoint(std::ostream& os, ModelGraph<T>& m) {
  const auto& s = m.spec();
  const auto entries = ckpt::checkpoint_entries(m);
  os << "pcnet-checkpoint 1\n"
     << "variant " << variant_name(s.variant) << "\n"
     << "spatial_rank " << s.spatial_rank << "\n"
     << "base_channels " << s.base_channels << "\n"
     << "levels " << s.levels << "\n"
     << "seed " << s.seed << "\n"
     << "tensors " << entries.size() << "\n";
  for (const auto& [e, t] : entries) os << e.kind << ' ' << e.name << ' ' << ckpt::dims_text(t->shape()) << "\n";
  os << "end\n";
  for (const auto& [e, t] : entries) io::write_tensor(os, *t);
  if (!os) throw DataError("checkpoint: write failed");
}

inline ModelSpec read_checkpoint_spec(std::istream& is, std::vector<ckpt::ManifestEntry>& entries) {
  std::string line;
  if (!std::getline(is, line) || line != "pcnet-checkpoint 1") throw DataError("checkpoint: bad header");
  ModelSpec spec;
  std::size_t count = 0;
  auto field = [&](const char* key) {
    if (!std::getline(is, line)) throw DataError("checkpoint: truncated manifest");
    std::istringstream ls(line);
    std::string k, v;
    ls >> k >> v;
    if (k != key) throw DataError(std::string("checkpoint: expected '") + key + "', got '" + k + "'");
    return v;
  };
  try {
    spec.variant = parse_variant(field("variant"));
    spec.spatial_rank = std::stoul(field("spatial_rank"));
    spec.base_channels = std::stoul(field("base_channels"));
    spec.levels = std::stoul(field("levels"));
    spec.seed = std::stoull(field("seed"));
    count = std::stoul(field("tensors"));
  } catch (const std::logic_error& e) {
    throw DataError(std::string("checkpoint: malformed manifest field: ") + e.what());
  }
  entries.clear();
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(is, line)) throw DataError("checkpoint: truncated manifest");
    std::istringstream ls(line);
    ckpt::ManifestEntry e;
    std::string dims;
    ls >> e.kind >> e.name >> dims;
    std::istringstream ds(dims);
    for (std::string tok; std::getline(ds, tok, ',');) e.dims.push_back(std::stoul(tok));
    entries.push_back(std::move(e));
  }
  if (!std::getline(is, line) || line != "end") throw DataError("checkpoint: missing manifest terminator");
  return spec;
}

/// Rebuilds the model described by the manifest and loads every tensor.
template <Real T>
ModelGraph<T> load_checkpoint(std::istream& is) {
  std::vector<ckpt::ManifestEntry> manifest;
  ModelGraph<T> m(read_checkpoint_spec(is, manifest));
  auto entries = ckpt::checkpoint_entries(m);
  if (entries.size() != manifest.size())
    throw DataError("checkpoint: manifest lists " + std::to_string(manifest.size()) + " tensors, model has " +
                    std::to_string(entries.size()));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& [expected, target] = entries[i];
    if (manifest[i].name != expected.name || manifest[i].kind != expected.kind || manifest[i].dims != expected.dims)
      throw DataError("checkpoint: entry " + std::to_string(i) + " is '" + manifest[i].name + "', expected '" +
                      expected.name + "'");
    auto t = io::read_tensor<T>(is);
    if (t.shape() != target->shape()) throw DataError("checkpoint: shape mismatch for '" + expected.name + "'");
    *target = std::move(t);
  }
  return m;
}

template <Real T>
void save_checkpoint(const std::filesystem::path& path, ModelGraph<T>& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path.string());
  save_checkpoint(os, m);
}

template <Real T>
ModelGraph<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open for reading: " + path.string());
  return load_checkpoint<T>(is);
}

}  // namespace pcnet::model
