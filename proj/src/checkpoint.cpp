#include "advnlg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace advnlg {

namespace {

constexpr char kMagic[8] = {'A', 'D', 'V', 'N', 'L', 'G', 'C', 'K'};

void write_u64(std::ofstream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

void write_u32(std::ofstream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

std::uint64_t read_u64(std::ifstream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) {
    throw IoError("truncated checkpoint " + path);
  }
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw IoError("truncated checkpoint " + path);
  }
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

void write_doubles(std::ofstream& out, std::span<const double> values) {
  for (double d : values) write_u64(out, std::bit_cast<std::uint64_t>(d));
}

void read_doubles(std::ifstream& in, std::span<double> values,
                  const std::string& path) {
  for (double& d : values) d = std::bit_cast<double>(read_u64(in, path));
}

struct Entry {
  Shape shape;
  std::span<const double> values;
};

std::string qualified(const ParamStore& store, const std::string& name) {
  return store.prefix().empty() ? name : store.prefix() + "." + name;
}

std::map<std::string, Entry> collect(std::span<const ParamStore* const> stores) {
  std::map<std::string, Entry> entries;
  auto put = [&entries](const std::string& key, Shape shape,
                        std::span<const double> values) {
    if (!entries.emplace(key, Entry{std::move(shape), values}).second) {
      throw UsageError("duplicate checkpoint entry '" + key + "'");
    }
  };
  for (const ParamStore* store : stores) {
    for (const std::string& name : store->names()) {
      const Tensor& t = store->get(name);
      put(qualified(*store, name), t.shape(), t.values());
      auto& acc = const_cast<ParamStore*>(store)->rms_accumulator(name);
      put("rms/" + qualified(*store, name), t.shape(), acc);
    }
    for (const auto& [name, state] : store->batch_norm_states()) {
      put("stat/" + qualified(*store, name) + ".running_mean",
          {state.running_mean.size()}, state.running_mean);
      put("stat/" + qualified(*store, name) + ".running_var",
          {state.running_var.size()}, state.running_var);
    }
  }
  return entries;
}

}  // namespace

void save_checkpoint(const std::string& path,
                     std::span<const ParamStore* const> stores) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path);
  const auto entries = collect(stores);
  out.write(kMagic, 8);
  write_u32(out, kCheckpointVersion);
  write_u64(out, entries.size());
  for (const auto& [name, entry] : entries) {
    write_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(out, entry.shape.size());
    for (std::size_t d : entry.shape) write_u64(out, d);
    write_doubles(out, entry.values);
  }
  if (!out) throw IoError("failed writing checkpoint " + path);
}

void load_checkpoint(const std::string& path, std::span<ParamStore* const> stores) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw IoError(path + ": not an advnlg checkpoint");
  }
  const std::uint32_t version = read_u32(in, path);
  if (version != kCheckpointVersion) {
    throw IoError(path + ": unsupported checkpoint version " +
                  std::to_string(version));
  }

  // Destination views over the stores.
  std::map<std::string, std::pair<Shape, std::vector<double>*>> dst;
  for (ParamStore* store : stores) {
    for (const std::string& name : store->names()) {
      Tensor& t = store->get(name);
      dst[qualified(*store, name)] = {t.shape(), &t.mutable_values()};
      dst["rms/" + qualified(*store, name)] = {t.shape(),
                                               &store->rms_accumulator(name)};
    }
    for (auto& [name, state] : store->batch_norm_states()) {
      dst["stat/" + qualified(*store, name) + ".running_mean"] = {
          {state.running_mean.size()}, &state.running_mean};
      dst["stat/" + qualified(*store, name) + ".running_var"] = {
          {state.running_var.size()}, &state.running_var};
    }
  }

  const std::uint64_t count = read_u64(in, path);
  std::size_t filled = 0;
  for (std::uint64_t e = 0; e < count; ++e) {
    const std::uint64_t name_len = read_u64(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name_len))) {
      throw IoError("truncated checkpoint " + path);
    }
    const std::uint64_t ndim = read_u64(in, path);
    Shape shape(ndim);
    for (auto& d : shape) d = read_u64(in, path);
    auto it = dst.find(name);
    if (it == dst.end()) {
      throw IoError(path + ": unknown checkpoint entry '" + name + "'");
    }
    if (it->second.first != shape) {
      throw IoError(path + ": shape mismatch for '" + name + "': file " +
                    shape_str(shape) + " vs model " + shape_str(it->second.first));
    }
    read_doubles(in, *it->second.second, path);
    ++filled;
  }
  if (filled != dst.size()) {
    throw IoError(path + ": checkpoint has " + std::to_string(filled) +
                  " entries, model expects " + std::to_string(dst.size()));
  }
}

}  // namespace advnlg
