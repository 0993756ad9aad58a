#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rbf/autodiff/optim.hpp"

// Checkpoint layout (little-endian):
//   8 bytes  magic "RBFCKPT1"
//   8 bytes  uint64 header length H
//   H bytes  JSON {"tensors": [{"name", "shape": [r, c], "offset"}], "meta": {...}}
//   payload  float64 values, row-major; offsets are bytes from payload start
namespace rbf::ad {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'R', 'B', 'F', 'C', 'K', 'P', 'T', '1'};

struct Checkpoint {
  std::vector<std::pair<std::string, Matrix>> tensors;
  nlohmann::json meta = nlohmann::json::object();

  const Matrix& get(const std::string& name) const {
    for (const auto& [n, m] : tensors) {
      if (n == name) return m;
    }
    throw DataError("checkpoint has no tensor named " + name);
  }
};

inline Checkpoint checkpointFrom(const ParameterSet& params, nlohmann::json meta = nlohmann::json::object()) {
  Checkpoint c;
  for (const auto& [name, t] : params.entries()) c.tensors.emplace_back(name, t.value());
  c.meta = std::move(meta);
  return c;
}

// Copies checkpoint values into an existing set; names and shapes must match.
inline void loadInto(ParameterSet& params, const Checkpoint& c) {
  for (auto& [name, t] : params.entries()) {
    const Matrix& m = c.get(name);
    if (m.rows() != t.rows() || m.cols() != t.cols()) {
      throw DataError("checkpoint tensor " + name + " has shape [" + std::to_string(m.rows()) + "x" +
                      std::to_string(m.cols()) + "], expected " + t.shapeString());
    }
    t.mutableValue() = m;
  }
}

inline void writeCheckpoint(const std::string& path, const Checkpoint& c) {
  nlohmann::json header;
  header["tensors"] = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& [name, m] : c.tensors) {
    header["tensors"].push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"offset", offset}});
    offset += static_cast<uint64_t>(m.size()) * sizeof(double);
  }
  header["meta"] = c.meta;
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out.write(kCheckpointMagic, 8);
  const uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [_, m] : c.tensors) {
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint " + path);
}

inline Checkpoint readCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw DataError(path + " is not a checkpoint file");
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1ull << 32)) throw DataError("corrupt checkpoint header in " + path);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Checkpoint c;
  try {
    const auto header = nlohmann::json::parse(text);
    c.meta = header.value("meta", nlohmann::json::object());
    for (const auto& t : header.at("tensors")) {
      const auto rows = t.at("shape").at(0).get<Eigen::Index>();
      const auto cols = t.at("shape").at(1).get<Eigen::Index>();
      const auto offset = t.at("offset").get<uint64_t>();
      const uint64_t bytes = static_cast<uint64_t>(rows * cols) * sizeof(double);
      if (rows < 0 || cols < 0 || offset + bytes > payload.size()) throw DataError("checkpoint tensor out of range");
      Matrix m(rows, cols);
      std::memcpy(m.data(), payload.data() + offset, bytes);
      c.tensors.emplace_back(t.at("name").get<std::string>(), std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint header: " + std::string(e.what()));
  }
  return c;
}

}  // namespace rbf::ad
