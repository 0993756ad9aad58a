#pragma once

#include <map>
#include <string>

#include "rbf/autodiff/checkpoint.hpp"
#include "rbf/model/model.hpp"

namespace rbf::model {

// Network weights and per-individual parameters in one checkpoint. Individual
// blocks are stored as tensors named "individual/<id>/<block>".
inline void saveModel(const std::string& path, const RbfModel& net, const std::map<std::string, IndividualParams>& params) {
  ad::Checkpoint c = ad::checkpointFrom(net.parameters());
  nlohmann::json ids = nlohmann::json::array();
  for (const auto& [id, p] : params) {
    p.validate(net.keypointCount(), net.anchorCount());
    ids.push_back(id);
    const std::string prefix = "individual/" + id + "/";
    c.tensors.emplace_back(prefix + "logCP", p.logCP);
    c.tensors.emplace_back(prefix + "TP", p.TP);
    c.tensors.emplace_back(prefix + "logCB", p.logCB);
    c.tensors.emplace_back(prefix + "TB", p.TB);
  }
  c.meta = {{"format", "rbf-model"}, {"version", 1}, {"config", toJson(net.config())}, {"anchorCount", net.anchorCount()},
            {"individuals", ids}};
  ad::writeCheckpoint(path, c);
}

struct LoadedModel {
  RbfModel model;
  std::map<std::string, IndividualParams> params;
};

inline LoadedModel loadModel(const std::string& path, const CanonicalSurface& canonical) {
  const ad::Checkpoint c = ad::readCheckpoint(path);
  if (c.meta.value("format", "") != "rbf-model") throw DataError(path + " is not a RatBodyFormer checkpoint");
  if (c.meta.value("version", 0) != 1) throw DataError(path + ": unsupported checkpoint version");
  RbfConfig config;
  try {
    config = rbfConfigFromJson(c.meta.at("config"), "checkpoint.config");
    if (c.meta.at("anchorCount").get<int>() != canonical.anchorCount()) {
      throw DataError(path + " was trained for " + std::to_string(c.meta.at("anchorCount").get<int>()) +
                      " surface points, the canonical surface has " + std::to_string(canonical.anchorCount()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": malformed checkpoint metadata: " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(path + ": " + e.what());
  }
  LoadedModel out{RbfModel(config, canonical), {}};
  ad::loadInto(out.model.parameters(), c);
  for (const auto& idJson : c.meta.at("individuals")) {
    const auto id = idJson.get<std::string>();
    const std::string prefix = "individual/" + id + "/";
    IndividualParams p{c.get(prefix + "logCP"), c.get(prefix + "TP"), c.get(prefix + "logCB"), c.get(prefix + "TB")};
    p.validate(out.model.keypointCount(), out.model.anchorCount());
    out.params[id] = std::move(p);
  }
  return out;
}

}  // namespace rbf::model
