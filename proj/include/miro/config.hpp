#pragma once

#include <string>

#include "json.hpp"
#include "miro/cluster.hpp"
#include "miro/graph.hpp"
#include "miro/metrics.hpp"
#include "miro/model.hpp"
#include "miro/simulate.hpp"
#include "miro/train.hpp"

// JSON (de)serialization of every configuration record. Readers start from the
// type's defaults, reject unknown keys and validate the result.
namespace miro {

void to_json(nlohmann::json& j, const Rect& r);
void from_json(const nlohmann::json& j, Rect& r);
void to_json(nlohmann::json& j, const GraphConfig& c);
void from_json(const nlohmann::json& j, GraphConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const DbscanConfig& c);
void from_json(const nlohmann::json& j, DbscanConfig& c);
void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);
void to_json(nlohmann::json& j, const MetricConfig& c);
void from_json(const nlohmann::json& j, MetricConfig& c);

namespace sim {
void to_json(nlohmann::json& j, const IntDist& d);
void from_json(const nlohmann::json& j, IntDist& d);
void to_json(nlohmann::json& j, const Shape& s);
void from_json(const nlohmann::json& j, Shape& s);
void to_json(nlohmann::json& j, const ClusterGroup& g);
void from_json(const nlohmann::json& j, ClusterGroup& g);
void to_json(nlohmann::json& j, const Background& b);
void from_json(const nlohmann::json& j, Background& b);
void to_json(nlohmann::json& j, const ScenarioSpec& s);
void from_json(const nlohmann::json& j, ScenarioSpec& s);
void to_json(nlohmann::json& j, const BlinkSpec& b);
void from_json(const nlohmann::json& j, BlinkSpec& b);
void to_json(nlohmann::json& j, const AugmentSpec& a);
void from_json(const nlohmann::json& j, AugmentSpec& a);
void to_json(nlohmann::json& j, const Preset& p);
void from_json(const nlohmann::json& j, Preset& p);
}  // namespace sim

namespace config {

/// Converts JSON to T, turning parse and validation failures into miro::Error
/// prefixed with `what`.
template <class T>
T parse(const nlohmann::json& j, const std::string& what) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(what + ": " + e.what());
  } catch (const Error& e) {
    throw Error(what + ": " + e.what());
  }
}

nlohmann::json read_json_file(const std::string& path);

}  // namespace config

}  // namespace miro
