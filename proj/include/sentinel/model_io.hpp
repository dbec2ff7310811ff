#pragma once

#include <string>

#include "json.hpp"

#include "sentinel/pipeline.hpp"

namespace sentinel {

/// Bumped whenever the serialized pipeline layout changes shape; loading a
/// file with any other version fails instead of guessing.
inline constexpr int kModelSchemaVersion = 1;

/// Everything a detection run needs: categorical encoder, projection, and
/// the reference distribution fitted on normal traffic.
struct PipelineModel {
    EncoderModel encoder;
    PcaModel pca;
    SafeModel safe;
};

nlohmann::ordered_json pipeline_to_json(const PipelineModel& model);

/// Rebuild a pipeline from its JSON form. Throws SchemaError on a missing
/// or mismatched schema_version, absent fields, wrong types, or incoherent
/// dimensions; covariance validity is re-checked on construction.
PipelineModel pipeline_from_json(const nlohmann::ordered_json& j);

void save_pipeline(const std::string& path, const PipelineModel& model);
PipelineModel load_pipeline(const std::string& path);

}  // namespace sentinel
