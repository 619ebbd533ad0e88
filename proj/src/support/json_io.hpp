#pragma once

#include "datagen/datagen.hpp"
#include "informativity/informativity.hpp"
#include "verify/verify.hpp"

#include "json.hpp"

#include <optional>
#include <string>

namespace qi::io {

using Json = nlohmann::ordered_json;

Json mat_to_json(const Mat& m);
Mat mat_from_json(const Json& j);

Json model_to_json(const datagen::PerturbationModel& model);
datagen::PerturbationModel model_from_json(const Json& j);

// Dataset document: dims, T, matrices (row-major nested arrays), model
// descriptor, seed. Round-trips at full double precision.
Json dataset_to_json(const datagen::SigmaSet& sigma, std::uint64_t seed);
struct DatasetDoc {
  datagen::SigmaSet sigma;
  std::uint64_t seed = 0;
};
DatasetDoc dataset_from_json(const Json& j);

Json result_to_json(const informativity::SynthesisResult& res);

Json report_to_json(const verify::VerificationReport& rep, bool with_detail = false);
std::string report_to_csv(const verify::VerificationReport& rep);

const char* status_name(informativity::SynthStatus s);
std::optional<informativity::SynthStatus> status_from_name(const std::string& name);

}  // namespace qi::io
