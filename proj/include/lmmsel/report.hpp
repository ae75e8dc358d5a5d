#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "lmmsel/fixed_select.hpp"
#include "lmmsel/gls.hpp"
#include "lmmsel/pipeline.hpp"
#include "lmmsel/random_select.hpp"
#include "lmmsel/simulation.hpp"
#include "lmmsel/tuning.hpp"

namespace lmmsel {

using Json = nlohmann::json;

// Bumped whenever a key is renamed, removed or changes meaning.
constexpr int kSchemaVersion = 1;
constexpr const char* kLibraryVersion = "1.0.0";

Json to_json(const Vector& v);
Json to_json(const DescentLog& log);
Json to_json(const KktCertificate& kkt);
Json to_json(const GroupKktCertificate& kkt);
Json to_json(const TuningResult& tuning);

// `names` labels the fixed columns; coefficients are reported by name.
Json to_json(const FixedFitResult& fit, const std::vector<std::string>& names);

// `names` labels the random-effect candidates.
Json to_json(const RandomFitResult& fit, const std::vector<std::string>& names, int num_subjects);

Json to_json(const PipelineResult& res, const LongitudinalDataset& ds);
Json to_json(const RefitResult& refit);
Json to_json(const ProxyDiagnostics& diag);
Json to_json(const SimStudyReport& report);

// Top-level document shared by every subcommand.
Json envelope(const std::string& command, const Json& config, const Json& seed, const Json& result);

// Dumps with two-space indentation and a trailing newline.
std::string dump(const Json& doc);

// Tables with 4 significant digits.
std::string format_fixed_table(const FixedFitResult& fit, const std::vector<std::string>& names);
std::string format_random_table(const RandomFitResult& fit, const std::vector<std::string>& names);
std::string format_pipeline_table(const PipelineResult& res, const LongitudinalDataset& ds);
std::string format_refit_table(const RefitResult& refit);
std::string format_diagnostics_table(const ProxyDiagnostics& diag);

} // namespace lmmsel
