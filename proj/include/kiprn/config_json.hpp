#pragma once

#include <string>

#include "kiprn/engine.hpp"

namespace kiprn {

// Strict JSON config: unknown keys are rejected, "{}" yields the defaults.
EngineConfig config_from_json_text(const std::string& text);
EngineConfig config_from_json_file(const std::string& path);

// Canonical snapshot (sorted keys); embedded in checkpoints.
std::string config_to_json_text(const EngineConfig& cfg);

// True when two snapshots differ at most in epochs, paths and
// checkpoint/eval cadence, i.e. resuming under b continues a run saved
// under a.
bool config_resume_compatible(const std::string& a, const std::string& b);

}  // namespace kiprn
