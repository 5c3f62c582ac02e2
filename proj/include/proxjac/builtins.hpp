#pragma once

#include <memory>
#include <string>
#include <vector>

#include "proxjac/model.hpp"

namespace proxjac {

/// Names accepted in {"type": "builtin", "name": ...}.
const std::vector<std::string>& builtin_names();

/// Builds the evaluator for a builtin; throws ProblemError for an unknown name
/// or a malformed payload.
std::shared_ptr<const BuiltinEvaluator> make_builtin_evaluator(const std::string& name,
                                                              const Json& payload, int n);

}  // namespace proxjac
