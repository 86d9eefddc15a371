#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "adaptive_lqr/regime.h"

namespace adaptive_lqr {

// Ensemble schema:
//   {"regimes": [{"A": [[..]], "B": [[..]], "C": [[..]], "G": [[..]]}, ...],
//    "prior": [..], "x0": [[..], ...]}
// Matrices are arrays of rows. A 1x1 matrix may also be written as a bare
// number. Structural errors throw ValidationError; dimensional consistency is
// left to ValidateEnsemble so that all violations are reported together.

Matrix MatrixFromJson(const nlohmann::json& j, const std::string& what);
nlohmann::json MatrixToJson(const Matrix& m);
Vector VectorFromJson(const nlohmann::json& j, const std::string& what);
nlohmann::json VectorToJson(const Vector& v);

RegimeEnsemble EnsembleFromJson(const nlohmann::json& j);
nlohmann::json EnsembleToJson(const RegimeEnsemble& e);

RegimeEnsemble LoadEnsemble(const std::filesystem::path& path);
nlohmann::json LoadJson(const std::filesystem::path& path);

}  // namespace adaptive_lqr
