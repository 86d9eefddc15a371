#include "adaptive_lqr/ensemble_io.h"

#include <fstream>

namespace adaptive_lqr {

using nlohmann::json;

Matrix MatrixFromJson(const json& j, const std::string& what) {
  if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
  if (!j.is_array()) throw ValidationError(what + ": expected array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return Matrix(0, 0);
  if (!j.front().is_array()) {
    throw ValidationError(what + ": expected array of rows");
  }
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ValidationError(what + ": row " + std::to_string(r) +
                            " has inconsistent length");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      const json& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) {
        throw ValidationError(what + ": non-numeric entry");
      }
      m(r, c) = v.get<double>();
    }
  }
  return m;
}

json MatrixToJson(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Vector VectorFromJson(const json& j, const std::string& what) {
  if (j.is_number()) return Vector::Constant(1, j.get<double>());
  if (!j.is_array()) throw ValidationError(what + ": expected array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_number()) throw ValidationError(what + ": non-numeric entry");
    v[static_cast<Eigen::Index>(k)] = j[k].get<double>();
  }
  return v;
}

json VectorToJson(const Vector& v) {
  json out = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v[k]);
  return out;
}

RegimeEnsemble EnsembleFromJson(const json& j) {
  if (!j.is_object()) throw ValidationError("ensemble: expected object");
  for (const char* key : {"regimes", "prior", "x0"}) {
    if (!j.contains(key)) {
      throw ValidationError(std::string("ensemble: missing key '") + key + "'");
    }
  }
  RegimeEnsemble e;
  const json& regimes = j.at("regimes");
  if (!regimes.is_array()) throw ValidationError("regimes: expected array");
  for (std::size_t k = 0; k < regimes.size(); ++k) {
    const std::string where = "regimes[" + std::to_string(k) + "].";
    const json& r = regimes[k];
    LinearRegime regime;
    for (auto [key, target] :
         {std::pair{"A", &regime.A}, std::pair{"B", &regime.B},
          std::pair{"C", &regime.C}, std::pair{"G", &regime.G}}) {
      if (!r.contains(key)) {
        throw ValidationError(where + key + ": missing");
      }
      *target = MatrixFromJson(r.at(key), where + key);
    }
    e.regimes.push_back(std::move(regime));
  }
  e.prior = VectorFromJson(j.at("prior"), "prior");
  const json& x0 = j.at("x0");
  if (!x0.is_array()) throw ValidationError("x0: expected array");
  for (std::size_t k = 0; k < x0.size(); ++k) {
    e.x0.push_back(VectorFromJson(x0[k], "x0[" + std::to_string(k) + "]"));
  }
  return e;
}

json EnsembleToJson(const RegimeEnsemble& e) {
  json regimes = json::array();
  for (const LinearRegime& r : e.regimes) {
    regimes.push_back({{"A", MatrixToJson(r.A)},
                       {"B", MatrixToJson(r.B)},
                       {"C", MatrixToJson(r.C)},
                       {"G", MatrixToJson(r.G)}});
  }
  json x0 = json::array();
  for (const Vector& x : e.x0) x0.push_back(VectorToJson(x));
  return {{"regimes", std::move(regimes)},
          {"prior", VectorToJson(e.prior)},
          {"x0", std::move(x0)}};
}

json LoadJson(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& err) {
    throw ValidationError(path.string() + ": " + err.what());
  }
}

RegimeEnsemble LoadEnsemble(const std::filesystem::path& path) {
  return EnsembleFromJson(LoadJson(path));
}

}  // namespace adaptive_lqr
