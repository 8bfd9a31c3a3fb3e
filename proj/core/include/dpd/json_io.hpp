#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "dpd/dataset.hpp"
#include "dpd/dpdtest.hpp"
#include "dpd/estimate.hpp"
#include "dpd/influence.hpp"
#include "dpd/quadform.hpp"
#include "dpd/restrict.hpp"
#include "dpd/simharness.hpp"

namespace dpd {

using json = nlohmann::json;

// Doubles are written in shortest round-trip form; NaN is written as null and read back as NaN.
json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const json& j);
json matrix_to_json(const Eigen::MatrixXd& m);   // array of rows
Eigen::MatrixXd matrix_from_json(const json& j);

void to_json(json& j, const ParamVector& t);
void from_json(const json& j, ParamVector& t);
void to_json(json& j, const QuadFormDist& d);
void from_json(const json& j, QuadFormDist& d);
void to_json(json& j, const MdpdeFit& f);
void from_json(const json& j, MdpdeFit& f);
void to_json(json& j, const RmdpdeFit& f);
void from_json(const json& j, RmdpdeFit& f);
void to_json(json& j, const TestReport& r);
void from_json(const json& j, TestReport& r);
void to_json(json& j, const PowerResult& r);
void from_json(const json& j, PowerResult& r);
void to_json(json& j, const PifLif& r);
void to_json(json& j, const GridScan& g);
void to_json(json& j, const DesignReport& r);
void to_json(json& j, const SimCell& c);
void from_json(const json& j, SimCell& c);
void to_json(json& j, const SimResult& r);
void to_json(json& j, const ConvergenceTable& t);
void to_json(json& j, const Scenario& s);
// Missing fields keep their defaults; unknown fields are rejected with the offending path.
void from_json(const json& j, Scenario& s);

Scenario read_scenario_file(const std::string& path);

std::string sim_cells_csv(const SimResult& r);
std::string convergence_csv(const ConvergenceTable& t);

}  // namespace dpd
