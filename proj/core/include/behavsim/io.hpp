#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "behavsim/mdp.hpp"
#include "behavsim/metrics.hpp"
#include "behavsim/transport.hpp"

namespace behavsim {

/// Shortest decimal form that round-trips a double.
std::string format_double(double x);

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
nlohmann::json vector_to_json(const Eigen::VectorXd& v);
/// Nested row arrays; `field` names the value in error messages.
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, std::string_view field);
Eigen::VectorXd vector_from_json(const nlohmann::json& j, std::string_view field);

/// {"n_states", "n_actions", "gamma", "reward" (flat row-major state x action),
///  "transition" ([state][action][next] nested arrays), "terminal",
///  "start_states", "name"}. A nested [state][action] reward is also accepted.
nlohmann::json mdp_to_json(const TabularMdp& mdp);
TabularMdp mdp_from_json(const nlohmann::json& j);

nlohmann::json policy_to_json(const Policy& policy);
Policy policy_from_json(const nlohmann::json& j);

nlohmann::json trajectory_to_json(const Trajectory& t);

/// Header "state,<col ids>", then one row per X state.
void write_table_csv(std::ostream& out, const PairwiseMetricTable& table);
nlohmann::json table_to_json(const PairwiseMetricTable& table);

nlohmann::json certificate_to_json(const CouplingCertificate& cert);

/// Parses a JSON file; parse errors keep the line/column diagnostic.
nlohmann::json read_json_file(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace behavsim
