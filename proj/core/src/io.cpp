#include "behavsim/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "behavsim/error.hpp"

namespace behavsim {

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

namespace {

[[noreturn]] void field_error(std::string_view field, const std::string& what) {
  throw InvalidArgument("field '" + std::string(field) + "': " + what);
}

double number(const nlohmann::json& j, std::string_view field) {
  if (!j.is_number()) field_error(field, "expected a number, got " + std::string(j.type_name()));
  return j.get<double>();
}

const nlohmann::json& member(const nlohmann::json& j, std::string_view key) {
  if (!j.is_object()) throw InvalidArgument("expected a JSON object");
  const auto it = j.find(std::string(key));
  if (it == j.end()) field_error(key, "missing");
  return *it;
}

std::size_t count(const nlohmann::json& j, std::string_view field) {
  if (!j.is_number_integer() || j.get<long long>() < 0) field_error(field, "expected a non-negative integer");
  return j.get<std::size_t>();
}

}  // namespace

Eigen::VectorXd vector_from_json(const nlohmann::json& j, std::string_view field) {
  if (!j.is_array()) field_error(field, "expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = number(j[i], std::string(field) + "[" + std::to_string(i) + "]");
  }
  return v;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, std::string_view field) {
  if (!j.is_array()) field_error(field, "expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  Eigen::Index cols = 0;
  if (rows > 0) {
    if (!j[0].is_array()) field_error(field, "expected an array of rows");
    cols = static_cast<Eigen::Index>(j[0].size());
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const std::string name = std::string(field) + "[" + std::to_string(i) + "]";
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      field_error(name, "rows must all have " + std::to_string(cols) + " entries");
    }
    m.row(i) = vector_from_json(row, name).transpose();
  }
  return m;
}

nlohmann::json mdp_to_json(const TabularMdp& mdp) {
  const auto n = mdp.n_states();
  const auto a_count = mdp.n_actions();
  nlohmann::json reward = nlohmann::json::array();
  nlohmann::json transition = nlohmann::json::array();
  for (StateIndex s = 0; s < n; ++s) {
    nlohmann::json per_action = nlohmann::json::array();
    for (ActionIndex a = 0; a < a_count; ++a) {
      reward.push_back(mdp.reward(s, a));
      per_action.push_back(vector_to_json(mdp.next_state_distribution(s, a)));
    }
    transition.push_back(std::move(per_action));
  }
  nlohmann::json terminal = nlohmann::json::array();
  for (StateIndex s = 0; s < n; ++s) terminal.push_back(static_cast<bool>(mdp.is_terminal(s)));
  return {{"name", mdp.name()},
          {"n_states", n},
          {"n_actions", a_count},
          {"gamma", mdp.gamma()},
          {"reward", std::move(reward)},
          {"transition", std::move(transition)},
          {"terminal", std::move(terminal)},
          {"start_states", mdp.start_states()}};
}

TabularMdp mdp_from_json(const nlohmann::json& j) {
  const std::size_t n = count(member(j, "n_states"), "n_states");
  const std::size_t a_count = count(member(j, "n_actions"), "n_actions");
  const double gamma = number(member(j, "gamma"), "gamma");
  const auto ns = static_cast<Eigen::Index>(n);
  const auto na = static_cast<Eigen::Index>(a_count);

  Eigen::MatrixXd reward(ns, na);
  const auto& r = member(j, "reward");
  if (r.is_array() && !r.empty() && r[0].is_array()) {
    reward = matrix_from_json(r, "reward");
    if (reward.rows() != ns || reward.cols() != na) field_error("reward", "expected n_states x n_actions");
  } else {
    const Eigen::VectorXd flat = vector_from_json(r, "reward");
    if (flat.size() != ns * na) {
      field_error("reward", "expected " + std::to_string(n * a_count) + " row-major entries");
    }
    for (Eigen::Index s = 0; s < ns; ++s) {
      for (Eigen::Index a = 0; a < na; ++a) reward(s, a) = flat[s * na + a];
    }
  }

  const auto& t = member(j, "transition");
  if (!t.is_array() || t.size() != n) field_error("transition", "expected one entry per state");
  std::vector<Eigen::MatrixXd> transition(a_count, Eigen::MatrixXd::Zero(ns, ns));
  for (std::size_t s = 0; s < n; ++s) {
    const std::string name = "transition[" + std::to_string(s) + "]";
    if (!t[s].is_array() || t[s].size() != a_count) field_error(name, "expected one entry per action");
    for (std::size_t a = 0; a < a_count; ++a) {
      const std::string cell = name + "[" + std::to_string(a) + "]";
      const Eigen::VectorXd p = vector_from_json(t[s][a], cell);
      if (p.size() != ns) field_error(cell, "expected n_states probabilities");
      transition[a].row(static_cast<Eigen::Index>(s)) = p.transpose();
    }
  }

  const auto& term = member(j, "terminal");
  if (!term.is_array() || term.size() != n) field_error("terminal", "expected one flag per state");
  std::vector<bool> terminal(n);
  for (std::size_t s = 0; s < n; ++s) {
    if (!term[s].is_boolean()) field_error("terminal[" + std::to_string(s) + "]", "expected a boolean");
    terminal[s] = term[s].get<bool>();
  }

  const auto& st = member(j, "start_states");
  if (!st.is_array()) field_error("start_states", "expected an array");
  std::vector<StateIndex> starts;
  for (std::size_t i = 0; i < st.size(); ++i) starts.push_back(count(st[i], "start_states[" + std::to_string(i) + "]"));

  std::string name;
  if (j.contains("name")) {
    if (!j.at("name").is_string()) field_error("name", "expected a string");
    name = j.at("name").get<std::string>();
  }
  return TabularMdp(std::move(reward), std::move(transition), gamma, std::move(terminal), std::move(starts),
                    std::move(name));
}

nlohmann::json policy_to_json(const Policy& policy) { return {{"probs", matrix_to_json(policy.probs())}}; }

Policy policy_from_json(const nlohmann::json& j) { return Policy(matrix_from_json(member(j, "probs"), "probs")); }

nlohmann::json trajectory_to_json(const Trajectory& t) {
  nlohmann::json dists = nlohmann::json::array();
  for (const auto& d : t.action_dists) dists.push_back(vector_to_json(d));
  return {{"source_mdp", t.source_mdp}, {"states", t.states}, {"action_dists", std::move(dists)},
          {"truncated", t.truncated}};
}

void write_table_csv(std::ostream& out, const PairwiseMetricTable& table) {
  out << "state";
  for (auto c : table.cols) out << ",y" << c;
  out << '\n';
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    out << 'x' << table.rows[i];
    for (std::size_t j = 0; j < table.cols.size(); ++j) out << ',' << format_double(table(i, j));
    out << '\n';
  }
}

nlohmann::json table_to_json(const PairwiseMetricTable& table) {
  return {{"metric_kind", std::string(to_string(table.metric_kind))},
          {"dist_kind", std::string(to_string(table.dist_kind))},
          {"gamma", table.gamma},
          {"tol", table.tol},
          {"iterations", table.iterations},
          {"residual_trace", table.residual_trace},
          {"rows", table.rows},
          {"cols", table.cols},
          {"values", matrix_to_json(table.values)}};
}

nlohmann::json certificate_to_json(const CouplingCertificate& cert) {
  return {{"value", cert.value}, {"coupling", matrix_to_json(cert.coupling)}, {"u", vector_to_json(cert.u)},
          {"v", vector_to_json(cert.v)}};
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
  out << text;
}

}  // namespace behavsim
