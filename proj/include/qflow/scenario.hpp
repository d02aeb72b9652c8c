#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "json.hpp"
#include "qflow/dynamics.hpp"
#include "qflow/flows.hpp"
#include "qflow/haar.hpp"
#include "qflow/measurement.hpp"
#include "qflow/models.hpp"
#include "qflow/uncertainty.hpp"

namespace qflow {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a bound or invariant check fails along a run.
class InvariantViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Engine { von_neumann, schrodinger, lindblad, qubit_exact, bloch };

inline std::string_view to_string(Engine e) {
  switch (e) {
    case Engine::von_neumann: return "von_neumann";
    case Engine::schrodinger: return "schrodinger";
    case Engine::lindblad: return "lindblad";
    case Engine::qubit_exact: return "qubit_exact";
    case Engine::bloch: return "bloch";
  }
  return "von_neumann";
}

inline Engine engine_from_string(std::string_view s) {
  if (s == "von_neumann") return Engine::von_neumann;
  if (s == "schrodinger") return Engine::schrodinger;
  if (s == "lindblad") return Engine::lindblad;
  if (s == "qubit_exact") return Engine::qubit_exact;
  if (s == "bloch") return Engine::bloch;
  throw ConfigError("unknown engine '" + std::string(s) + "'");
}

enum class Analysis { flows, qur_pairs, battery, measurement_schedule, haar_probe, entropy_rate };

inline std::string_view to_string(Analysis a) {
  switch (a) {
    case Analysis::flows: return "flows";
    case Analysis::qur_pairs: return "qur_pairs";
    case Analysis::battery: return "battery";
    case Analysis::measurement_schedule: return "measurement_schedule";
    case Analysis::haar_probe: return "haar_probe";
    case Analysis::entropy_rate: return "entropy_rate";
  }
  return "flows";
}

inline Analysis analysis_from_string(std::string_view s) {
  if (s == "flows") return Analysis::flows;
  if (s == "qur_pairs") return Analysis::qur_pairs;
  if (s == "battery") return Analysis::battery;
  if (s == "measurement_schedule") return Analysis::measurement_schedule;
  if (s == "haar_probe") return Analysis::haar_probe;
  if (s == "entropy_rate") return Analysis::entropy_rate;
  throw ConfigError("unknown analysis '" + std::string(s) + "'");
}

/// Either a product of basis states (Fock / σᶻ index per subsystem) or a Bloch vector.
struct InitialState {
  enum class Kind { product_basis, bloch };
  Kind kind = Kind::product_basis;
  std::vector<Index> levels{0, 0};
  std::array<double, 3> beta{};

  friend bool operator==(const InitialState&, const InitialState&) = default;
};

struct HaarConfig {
  TwirlTarget target = TwirlTarget::rho_s;
  std::size_t n_samples = 10000;

  friend bool operator==(const HaarConfig&, const HaarConfig&) = default;
};

struct ScenarioConfig {
  std::string name = "custom";
  std::string description;
  ModelSpec model;
  Engine engine = Engine::von_neumann;
  TimeGrid grid{0.0, 10.0, 999};
  InitialState initial_state;
  std::vector<Analysis> analyses;
  std::vector<double> measurement_times;
  HaarConfig haar;
  BlochConvention bloch_convention = BlochConvention::master_equation;
  PowerConvention power_convention = PowerConvention::printed;
  IntegratorOptions integrator;
  std::string output_path = "out";
  std::uint64_t rng_seed = 12345;

  bool has(Analysis a) const { return std::find(analyses.begin(), analyses.end(), a) != analyses.end(); }

  friend bool operator==(const ScenarioConfig& a, const ScenarioConfig& b) {
    return a.name == b.name && a.description == b.description && a.model == b.model && a.engine == b.engine &&
           a.grid == b.grid && a.initial_state == b.initial_state && a.analyses == b.analyses &&
           a.measurement_times == b.measurement_times && a.haar == b.haar &&
           a.bloch_convention == b.bloch_convention && a.power_convention == b.power_convention &&
           a.integrator.rtol == b.integrator.rtol && a.integrator.atol == b.integrator.atol &&
           a.output_path == b.output_path && a.rng_seed == b.rng_seed;
  }
};

// --- validation ---------------------------------------------------------------------

inline void validate_config(const ScenarioConfig& c) {
  try {
    c.model.validate();
    c.grid.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const ModelKind m = c.model.model;
  const bool bipartite = m == ModelKind::two_spins || m == ModelKind::two_oscillators;
  const bool battery_model = m == ModelKind::qubit_battery || m == ModelKind::spin_boson;

  switch (c.engine) {
    case Engine::von_neumann:
    case Engine::schrodinger:
      if (m == ModelKind::spin_boson) throw ConfigError("spin_boson needs the lindblad or bloch engine");
      break;
    case Engine::lindblad:
    case Engine::bloch:
      if (m != ModelKind::spin_boson) throw ConfigError("engine '" + std::string(to_string(c.engine)) +
                                                        "' is only available for spin_boson");
      break;
    case Engine::qubit_exact:
      if (m != ModelKind::qubit_battery) throw ConfigError("qubit_exact is only available for qubit_battery");
      break;
  }

  if (c.initial_state.kind == InitialState::Kind::bloch) {
    if (bipartite) throw ConfigError("Bloch initial state needs a single-qubit model");
    if (c.engine == Engine::schrodinger) throw ConfigError("schrodinger engine needs a product_basis initial state");
    if (!BlochVector{c.initial_state.beta}.validate()) throw ConfigError("initial Bloch vector is invalid");
  } else {
    const std::size_t want = bipartite ? 2 : 1;
    if (c.initial_state.levels.size() != want)
      throw ConfigError("initial_state.levels needs " + std::to_string(want) + " entries");
    const Index cap = m == ModelKind::two_oscillators ? c.model.fock_cutoff : 2;
    for (Index l : c.initial_state.levels)
      if (l < 0 || l >= cap) throw ConfigError("initial_state level out of range");
  }

  for (Analysis a : c.analyses) {
    switch (a) {
      case Analysis::flows:
      case Analysis::qur_pairs:
        if (!bipartite && m != ModelKind::spin_boson)
          throw ConfigError("analysis '" + std::string(to_string(a)) + "' needs a model with heat flow");
        break;
      case Analysis::battery:
        if (!battery_model) throw ConfigError("analysis 'battery' needs qubit_battery or spin_boson");
        break;
      case Analysis::measurement_schedule:
        if (c.engine == Engine::schrodinger || c.engine == Engine::bloch)
          throw ConfigError("measurement_schedule needs a density-matrix engine");
        break;
      case Analysis::haar_probe:
        if (m != ModelKind::qubit_battery) throw ConfigError("analysis 'haar_probe' needs qubit_battery");
        if (c.haar.target == TwirlTarget::v_e) throw ConfigError("haar_probe target v_e needs an environment");
        if (c.haar.n_samples < 100) throw ConfigError("haar.n_samples must be >= 100");
        break;
      case Analysis::entropy_rate:
        if (m != ModelKind::spin_boson) throw ConfigError("analysis 'entropy_rate' needs spin_boson");
        break;
    }
  }
  if (c.has(Analysis::measurement_schedule)) {
    for (std::size_t k = 0; k < c.measurement_times.size(); ++k) {
      const double t = c.measurement_times[k];
      if (t < c.grid.t_start || t > c.grid.t_end) throw ConfigError("measurement time outside the grid");
      if (k > 0 && !(t > c.measurement_times[k - 1])) throw ConfigError("measurement times must increase");
    }
  }
  if (!(c.integrator.rtol > 0.0) || !(c.integrator.atol > 0.0)) throw ConfigError("integrator tolerances must be > 0");
}

// --- YAML serialisation --------------------------------------------------------------

inline std::string_view to_string(TwirlTarget t) {
  switch (t) {
    case TwirlTarget::rho_s: return "rho_s";
    case TwirlTarget::v_s: return "v_s";
    case TwirlTarget::v_e: return "v_e";
  }
  return "rho_s";
}

inline TwirlTarget twirl_target_from_string(std::string_view s) {
  if (s == "rho_s") return TwirlTarget::rho_s;
  if (s == "v_s") return TwirlTarget::v_s;
  if (s == "v_e") return TwirlTarget::v_e;
  throw ConfigError("unknown haar target '" + std::string(s) + "'");
}

inline std::string to_yaml(const ScenarioConfig& c) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << c.name;
  if (!c.description.empty()) out << YAML::Key << "description" << YAML::Value << c.description;
  out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << std::string(to_string(c.model.model));
  out << YAML::Key << "parameters" << YAML::Value << YAML::BeginMap;
  for (const auto& [k, v] : c.model.parameters) out << YAML::Key << k << YAML::Value << v;
  out << YAML::EndMap;
  out << YAML::Key << "drive" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << std::string(to_string(c.model.drive.kind));
  out << YAML::Key << "amplitude" << YAML::Value << c.model.drive.amplitude;
  out << YAML::Key << "rate" << YAML::Value << c.model.drive.rate;
  out << YAML::Key << "offset" << YAML::Value << c.model.drive.offset;
  out << YAML::EndMap;
  out << YAML::Key << "fock_cutoff" << YAML::Value << static_cast<long long>(c.model.fock_cutoff);
  out << YAML::EndMap;
  out << YAML::Key << "engine" << YAML::Value << std::string(to_string(c.engine));
  out << YAML::Key << "grid" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "t_start" << YAML::Value << c.grid.t_start;
  out << YAML::Key << "t_end" << YAML::Value << c.grid.t_end;
  out << YAML::Key << "n_steps" << YAML::Value << static_cast<long long>(c.grid.n_steps);
  out << YAML::EndMap;
  out << YAML::Key << "initial_state" << YAML::Value << YAML::BeginMap;
  if (c.initial_state.kind == InitialState::Kind::bloch) {
    out << YAML::Key << "kind" << YAML::Value << "bloch";
    out << YAML::Key << "beta" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (double b : c.initial_state.beta) out << b;
    out << YAML::EndSeq;
  } else {
    out << YAML::Key << "kind" << YAML::Value << "product_basis";
    out << YAML::Key << "levels" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (Index l : c.initial_state.levels) out << static_cast<long long>(l);
    out << YAML::EndSeq;
  }
  out << YAML::EndMap;
  out << YAML::Key << "analyses" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (Analysis a : c.analyses) out << std::string(to_string(a));
  out << YAML::EndSeq;
  if (!c.measurement_times.empty()) {
    out << YAML::Key << "measurement_times" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (double t : c.measurement_times) out << t;
    out << YAML::EndSeq;
  }
  out << YAML::Key << "haar" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "target" << YAML::Value << std::string(to_string(c.haar.target));
  out << YAML::Key << "n_samples" << YAML::Value << static_cast<unsigned long long>(c.haar.n_samples);
  out << YAML::EndMap;
  out << YAML::Key << "bloch_convention" << YAML::Value
      << (c.bloch_convention == BlochConvention::printed ? "printed" : "master_equation");
  out << YAML::Key << "power_convention" << YAML::Value
      << (c.power_convention == PowerConvention::printed ? "printed" : "definition");
  out << YAML::Key << "integrator" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "rtol" << YAML::Value << c.integrator.rtol;
  out << YAML::Key << "atol" << YAML::Value << c.integrator.atol;
  out << YAML::EndMap;
  out << YAML::Key << "output_path" << YAML::Value << c.output_path;
  out << YAML::Key << "rng_seed" << YAML::Value << static_cast<unsigned long long>(c.rng_seed);
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

namespace detail {

template <class T>
T yaml_get(const YAML::Node& n, const char* key, T fallback) {
  const YAML::Node v = n[key];
  if (!v) return fallback;
  try {
    return v.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(std::string("bad value for '") + key + "'");
  }
}

inline void reject_unknown_keys(const YAML::Node& n, std::initializer_list<std::string_view> known,
                                const std::string& where) {
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

}  // namespace detail

inline ScenarioConfig parse_config(const YAML::Node& root) {
  using detail::yaml_get;
  if (!root || !root.IsMap()) throw ConfigError("config root must be a mapping");
  detail::reject_unknown_keys(root,
                              {"name", "description", "model", "engine", "grid", "initial_state", "analyses",
                               "measurement_times", "haar", "bloch_convention", "power_convention", "integrator",
                               "output_path", "rng_seed"},
                              "config");
  ScenarioConfig c;
  try {
    c.name = yaml_get<std::string>(root, "name", c.name);
    c.description = yaml_get<std::string>(root, "description", "");
    const YAML::Node m = root["model"];
    if (!m || !m.IsMap()) throw ConfigError("missing 'model' mapping");
    detail::reject_unknown_keys(m, {"kind", "parameters", "drive", "fock_cutoff"}, "model");
    c.model.model = model_kind(yaml_get<std::string>(m, "kind", ""));
    if (const YAML::Node p = m["parameters"]) {
      if (!p.IsMap()) throw ConfigError("model.parameters must be a mapping");
      for (const auto& kv : p) c.model.parameters[kv.first.as<std::string>()] = kv.second.as<double>();
    }
    if (const YAML::Node d = m["drive"]) {
      detail::reject_unknown_keys(d, {"kind", "amplitude", "rate", "offset"}, "model.drive");
      c.model.drive.kind = time_function_kind(yaml_get<std::string>(d, "kind", "constant"));
      c.model.drive.amplitude = yaml_get<double>(d, "amplitude", 0.0);
      c.model.drive.rate = yaml_get<double>(d, "rate", 0.0);
      c.model.drive.offset = yaml_get<double>(d, "offset", 0.0);
    }
    c.model.fock_cutoff = yaml_get<long long>(m, "fock_cutoff", 100);

    c.engine = engine_from_string(yaml_get<std::string>(root, "engine", "von_neumann"));
    if (const YAML::Node g = root["grid"]) {
      detail::reject_unknown_keys(g, {"t_start", "t_end", "n_steps"}, "grid");
      c.grid.t_start = yaml_get<double>(g, "t_start", 0.0);
      c.grid.t_end = yaml_get<double>(g, "t_end", 10.0);
      c.grid.n_steps = yaml_get<long long>(g, "n_steps", 999);
    }
    if (const YAML::Node s = root["initial_state"]) {
      detail::reject_unknown_keys(s, {"kind", "levels", "beta"}, "initial_state");
      const auto kind = yaml_get<std::string>(s, "kind", "product_basis");
      if (kind == "bloch") {
        c.initial_state.kind = InitialState::Kind::bloch;
        const auto b = yaml_get<std::vector<double>>(s, "beta", {});
        if (b.size() != 3) throw ConfigError("initial_state.beta needs 3 entries");
        c.initial_state.beta = {b[0], b[1], b[2]};
        c.initial_state.levels.clear();
      } else if (kind == "product_basis") {
        c.initial_state.kind = InitialState::Kind::product_basis;
        const auto l = yaml_get<std::vector<long long>>(s, "levels", {0, 0});
        c.initial_state.levels.assign(l.begin(), l.end());
      } else {
        throw ConfigError("unknown initial_state kind '" + kind + "'");
      }
    }
    for (const auto& a : yaml_get<std::vector<std::string>>(root, "analyses", {}))
      c.analyses.push_back(analysis_from_string(a));
    c.measurement_times = yaml_get<std::vector<double>>(root, "measurement_times", {});
    if (const YAML::Node h = root["haar"]) {
      detail::reject_unknown_keys(h, {"target", "n_samples"}, "haar");
      c.haar.target = twirl_target_from_string(yaml_get<std::string>(h, "target", "rho_s"));
      c.haar.n_samples = yaml_get<std::size_t>(h, "n_samples", 10000);
    }
    const auto bc = yaml_get<std::string>(root, "bloch_convention", "master_equation");
    if (bc == "printed") c.bloch_convention = BlochConvention::printed;
    else if (bc == "master_equation") c.bloch_convention = BlochConvention::master_equation;
    else throw ConfigError("unknown bloch_convention '" + bc + "'");
    const auto pc = yaml_get<std::string>(root, "power_convention", "printed");
    if (pc == "printed") c.power_convention = PowerConvention::printed;
    else if (pc == "definition") c.power_convention = PowerConvention::definition;
    else throw ConfigError("unknown power_convention '" + pc + "'");
    if (const YAML::Node i = root["integrator"]) {
      detail::reject_unknown_keys(i, {"rtol", "atol"}, "integrator");
      c.integrator.rtol = yaml_get<double>(i, "rtol", c.integrator.rtol);
      c.integrator.atol = yaml_get<double>(i, "atol", c.integrator.atol);
    }
    c.output_path = yaml_get<std::string>(root, "output_path", "out");
    c.rng_seed = yaml_get<std::uint64_t>(root, "rng_seed", 12345);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("YAML: ") + e.what());
  }
  validate_config(c);
  return c;
}

inline ScenarioConfig parse_config_string(const std::string& text) {
  try {
    return parse_config(YAML::Load(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("YAML: ") + e.what());
  }
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_string(ss.str());
}

// --- presets ------------------------------------------------------------------------

struct Preset {
  std::string name;
  std::string caption;
  ScenarioConfig config;
};

inline std::vector<Preset> presets() {
  std::vector<Preset> out;
  auto spins = [](std::string name, TimeFunction f, std::string desc) {
    ScenarioConfig c;
    c.name = std::move(name);
    c.description = std::move(desc);
    c.model.model = ModelKind::two_spins;
    c.model.parameters = {{"g", 1.0}, {"hbar", 1.0}};
    c.model.drive = f;
    c.engine = Engine::von_neumann;
    c.grid = {0.0, 10.0, 999};
    c.initial_state = {InitialState::Kind::product_basis, {0, 0}, {}};
    c.analyses = {Analysis::flows, Analysis::qur_pairs};
    return c;
  };
  auto oscillators = [](std::string name, TimeFunction f, std::string desc) {
    ScenarioConfig c;
    c.name = std::move(name);
    c.description = std::move(desc);
    c.model.model = ModelKind::two_oscillators;
    c.model.parameters = {{"g", 1.0}, {"hbar", 1.0}, {"m", 1.0}, {"omega_b", 1.0}};
    c.model.drive = f;
    c.model.fock_cutoff = 100;
    c.engine = Engine::schrodinger;
    c.grid = {0.0, 10.0, 999};
    c.initial_state = {InitialState::Kind::product_basis, {0, 0}, {}};
    c.analyses = {Analysis::flows, Analysis::qur_pairs};
    return c;
  };
  auto qubit = [](std::string name, std::string desc) {
    ScenarioConfig c;
    c.name = std::move(name);
    c.description = std::move(desc);
    c.model.model = ModelKind::qubit_battery;
    c.model.parameters = {{"h0", 1.2}, {"h3", 0.2}, {"v0", 0.0}, {"v1", 0.5}, {"v2", 0.6}, {"v3", 0.0}, {"hbar", 1.0}};
    c.engine = Engine::qubit_exact;
    c.grid = {0.0, 10.0, 999};
    c.initial_state = {InitialState::Kind::bloch, {}, {0.0, 0.0, 0.5}};
    c.analyses = {Analysis::battery};
    return c;
  };

  out.push_back({"fig3_left", "two spins, f(t)=2exp(-t/2), hbar=g=1, |up,up>",
                 spins("fig3_left", TimeFunction::exp_decay(2.0, 0.5), "two spins, exponentially decaying drive")});
  out.push_back({"fig3_right", "two spins, f(t)=sin(t)+2, hbar=g=1, |up,up>",
                 spins("fig3_right", TimeFunction::sinusoid(1.0, 1.0, 2.0), "two spins, sinusoidal drive")});
  out.push_back({"fig4_left", "two oscillators, omega_a(t)=2exp(-t/2), hbar=g=m=omega_b=1, |0,0>, cutoff 100",
                 oscillators("fig4_left", TimeFunction::exp_decay(2.0, 0.5),
                             "two oscillators, exponentially decaying frequency")});
  out.push_back({"fig4_right", "two oscillators, omega_a(t)=sin(t)+2, hbar=g=m=omega_b=1, |0,0>, cutoff 100",
                 oscillators("fig4_right", TimeFunction::sinusoid(1.0, 1.0, 2.0),
                             "two oscillators, sinusoidal frequency")});
  out.push_back({"fig5_plain", "qubit battery, h0=1.2, h3=0.2, v0=0, v=(0.5,0.6,0), beta=(0,0,0.5), no measurements",
                 qubit("fig5_plain", "closed qubit battery")});
  {
    ScenarioConfig c = qubit("fig5_measured", "closed qubit battery with two equally-spaced measurements");
    c.analyses.push_back(Analysis::measurement_schedule);
    c.measurement_times = {10.0 / 3.0, 20.0 / 3.0};
    out.push_back({"fig5_measured",
                   "qubit battery as fig5_plain with two equally-spaced measurements in the sigma^3 basis "
                   "(t=10/3, 20/3)",
                   c});
  }
  {
    ScenarioConfig c;
    c.name = "fig6";
    c.description = "spin-boson battery relaxing to the maximally mixed state";
    c.model.model = ModelKind::spin_boson;
    c.model.parameters = {{"alpha1", 1.0}, {"alpha3", 1.0}, {"gamma", 0.25}, {"hbar", 1.0}};
    c.engine = Engine::lindblad;
    c.grid = {0.0, 50.0, 2000};
    const double s = 1.0 / std::sqrt(3.0);
    c.initial_state = {InitialState::Kind::bloch, {}, {s, s, s}};
    c.analyses = {Analysis::battery, Analysis::flows, Analysis::entropy_rate};
    out.push_back({"fig6", "spin-boson, gamma=0.25, alpha1=alpha3=hbar=1, beta(0)=(1,1,1)/sqrt(3)", c});
  }
  {
    ScenarioConfig c = qubit("fig7_probe", "Haar-averaged energy-power probe for the qubit battery");
    c.analyses.push_back(Analysis::haar_probe);
    c.haar = {TwirlTarget::rho_s, 10000};
    out.push_back({"fig7_probe",
                   "qubit battery of fig5_plain; typical probe over Haar-random initial states of equal purity, "
                   "n=10^4 Monte Carlo check",
                   c});
  }
  for (auto& p : out) p.config.output_path = "out/" + p.name;
  return out;
}

inline std::optional<Preset> find_preset(std::string_view name) {
  for (auto& p : presets())
    if (p.name == name) return p;
  return std::nullopt;
}

// --- tabular output -------------------------------------------------------------------

/// Column-ordered numeric table; the first row fixes the header.
class Table {
 public:
  using Row = std::vector<std::pair<std::string, double>>;

  void add(const Row& row) {
    if (names_.empty()) {
      for (const auto& [k, v] : row) names_.push_back(k);
    } else if (row.size() != names_.size()) {
      throw std::logic_error("Table: row has " + std::to_string(row.size()) + " columns, header has " +
                             std::to_string(names_.size()));
    }
    std::vector<double> values;
    values.reserve(row.size());
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (row[i].first != names_[i]) throw std::logic_error("Table: column order changed at " + row[i].first);
      values.push_back(row[i].second);
    }
    rows_.push_back(std::move(values));
  }

  const std::vector<std::string>& names() const { return names_; }
  const std::vector<std::vector<double>>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return i;
    return std::nullopt;
  }

  std::vector<double> column(std::string_view name) const {
    const auto i = index_of(name);
    if (!i) throw std::out_of_range("Table: no column '" + std::string(name) + "'");
    std::vector<double> out;
    out.reserve(rows_.size());
    for (const auto& r : rows_) out.push_back(r[*i]);
    return out;
  }

  /// Appends a column computed after the fact.
  void append_column(const std::string& name, const std::vector<double>& values) {
    if (values.size() != rows_.size()) throw std::logic_error("Table: column length mismatch");
    names_.push_back(name);
    for (std::size_t i = 0; i < rows_.size(); ++i) rows_[i].push_back(values[i]);
  }

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<double>> rows_;
};

/// 17 significant digits in scientific notation.
inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", v);
  return buf;
}

inline std::string to_csv(const Table& t) {
  std::string out;
  for (std::size_t i = 0; i < t.names().size(); ++i) {
    if (i) out += ',';
    out += t.names()[i];
  }
  out += '\n';
  for (const auto& r : t.rows()) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) out += ',';
      out += format_number(r[i]);
    }
    out += '\n';
  }
  return out;
}

// --- running a scenario -----------------------------------------------------------------

inline constexpr double kBoundTol = 1e-9;
// Edge population above which a truncated oscillator run is no longer trusted.
inline constexpr double kTruncationEdge = 1e-8;

struct ScenarioResult {
  ScenarioConfig config;
  Table table;
  nlohmann::ordered_json summary;
  std::size_t violations = 0;
  std::vector<std::string> violation_messages;
};

namespace detail {

inline Vector product_basis_vector(const BipartiteDims& dims, const std::vector<Index>& levels) {
  Vector psi = Vector::Zero(dims.total());
  const Index i = levels.at(0);
  const Index j = levels.size() > 1 ? levels[1] : 0;
  psi(i * dims.environment + j) = 1.0;
  return psi;
}

// Probability that either factor sits in its highest retained level; a
// direct indicator of Fock-space truncation error.
inline double edge_population(const BipartiteDims& dims, const Vector& psi) {
  const Index ds = dims.system, de = dims.environment;
  double p = 0.0;
  for (Index i = 0; i < ds; ++i)
    for (Index j = 0; j < de; ++j)
      if (i == ds - 1 || j == de - 1) p += std::norm(psi(i * de + j));
  return p;
}

struct Checker {
  std::size_t count = 0;
  std::vector<std::string> messages;

  void expect(bool ok, double t, const std::string& what) {
    if (ok) return;
    ++count;
    if (messages.size() < 20) messages.push_back(what + " at t=" + format_number(t));
  }

  void report(const UncertaintyReport& r, double t, const std::string& pair) {
    expect(r.var_a >= -kBoundTol && r.var_b >= -kBoundTol, t, "negative variance for " + pair);
    expect(r.slack >= -kBoundTol, t, "RS bound violated for " + pair);
  }
};

inline void add_report(Table::Row& row, const std::string& a, const std::string& b, const UncertaintyReport& r) {
  row.emplace_back("cov_" + a + "_" + b, r.cov_ab);
  row.emplace_back("comm_" + a + "_" + b, r.comm_term);
  row.emplace_back("bound_" + a + "_" + b, r.rs_bound);
}

inline nlohmann::ordered_json params_json(const ScenarioConfig& c) {
  nlohmann::ordered_json p;
  p["model"] = std::string(to_string(c.model.model));
  for (const auto& [k, v] : c.model.parameters) p["parameters"][k] = v;
  p["drive"] = {{"kind", std::string(to_string(c.model.drive.kind))},
                {"amplitude", c.model.drive.amplitude},
                {"rate", c.model.drive.rate},
                {"offset", c.model.drive.offset}};
  if (c.model.model == ModelKind::two_oscillators) p["fock_cutoff"] = c.model.fock_cutoff;
  p["engine"] = std::string(to_string(c.engine));
  p["grid"] = {{"t_start", c.grid.t_start}, {"t_end", c.grid.t_end}, {"n_steps", c.grid.n_steps}};
  if (c.initial_state.kind == InitialState::Kind::bloch)
    p["initial_state"] = {{"kind", "bloch"}, {"beta", c.initial_state.beta}};
  else
    p["initial_state"] = {{"kind", "product_basis"}, {"levels", c.initial_state.levels}};
  std::vector<std::string> an;
  for (Analysis a : c.analyses) an.emplace_back(to_string(a));
  p["analyses"] = an;
  if (!c.measurement_times.empty()) p["measurement_times"] = c.measurement_times;
  p["rng_seed"] = c.rng_seed;
  return p;
}

}  // namespace detail

/// Runs the configured evolution and analyses. Integration problems propagate
/// as IntegrationError; bound checks are counted in `violations`.
inline ScenarioResult run_scenario(const ScenarioConfig& cfg) {
  validate_config(cfg);
  ScenarioResult res;
  res.config = cfg;
  const BuiltModel model = build_model(cfg.model);
  const HamiltonianParts& parts = model.parts;
  const double hbar = parts.hbar;
  const std::vector<double> grid = cfg.grid.points();
  const bool measured = cfg.has(Analysis::measurement_schedule) && !cfg.measurement_times.empty();

  // --- evolve ---
  Trajectory traj;
  PureTrajectory pure;
  const bool use_pure = cfg.engine == Engine::schrodinger;
  BlochVector beta0{cfg.initial_state.beta};
  QuantumState rho0;
  if (cfg.initial_state.kind == InitialState::Kind::bloch) {
    rho0 = beta0.state();
  } else if (!use_pure) {
    rho0 = QuantumState::from_pure(detail::product_basis_vector(parts.dims, cfg.initial_state.levels));
    if (parts.dims.total() == 2) beta0 = BlochVector::from_density(rho0.rho());
  }

  SegmentPropagator propagate;
  switch (cfg.engine) {
    case Engine::von_neumann:
      propagate = [&](const QuantumState& r, const std::vector<double>& ts) {
        return evolve_von_neumann(parts, r, ts, cfg.integrator);
      };
      break;
    case Engine::lindblad:
      propagate = [&](const QuantumState& r, const std::vector<double>& ts) {
        return evolve_lindblad(parts, r, ts, cfg.integrator);
      };
      break;
    case Engine::qubit_exact:
      propagate = [&](const QuantumState& r, const std::vector<double>& ts) {
        Trajectory out;
        for (double t : ts) {
          const Matrix u = qubit_propagator(*model.qubit, t - ts.front());
          out.times.push_back(t);
          out.states.push_back(QuantumState::unchecked(u * r.rho() * u.adjoint()));
        }
        return out;
      };
      break;
    case Engine::bloch: {
      const auto& sb = *model.spin_boson;
      propagate = [&, sb](const QuantumState& r, const std::vector<double>& ts) {
        const auto betas = evolve_bloch_spin_boson(sb.alpha1, sb.alpha3, sb.gamma, hbar,
                                                   BlochVector::from_density(r.rho()), ts,
                                                   cfg.bloch_convention, cfg.integrator);
        Trajectory out;
        out.times = ts;
        for (const auto& b : betas) out.states.push_back(QuantumState::unchecked(b.density()));
        return out;
      };
      break;
    }
    case Engine::schrodinger:
      break;
  }

  if (use_pure) {
    pure = evolve_schrodinger(parts, detail::product_basis_vector(parts.dims, cfg.initial_state.levels), grid,
                              cfg.integrator);
  } else if (measured) {
    const SpectralBasis basis = spectral_basis(*parts.h_0);
    traj = measure_nonselective_schedule(propagate, rho0, grid, basis, cfg.measurement_times);
  } else {
    traj = propagate(rho0, grid);
  }
  const std::vector<double>& times = use_pure ? pure.times : traj.times;

  // --- per-time analyses ---
  detail::Checker check;
  const bool flows = cfg.has(Analysis::flows) || cfg.has(Analysis::qur_pairs);
  const bool battery = cfg.has(Analysis::battery);
  const bool entropy = cfg.has(Analysis::entropy_rate);
  const bool haar = cfg.has(Analysis::haar_probe);
  const bool single_qubit = parts.dims.total() == 2;

  // reference point for the exact qubit formula; reset after each measurement
  BlochVector seg_beta = beta0;
  double seg_t = times.empty() ? 0.0 : times.front();
  std::size_t next_measure = 0;

  for (std::size_t k = 0; k < times.size(); ++k) {
    const double t = times[k];
    Table::Row row;
    row.emplace_back("t", t);
    if (measured) {
      const bool post = next_measure < traj.measurement_indices.size() && traj.measurement_indices[next_measure] == k;
      row.emplace_back("post_measurement", post ? 1.0 : 0.0);
      if (post) {
        ++next_measure;
        seg_beta = BlochVector::from_density(traj.states[k].rho());
        seg_t = t;
      }
    }
    const Matrix* rho = use_pure ? nullptr : &traj.states[k].rho();

    if (single_qubit && rho) {
      const BlochVector b = BlochVector::from_density(*rho);
      row.emplace_back("exp_sx", b.beta[0]);
      row.emplace_back("exp_sy", b.beta[1]);
      row.emplace_back("exp_sz", b.beta[2]);
    } else if (!flows) {
      const KronOperator hs = KronOperator::on_system(parts.h_s(t), parts.dims.environment);
      const double e = use_pure ? expectation_complex(hs, pure.states[k]).real()
                                : (hs.to_dense() * *rho).trace().real();
      row.emplace_back("exp_h_s", e);
    }

    if (model.kind == ModelKind::two_oscillators && use_pure) {
      row.emplace_back("edge_population", detail::edge_population(parts.dims, pure.states[k]));
    }

    if (flows) {
      const FlowOperators ops = flow_ops(parts, t);
      const FlowUncertainty fu = use_pure ? analyze_flows(ops, pure.states[k]) : analyze_flows(ops, *rho);
      row.emplace_back("exp_u", fu.u_udot.exp_a);
      row.emplace_back("var_u", fu.u_udot.var_a);
      row.emplace_back("exp_udot", fu.u_udot.exp_b);
      row.emplace_back("var_udot", fu.u_udot.var_b);
      row.emplace_back("exp_qdot", fu.q_w.exp_a);
      row.emplace_back("var_qdot", fu.q_w.var_a);
      row.emplace_back("exp_wdot", fu.q_w.exp_b);
      row.emplace_back("var_wdot", fu.q_w.var_b);
      check.expect(fu.u_udot.var_a >= -kBoundTol && fu.q_w.var_a >= -kBoundTol && fu.q_w.var_b >= -kBoundTol &&
                       fu.u_udot.var_b >= -kBoundTol,
                   t, "negative flow variance");
      if (cfg.has(Analysis::qur_pairs)) {
        detail::add_report(row, "qdot", "wdot", fu.q_w);
        detail::add_report(row, "u", "udot", fu.u_udot);
        detail::add_report(row, "u", "qdot", fu.u_q);
        detail::add_report(row, "u", "wdot", fu.u_w);
        check.report(fu.q_w, t, "(qdot, wdot)");
        check.report(fu.u_udot, t, "(u, udot)");
        check.report(fu.u_q, t, "(u, qdot)");
        check.report(fu.u_w, t, "(u, wdot)");
        if (model.kind == ModelKind::two_spins) {
          const double f = cfg.model.drive.value(t);
          const double fd = cfg.model.drive.derivative(t);
          const double cf = use_pure ? qw_bound_two_spins(f, fd, model.coupling, hbar,
                                                          pure.states[k] * pure.states[k].adjoint())
                                     : qw_bound_two_spins(f, fd, model.coupling, hbar, *rho);
          row.emplace_back("bound_qdot_wdot_cf", cf * cf);
        } else if (model.kind == ModelKind::two_oscillators && use_pure) {
          const double cf = qw_bound_two_oscillators(*model.oscillators, t, pure.states[k]);
          row.emplace_back("bound_qdot_wdot_cf", cf * cf);
        }
        row.emplace_back("t_plus", fu.t_pm.t_plus);
        row.emplace_back("t_minus", fu.t_pm.t_minus);
        row.emplace_back("bound_udot_window_lower", fu.udot_window.lower);
        row.emplace_back("bound_udot_window_upper", fu.udot_window.upper);
        check.expect(fu.var_udot_direct - fu.udot_window.lower >= -kBoundTol, t, "udot window lower side");
        check.expect(fu.udot_window.upper - fu.var_udot_direct >= -kBoundTol, t, "udot window upper side");
        row.emplace_back("bound_u_via_udot", fu.u_bounds.via_udot);
        row.emplace_back("bound_u_via_udot_relaxed", fu.u_bounds.via_udot_relaxed);
        row.emplace_back("bound_u_via_qdot", fu.u_bounds.via_qdot);
        row.emplace_back("bound_u_via_wdot", fu.u_bounds.via_wdot);
        const double vu = fu.u_udot.var_a + kBoundTol;
        check.expect(fu.u_bounds.via_udot <= vu && fu.u_bounds.via_udot_relaxed <= vu &&
                         fu.u_bounds.via_qdot <= vu && fu.u_bounds.via_wdot <= vu,
                     t, "sigma_U lower bound exceeds variance");
      }
    }

    if (battery) {
      const Matrix r = rho ? *rho : Matrix(pure.states[k] * pure.states[k].adjoint());
      Matrix e_b, p_b;
      if (model.kind == ModelKind::spin_boson) {
        const auto& sb = *model.spin_boson;
        e_b = *parts.h_0;
        p_b = cfg.power_convention == PowerConvention::printed
                  ? spin_boson_power_operator(sb.alpha1, sb.alpha3, sb.gamma, hbar, PowerConvention::printed)
                  : battery_ops_open(parts, t).p_b;
      } else {
        const BatteryOperators ops = battery_ops_closed(parts, t);
        e_b = ops.e_b;
        p_b = ops.p_b;
      }
      const UncertaintyReport r_ep = rs_report(e_b, p_b, r);
      row.emplace_back("exp_e_b", r_ep.exp_a);
      row.emplace_back("var_e_b", r_ep.var_a);
      row.emplace_back("exp_p_b", r_ep.exp_b);
      row.emplace_back("var_p_b", r_ep.var_b);
      detail::add_report(row, "e_b", "p_b", r_ep);
      check.report(r_ep, t, "(e_b, p_b)");
      if (model.kind == ModelKind::qubit_battery) {
        row.emplace_back("comm_e_b_p_b_cf", qubit_battery_bound_exact(*model.qubit, seg_beta, t - seg_t));
      } else if (model.kind == ModelKind::spin_boson) {
        const auto& sb = *model.spin_boson;
        const UncertaintyReport cf =
            spin_boson_report(sb.alpha1, sb.alpha3, sb.gamma, hbar, BlochVector::from_density(r), cfg.power_convention);
        row.emplace_back("var_e_b_cf", cf.var_a);
        row.emplace_back("var_p_b_cf", cf.var_b);
        row.emplace_back("comm_e_b_p_b_cf", cf.comm_term);
        row.emplace_back("bound_e_b_p_b_cf", cf.rs_bound);
      }
    }

    if (entropy) {
      const QuantumState s = QuantumState::unchecked(*rho);
      const EntropyRate er = entropy_rate_superoperator(parts, s, t);
      const Matrix qd = dissipator_adjoint(parts.lindblad, parts.h_s(t), t);
      row.emplace_back("exp_entropy", von_neumann_entropy(*rho));
      row.emplace_back("exp_sdot", er.value);
      row.emplace_back("comm_qdot_sdot", commutator_probe(qd, er.op, *rho));
      row.emplace_back("comm_qdot_sdot_cf", entropy_heat_probe_spin_boson(*model.spin_boson, s));
    }

    if (haar) {
      const Matrix v = parts.v_s(t);
      row.emplace_back("haar_v_cf",
                       probe_closed_V(*parts.h_0, *rho, v.trace().real(), (v * v).trace().real(), hbar).value);
    }
    res.table.add(row);
  }

  // --- derived columns and summary ---
  nlohmann::ordered_json finals;
  auto& summary = res.summary;
  summary["preset"] = cfg.name;
  summary["params"] = detail::params_json(cfg);

  if (flows && !measured && times.size() >= 9) {
    const auto u = res.table.column("exp_u");
    const auto ud = res.table.column("exp_udot");
    const auto dudt = finite_difference(times, u, 8);
    const auto dudt2 = finite_difference(times, u, 2);
    std::vector<double> resid(times.size()), resid2(times.size());
    double worst = 0.0, worst2 = 0.0;
    for (std::size_t k = 0; k < times.size(); ++k) {
      resid[k] = dudt[k] - ud[k];
      resid2[k] = dudt2[k] - ud[k];
      worst = std::max(worst, std::abs(resid[k]));
      worst2 = std::max(worst2, std::abs(resid2[k]));
    }
    res.table.append_column("exp_dudt_fd", dudt);
    res.table.append_column("first_law_residual", resid);
    summary["first_law"] = {{"max_residual", worst}, {"max_residual_fd2", worst2}, {"fd_order", 8}};
    if (res.table.index_of("edge_population")) {
      // residual restricted to the prefix where truncation is still negligible
      const auto edge = res.table.column("edge_population");
      std::size_t end = 0;
      while (end < times.size() && edge[end] <= kTruncationEdge) ++end;
      double in_window = 0.0;
      for (std::size_t k = 0; k < end; ++k) in_window = std::max(in_window, std::abs(resid[k]));
      summary["first_law"]["edge_threshold"] = kTruncationEdge;
      summary["first_law"]["window_end"] = end ? times[end - 1] : times.front();
      summary["first_law"]["max_residual_window"] = in_window;
    }
  }

  if (model.kind == ModelKind::spin_boson) {
    const auto& sb = *model.spin_boson;
    Eigen::EigenSolver<Eigen::Matrix3d> es(spin_boson_gamma_matrix(sb.alpha1, sb.alpha3, sb.gamma, hbar));
    std::vector<std::array<double, 2>> ev;
    for (int i = 0; i < 3; ++i) ev.push_back({es.eigenvalues()(i).real(), es.eigenvalues()(i).imag()});
    std::sort(ev.begin(), ev.end());
    summary["gamma_eigenvalues"] = ev;
    const BlochVector last = BlochVector::from_density(traj.states.back().rho());
    summary["steady_state"] = {{"t", times.back()}, {"beta_norm", last.norm()}};
  }

  if (haar) {
    const auto& q = *model.qubit;
    ProbeSetup setup;
    setup.h0 = *parts.h_0;
    setup.v_s = parts.v_s(0.0);
    setup.rho_s = rho0.rho();
    setup.hbar = hbar;
    const MCResult mc = mc_probe_oracle(setup, cfg.haar.target, cfg.haar.n_samples, cfg.rng_seed);
    double closed = 0.0;
    if (cfg.haar.target == TwirlTarget::rho_s) {
      closed = probe_closed_rho(setup.h0, setup.v_s, rho0.purity(), 2, hbar);
    } else {
      closed = probe_closed_V(setup.h0, rho0.rho(), setup.v_s.trace().real(),
                              (setup.v_s * setup.v_s).trace().real(), hbar).value;
    }
    (void)q;
    summary["haar"] = {{"target", std::string(to_string(cfg.haar.target))},
                       {"mean", mc.mean},
                       {"se", mc.std_error},
                       {"n", mc.n},
                       {"closed_form", closed},
                       {"mean_var_product", mc.mean_var_product}};
  } else {
    summary["haar"] = nullptr;
  }

  if (res.table.size() > 0) {
    const auto& last = res.table.rows().back();
    for (std::size_t i = 0; i < res.table.names().size(); ++i) finals[res.table.names()[i]] = last[i];
  }
  summary["finals"] = finals;
  res.violations = check.count;
  res.violation_messages = check.messages;
  summary["violations"] = res.violations;
  if (!check.messages.empty()) summary["violation_messages"] = check.messages;
  return res;
}

/// Writes <dir>/<name>.csv and <dir>/<name>.json; returns the CSV path.
inline std::filesystem::path write_outputs(const ScenarioResult& res, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto csv_path = dir / (res.config.name + ".csv");
  const auto json_path = dir / (res.config.name + ".json");
  {
    std::ofstream out(csv_path, std::ios::binary);
    out << to_csv(res.table);
    if (!out) throw std::runtime_error("cannot write " + csv_path.string());
  }
  {
    std::ofstream out(json_path, std::ios::binary);
    out << res.summary.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write " + json_path.string());
  }
  return csv_path;
}

}  // namespace qflow
