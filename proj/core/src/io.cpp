#include "hypergeo/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hypergeo/errors.hpp"
#include "hypergeo/version.hpp"

namespace hypergeo::io {

namespace {

using nlohmann::json;

std::string read_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ValidationError(std::string(what) + ": cannot read " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text,
                const char* what) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw ValidationError(std::string(what) + ": cannot write " + path);
  }
  out << text;
  out.close();
  if (!out) {
    throw ValidationError(std::string(what) + ": write failed for " + path);
  }
}

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string(what) + ": malformed JSON: " + e.what());
  }
}

const json& require(const json& j, const char* key, const char* what) {
  const auto it = j.find(key);
  if (it == j.end()) {
    throw ValidationError(std::string(what) + ": missing field '" + key + "'");
  }
  return *it;
}

json train_fields(const trainer::TrainConfig& cfg) {
  json j;
  j["ways"] = cfg.ways;
  j["shots"] = cfg.shots;
  j["queries"] = cfg.queries;
  j["threshold"] = cfg.threshold;
  j["rank"] = cfg.rank;
  j["hidden"] = cfg.hidden;
  j["c_min"] = cfg.c_min;
  j["c_max"] = cfg.c_max;
  j["lr"] = cfg.lr;
  j["momentum"] = cfg.momentum;
  j["steps"] = cfg.steps;
  j["loss"] = cfg.loss_kind == trainer::LossKind::kContrastive ? "contrastive"
                                                               : "cross_entropy";
  j["margin"] = cfg.margin;
  j["residual"] = cfg.residual_enabled;
  j["seed"] = cfg.seed;
  return j;
}

/// Applies recognized TrainConfig keys from j onto cfg; keys listed in
/// `extra_ok` are skipped; anything else is an error.
void apply_train_fields(const json& j, trainer::TrainConfig& cfg,
                        const std::vector<std::string>& extra_ok,
                        const char* what) {
  if (!j.is_object()) {
    throw ValidationError(std::string(what) + ": config must be a JSON object");
  }
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "ways") cfg.ways = value.get<int>();
      else if (key == "shots") cfg.shots = value.get<int>();
      else if (key == "queries") cfg.queries = value.get<int>();
      else if (key == "threshold") cfg.threshold = value.get<double>();
      else if (key == "rank") cfg.rank = value.get<int>();
      else if (key == "hidden") cfg.hidden = value.get<int>();
      else if (key == "c_min") cfg.c_min = value.get<double>();
      else if (key == "c_max") cfg.c_max = value.get<double>();
      else if (key == "lr") cfg.lr = value.get<double>();
      else if (key == "momentum") cfg.momentum = value.get<double>();
      else if (key == "steps") cfg.steps = value.get<int>();
      else if (key == "margin") cfg.margin = value.get<double>();
      else if (key == "residual") cfg.residual_enabled = value.get<bool>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "loss") {
        const std::string name = value.get<std::string>();
        if (name == "cross_entropy") {
          cfg.loss_kind = trainer::LossKind::kCrossEntropy;
        } else if (name == "contrastive") {
          cfg.loss_kind = trainer::LossKind::kContrastive;
        } else {
          throw ValidationError(std::string(what) + ": unknown loss '" + name +
                                "' (expected cross_entropy or contrastive)");
        }
      } else {
        bool allowed = false;
        for (const std::string& ok : extra_ok) allowed = allowed || key == ok;
        if (!allowed) {
          throw ValidationError(std::string(what) + ": unknown config key '" +
                                key + "'");
        }
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string(what) + ": bad config value: " + e.what());
  }
}

}  // namespace

void save_dataset(const std::string& path, const trainer::SyntheticDataset& ds) {
  json j;
  j["dim"] = ds.config.dim;
  j["kappa"] = ds.config.kappa;
  json points = json::array();
  for (const ball::BallPoint& p : ds.points) {
    json row = json::array();
    for (int d = 0; d < p.dim(); ++d) row.push_back(p.coords()[d]);
    points.push_back(std::move(row));
  }
  j["points"] = std::move(points);
  j["labels"] = ds.labels;
  j["tree"] = ds.tree;
  j["config"] = parse_json(dataset_config_json(ds.config), "dataset config");
  write_file(path, j.dump(), "dataset file");
}

trainer::SyntheticDataset load_dataset(const std::string& path) {
  const json j = parse_json(read_file(path, "dataset file"), "dataset file");
  constexpr const char* kWhat = "dataset file";
  trainer::SyntheticDataset ds;
  try {
    const json& cfg = require(j, "config", kWhat);
    ds.config.depth = require(cfg, "depth", kWhat).get<int>();
    ds.config.branching = require(cfg, "branching", kWhat).get<int>();
    ds.config.classes = require(cfg, "classes", kWhat).get<int>();
    ds.config.dim = require(cfg, "dim", kWhat).get<int>();
    ds.config.per_class = require(cfg, "per_class", kWhat).get<int>();
    ds.config.noise_scale = require(cfg, "noise_scale", kWhat).get<double>();
    ds.config.kappa = require(cfg, "kappa", kWhat).get<double>();
    ds.config.seed = require(cfg, "seed", kWhat).get<std::uint64_t>();
    ds.config.validate();
    if (require(j, "dim", kWhat).get<int>() != ds.config.dim ||
        require(j, "kappa", kWhat).get<double>() != ds.config.kappa) {
      throw ValidationError(
          "dataset file: top-level dim/kappa disagree with config");
    }

    const json& points = require(j, "points", kWhat);
    const json& labels = require(j, "labels", kWhat);
    const json& tree = require(j, "tree", kWhat);
    if (!points.is_array() || !labels.is_array() || !tree.is_array()) {
      throw ValidationError("dataset file: points/labels/tree must be arrays");
    }
    if (points.size() != labels.size() || points.empty()) {
      throw ValidationError(
          "dataset file: points and labels must align and be non-empty");
    }
    const ball::CurvatureMag kappa(ds.config.kappa);
    const int classes = ds.config.resolved_classes();
    ds.points.reserve(points.size());
    ds.labels.reserve(labels.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      const json& row = points[i];
      if (!row.is_array() || static_cast<int>(row.size()) != ds.config.dim) {
        throw ValidationError("dataset file: point row has wrong width");
      }
      Eigen::VectorXd v(ds.config.dim);
      for (int d = 0; d < ds.config.dim; ++d) {
        v[d] = row[static_cast<std::size_t>(d)].get<double>();
      }
      ds.points.emplace_back(v, kappa);
      const int label = labels[i].get<int>();
      if (label < 0 || label >= classes) {
        throw ValidationError("dataset file: label out of range");
      }
      ds.labels.push_back(label);
    }
    ds.tree.reserve(tree.size());
    for (std::size_t i = 0; i < tree.size(); ++i) {
      const int parent = tree[i].get<int>();
      const bool ok = i == 0 ? parent == -1
                             : parent >= 0 && parent < static_cast<int>(i);
      if (!ok) {
        throw ValidationError("dataset file: malformed tree parent index");
      }
      ds.tree.push_back(parent);
    }
    if (ds.tree.empty()) {
      throw ValidationError("dataset file: empty anchor tree");
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("dataset file: bad field: ") + e.what());
  }
  return ds;
}

void save_checkpoint(const std::string& path, const ghdm::GeneratorParams& params,
                     const trainer::TrainConfig& train) {
  json j;
  j["format_version"] = 1;
  json cfg = train_fields(train);
  cfg["dim"] = params.config().dim;
  cfg["base_kappa"] = params.config().base_kappa;
  j["config"] = std::move(cfg);
  json store = json::object();
  for (const diff::Param& p : params.store()) {
    json entry;
    entry["shape"] = p.shape;
    entry["data"] = p.value;
    store[p.name] = std::move(entry);
  }
  j["params"] = std::move(store);
  write_file(path, j.dump(), "checkpoint file");
}

Checkpoint load_checkpoint(const std::string& path) {
  const json j = parse_json(read_file(path, "checkpoint file"), "checkpoint file");
  constexpr const char* kWhat = "checkpoint file";
  const auto version = j.find("format_version");
  if (version == j.end() || !version->is_number_integer() ||
      version->get<int>() != 1) {
    throw ValidationError(
        "checkpoint file: versioned-format error: expected format_version 1");
  }
  trainer::TrainConfig train;
  int dim = 0;
  double base_kappa = 0.0;
  try {
    const json& cfg = require(j, "config", kWhat);
    apply_train_fields(cfg, train, {"dim", "base_kappa"}, kWhat);
    dim = require(cfg, "dim", kWhat).get<int>();
    base_kappa = require(cfg, "base_kappa", kWhat).get<double>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string(kWhat) + ": bad config value: " + e.what());
  }
  train.validate();

  ghdm::GhdmConfig gcfg;
  gcfg.dim = dim;
  gcfg.rank = train.rank;
  gcfg.hidden = train.hidden;
  gcfg.c_min = train.c_min;
  gcfg.c_max = train.c_max;
  gcfg.base_kappa = base_kappa;
  gcfg.residual_enabled = train.residual_enabled;
  gcfg.validate();

  Checkpoint out{ghdm::GeneratorParams(gcfg), train};
  const json& store = require(j, "params", kWhat);
  if (!store.is_object()) {
    throw ValidationError("checkpoint file: params must be an object");
  }
  std::size_t used = 0;
  try {
    for (diff::Param& p : out.params.store()) {
      const auto it = store.find(p.name);
      if (it == store.end()) {
        throw ValidationError(
            "checkpoint file: versioned-format error: missing parameter '" +
            p.name + "'");
      }
      const std::vector<int> shape =
          require(*it, "shape", kWhat).get<std::vector<int>>();
      if (shape != p.shape) {
        throw ValidationError(
            "checkpoint file: versioned-format error: parameter '" + p.name +
            "' shape disagrees with the declared config");
      }
      const std::vector<double> data =
          require(*it, "data", kWhat).get<std::vector<double>>();
      if (data.size() != p.value.size()) {
        throw ValidationError(
            "checkpoint file: versioned-format error: parameter '" + p.name +
            "' data length disagrees with its shape");
      }
      for (double v : data) {
        if (!std::isfinite(v)) {
          throw ValidationError("checkpoint file: non-finite parameter value in '" +
                                p.name + "'");
        }
      }
      p.value = data;
      ++used;
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string(kWhat) + ": bad parameter entry: " +
                          e.what());
  }
  if (used != store.size()) {
    throw ValidationError(
        "checkpoint file: versioned-format error: unexpected extra parameters");
  }
  return out;
}

trainer::TrainConfig parse_train_config(const std::string& text,
                                        trainer::TrainConfig base) {
  const json j = parse_json(text, "train config");
  apply_train_fields(j, base, {}, "train config");
  return base;
}

std::string train_config_json(const trainer::TrainConfig& cfg, int dim,
                              double base_kappa) {
  json j = train_fields(cfg);
  if (dim > 0) {
    j["dim"] = dim;
    j["base_kappa"] = base_kappa;
  }
  return j.dump();
}

std::string dataset_config_json(const trainer::DatasetConfig& cfg) {
  json j;
  j["depth"] = cfg.depth;
  j["branching"] = cfg.branching;
  j["classes"] = cfg.classes;
  j["dim"] = cfg.dim;
  j["per_class"] = cfg.per_class;
  j["noise_scale"] = cfg.noise_scale;
  j["kappa"] = cfg.kappa;
  j["seed"] = cfg.seed;
  return j.dump();
}

std::string format_double(double v) {
  if (!std::isfinite(v)) {
    throw ValidationError("format_double: non-finite value");
  }
  return json(v).dump();
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  if (header.empty()) {
    throw ValidationError("write_csv: header must not be empty");
  }
  auto escape = [](const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string quoted = "\"";
    for (char c : field) {
      quoted += c;
      if (c == '"') quoted += '"';
    }
    quoted += '"';
    return quoted;
  };
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& fields) {
    if (fields.size() != header.size()) {
      throw ValidationError("write_csv: row width disagrees with header");
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i > 0) out << ',';
      out << escape(fields[i]);
    }
    out << "\r\n";
  };
  emit(header);
  for (const std::vector<std::string>& row : rows) emit(row);
  write_file(path, out.str(), "metrics file");
}

std::string manifest_path_for(const std::string& output_path) {
  return output_path + ".manifest.json";
}

void write_manifest(const std::string& path, const RunManifest& manifest) {
  json j;
  j["command"] = manifest.command;
  j["config"] = parse_json(manifest.config_json.empty() ? "{}"
                                                        : manifest.config_json,
                           "manifest config");
  j["seed"] = manifest.seed;
  j["version"] = manifest.version.empty() ? std::string(kVersion)
                                          : manifest.version;
  json timings = json::object();
  for (const auto& [phase, seconds] : manifest.phase_seconds) {
    timings[phase] = seconds;
  }
  j["timings"] = std::move(timings);
  write_file(path, j.dump(2) + "\n", "manifest file");
}

}  // namespace hypergeo::io
