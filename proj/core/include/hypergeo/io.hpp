#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hypergeo/ghdm.hpp"
#include "hypergeo/trainer.hpp"

namespace hypergeo::io {

// ---- dataset files ----

/// Single JSON document: {"dim", "kappa", "points", "labels", "tree",
/// "config"}. Doubles round-trip losslessly; two saves of the same dataset
/// are byte-identical.
void save_dataset(const std::string& path, const trainer::SyntheticDataset& ds);
trainer::SyntheticDataset load_dataset(const std::string& path);

// ---- checkpoint files ----

/// JSON {"format_version": 1, "config": {...}, "params": {name: {"shape",
/// "data"}}}. The config object carries the training configuration plus the
/// feature dimension and base curvature, so a checkpoint reloads without its
/// dataset.
void save_checkpoint(const std::string& path, const ghdm::GeneratorParams& params,
                     const trainer::TrainConfig& train);

struct Checkpoint {
  ghdm::GeneratorParams params;
  trainer::TrainConfig train;
};

/// Rejects missing/unsupported format_version and any parameter whose shape
/// disagrees with the declared config with a versioned-format error.
Checkpoint load_checkpoint(const std::string& path);

// ---- config plumbing ----

/// Applies a JSON object of TrainConfig fields on top of `base`. Unknown keys
/// are errors, so typos do not silently fall back to defaults.
trainer::TrainConfig parse_train_config(const std::string& text,
                                        trainer::TrainConfig base = {});

std::string train_config_json(const trainer::TrainConfig& cfg, int dim = 0,
                              double base_kappa = 0.0);
std::string dataset_config_json(const trainer::DatasetConfig& cfg);

// ---- CSV metrics ----

/// Shortest lossless decimal form of a double (same digits the JSON writer
/// emits), so metrics files are deterministic and reload exactly.
std::string format_double(double v);

/// RFC-4180: fields holding commas, quotes or newlines are quoted, embedded
/// quotes doubled, rows end in CRLF.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// ---- run manifests ----

/// Reproducibility sidecar written next to every output file.
struct RunManifest {
  std::string command;
  std::string config_json;  // resolved configuration, serialized JSON object
  std::uint64_t seed = 0;
  std::string version;      // toolkit version; filled from kVersion if empty
  std::vector<std::pair<std::string, double>> phase_seconds;
};

std::string manifest_path_for(const std::string& output_path);
void write_manifest(const std::string& path, const RunManifest& manifest);

}  // namespace hypergeo::io
