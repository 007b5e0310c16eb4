#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "convlab/arch.hpp"
#include "convlab/kernel.hpp"
#include "convlab/ldp.hpp"
#include "convlab/posterior.hpp"

namespace convlab {

/// Shortest decimal that round-trips the double exactly.
std::string fmt_double(double v);
/// Hex-float encoding (bit exact by construction).
std::string fmt_hex(double v);
double parse_double(const std::string& token);

std::string arch_to_text(const ArchSpec& spec);
ArchSpec arch_from_text(const std::string& text);

/// Full experiment description: architecture, data, command parameters.
struct ExperimentConfig {
  ArchSpec arch;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  int workers = 1;

  InputBatch inputs;
  bool has_observations = false;
  Observations observations;

  std::vector<long long> n_list;
  long long replicas = 0;
  long long mc_samples = 100000;
  long long limit_samples = 400000;
  bool antithetic = false;
  long long clt_n = 4096;
  long long ks_replicas = 1024;
  long long energy_replicas = 2000;
  long long energy_n = 256;
  int energy_permutations = 499;
  std::vector<double> q_list;
  int rate_layer_index = 1;
  bool has_event = false;
  EventSpec event;
  double grad_tol = 1e-3;

  std::string raw_text;  // original file contents, echoed into the manifest
};

std::string config_to_text(const ExperimentConfig& cfg);
ExperimentConfig config_from_text(const std::string& text);
ExperimentConfig config_from_file(const std::string& path);

/// Complete end-to-end configurations for the four example architectures.
ExperimentConfig preset(const std::string& name);
std::vector<std::string> preset_names();

/// CSV rows "c,i,mu,value" with 1-based indices.
InputBatch input_batch_from_csv(const std::string& text, int c0, int n0, int p);
Observations observations_from_csv(const std::string& text, int channels, int n, int p,
                                   double beta);

std::string chain_to_json(const KernelChain& chain);
KernelChain chain_from_json(const std::string& text);

struct ManifestEntry {
  std::string file;
  std::string description;
  std::string seed_path;
  long long mc_samples = 0;
};

void write_manifest(const std::string& dir, const std::string& command,
                    const ExperimentConfig& cfg, double wall_seconds,
                    const std::vector<ManifestEntry>& entries);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace convlab
