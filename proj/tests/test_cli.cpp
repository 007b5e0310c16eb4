#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "convlab/cli.hpp"
#include "convlab/config.hpp"
#include "oracles.hpp"

using namespace convlab;

namespace {

bool same_arch(const ArchSpec& a, const ArchSpec& b) {
  if (a.hidden_layers != b.hidden_layers || a.spatial != b.spatial ||
      a.input_channels != b.input_channels || a.output_channels != b.output_channels ||
      a.num_inputs != b.num_inputs || a.lambdas != b.lambdas || a.alphas != b.alphas ||
      a.activation.kind != b.activation.kind || a.activation.table_x != b.activation.table_x ||
      a.activation.table_y != b.activation.table_y || a.k1_normalizer != b.k1_normalizer)
    return false;
  if (a.extractors.size() != b.extractors.size()) return false;
  for (size_t i = 0; i < a.extractors.size(); ++i) {
    if (a.extractors[i].kind != b.extractors[i].kind ||
        a.extractors[i].halfwidth != b.extractors[i].halfwidth ||
        a.extractors[i].grid_extent != b.extractors[i].grid_extent)
      return false;
    if (a.masks[i].offsets != b.masks[i].offsets) return false;
  }
  return true;
}

std::string temp_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("convlab_test_" + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace

TEST_CASE("arch text round-trips bit-exactly for every preset") {
  for (const auto& name : preset_names()) {
    ExperimentConfig cfg = preset(name);
    std::string text = arch_to_text(cfg.arch);
    ArchSpec back = arch_from_text(text);
    CHECK(same_arch(cfg.arch, back));
    CHECK(arch_to_text(back) == text);
  }
  // Awkward doubles and a table activation survive the round trip.
  ArchSpec spec = make_arch(1, {1, 1, 1},
                            {Extractor::fully_connected(), Extractor::fully_connected()},
                            {0.1, 1.0 / 3.0}, {0.123456789012345678},
                            Activation::table({-1.5, 0.25, 2.0}, {0.7, -0.1, 3.3}), 1, 1, 1);
  ArchSpec back = arch_from_text(arch_to_text(spec));
  CHECK(same_arch(spec, back));
  CHECK(back.lambdas[1] == spec.lambdas[1]);  // bitwise
  CHECK(back.alphas[0] == spec.alphas[0]);
}

TEST_CASE("experiment config round-trips through text") {
  ExperimentConfig cfg = preset("fcnn-scalar-identity");
  std::string text = config_to_text(cfg);
  ExperimentConfig back = config_from_text(text);
  CHECK(same_arch(cfg.arch, back.arch));
  CHECK(back.seed == cfg.seed);
  CHECK(back.n_list == cfg.n_list);
  CHECK(back.q_list == cfg.q_list);
  CHECK(back.replicas == cfg.replicas);
  CHECK(back.has_event);
  CHECK(back.event.kernel_index == cfg.event.kernel_index);
  CHECK(back.event.level == cfg.event.level);
  CHECK(back.has_observations);
  CHECK(back.observations.y(0) == cfg.observations.y(0));
  CHECK(back.observations.beta == cfg.observations.beta);
  CHECK(config_to_text(back) == text);
}

TEST_CASE("presets validate; the zero-padded preset carries the nine-offset mask") {
  for (const auto& name : preset_names()) {
    ExperimentConfig cfg = preset(name);
    CHECK(validate_arch(cfg.arch).pass());
  }
  ExperimentConfig zp = preset("zeropad2d-relu");
  const MaskSet& m = zp.arch.masks[0];
  REQUIRE(m.size() == 9);
  CHECK(m.declared_size == 9);
  CHECK(m.offsets[0] == std::array<int, 2>{0, 0});
  CHECK(m.offsets[1] == std::array<int, 2>{1, 0});
  CHECK(m.offsets[8] == std::array<int, 2>{0, -1});
  CHECK_THROWS(preset("no-such-preset"));
}

TEST_CASE("input batch CSV layout: one row per (c, i, mu), 1-based") {
  std::string csv = "c,i,mu,value\n1,1,1,0.5\n1,2,1,-1.25\n1,3,1,2.0\n";
  InputBatch b = input_batch_from_csv(csv, 1, 3, 1);
  CHECK(b.channels[0](0, 0) == 0.5);
  CHECK(b.channels[0](1, 0) == -1.25);
  CHECK(b.channels[0](2, 0) == 2.0);
  CHECK_THROWS(input_batch_from_csv("1,9,1,0.0\n", 1, 3, 1));
}

TEST_CASE("kernel chain JSON round-trips bit-exactly via hex floats") {
  ExperimentConfig cfg = preset("circular1d-relu");
  PsdMatrix k1 = input_kernel(cfg.arch, cfg.inputs);
  KernelChain chain = simulate_chain(cfg.arch, k1, 64, RngStream(5).split("json"));
  std::string j = chain_to_json(chain);
  KernelChain back = chain_from_json(j);
  REQUIRE(back.layers() == chain.layers());
  for (int k = 0; k < chain.layers(); ++k)
    CHECK((back.kernels[k].mat() - chain.kernels[k].mat()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.scale == chain.scale);
}

TEST_CASE("unknown command and missing config exit with code 2") {
  CHECK(run_command({"frobnicate"}) == 2);
  CHECK(run_command({}) == 2);
  CHECK(run_command({"validate"}) == 2);  // neither --config nor --preset
  CHECK(run_command({"validate", "--config", "/nonexistent/file.cfg"}) == 2);
}

TEST_CASE("validate command: exit 0 on presets, exit 1 on violations") {
  std::string dir = temp_dir("validate");
  CHECK(run_command({"validate", "--preset", "fcnn-scalar-identity", "--out", dir + "/ok"}) == 0);
  CHECK(std::filesystem::exists(dir + "/ok/report.txt"));
  CHECK(std::filesystem::exists(dir + "/ok/manifest.json"));

  // Pooling parity violation through a config file.
  ExperimentConfig bad = preset("pool2-tanh");
  bad.arch.spatial = {5, 5, 3};
  bad.inputs = InputBatch::zeros(1, 5, 1);
  bad.observations.y = Eigen::VectorXd::Constant(3, 0.3);
  std::string cfg_path = dir + "/bad.cfg";
  write_text_file(cfg_path, config_to_text(bad));
  CHECK(run_command({"validate", "--config", cfg_path, "--out", dir + "/bad"}) == 1);
  // Other commands refuse invalid architectures with exit 1 as well.
  CHECK(run_command({"chain-sim", "--config", cfg_path, "--out", dir + "/bad2"}) == 1);
}

TEST_CASE("chain-sim artifacts are byte-identical across reruns") {
  std::string dir = temp_dir("chainsim");
  ExperimentConfig cfg = preset("fcnn-scalar-identity");
  cfg.n_list = {16, 32};
  cfg.replicas = 8;
  cfg.limit_samples = 20000;
  std::string cfg_path = dir + "/cfg.cfg";
  write_text_file(cfg_path, config_to_text(cfg));

  CHECK(run_command({"chain-sim", "--config", cfg_path, "--out", dir + "/a", "--seed", "9"}) == 0);
  CHECK(run_command({"chain-sim", "--config", cfg_path, "--out", dir + "/b", "--seed", "9"}) == 0);
  for (const char* f : {"summary.csv", "medians.csv", "chain.json"})
    CHECK(read_text_file(dir + "/a/" + f) == read_text_file(dir + "/b/" + f));

  // A different seed changes the numbers.
  CHECK(run_command({"chain-sim", "--config", cfg_path, "--out", dir + "/c", "--seed", "10"}) == 0);
  CHECK(read_text_file(dir + "/a/summary.csv") != read_text_file(dir + "/c/summary.csv"));
}

TEST_CASE("preset command writes a parseable config") {
  std::string dir = temp_dir("preset");
  CHECK(run_command({"preset", "zeropad2d-relu", "--out", dir + "/z.cfg"}) == 0);
  ExperimentConfig cfg = config_from_file(dir + "/z.cfg");
  CHECK(cfg.arch.extractors[0].kind == Extractor::Kind::ZeroPad2D3x3);
  CHECK(run_command({"preset", "no-such"}) == 2);
}

TEST_CASE("ldp-verify on the scalar preset: final row covers the chi-square oracle") {
  std::string dir = temp_dir("ldpverify");
  CHECK(run_command({"ldp-verify", "--preset", "fcnn-scalar-identity", "--out", dir,
                     "--workers", "4"}) == 0);
  std::istringstream csv(read_text_file(dir + "/ldp.csv"));
  std::string line, last;
  std::getline(csv, line);  // header
  while (std::getline(csv, line))
    if (!line.empty()) last = line;
  REQUIRE_FALSE(last.empty());
  std::vector<std::string> cells;
  std::istringstream row(last);
  std::string cell;
  while (std::getline(row, cell, ',')) cells.push_back(cell);
  REQUIRE(cells.size() == 8);
  double n = parse_double(cells[0]);
  double ci_lo = parse_double(cells[5]);
  double ci_hi = parse_double(cells[6]);
  CHECK(cells[7] == "0");  // well sampled
  double exact = -std::log(oracles::chi_square_sf(1.5 * n, n)) / n;
  CHECK(ci_lo <= exact);
  CHECK(exact <= ci_hi);
}

TEST_CASE("CONVLAB_OUT_ROOT prefixes relative output directories") {
  std::string dir = temp_dir("outroot");
  setenv("CONVLAB_OUT_ROOT", dir.c_str(), 1);
  CHECK(run_command({"validate", "--preset", "fcnn-scalar-identity", "--out", "nested/run"}) == 0);
  unsetenv("CONVLAB_OUT_ROOT");
  CHECK(std::filesystem::exists(dir + "/nested/run/report.txt"));
}

TEST_CASE("every command runs end to end on a preset") {
  std::string dir = temp_dir("smoke");
  ExperimentConfig cfg = preset("pool2-tanh");
  cfg.n_list = {16, 32};
  cfg.replicas = 6;
  cfg.mc_samples = 20000;
  cfg.limit_samples = 20000;
  cfg.clt_n = 64;
  cfg.ks_replicas = 64;
  cfg.energy_replicas = 40;
  cfg.energy_n = 16;
  cfg.energy_permutations = 60;
  cfg.q_list = {1.0};
  std::string cfg_path = dir + "/smoke.cfg";
  write_text_file(cfg_path, config_to_text(cfg));

  struct Expect {
    const char* command;
    std::vector<const char*> files;
  };
  std::vector<Expect> cases = {
      {"validate", {"report.txt"}},
      {"chain-sim", {"summary.csv", "medians.csv", "chain.json"}},
      {"limit", {"limit.json", "limit.csv"}},
      {"clt-check", {"ks.csv", "energy.csv"}},
      {"rate", {"rate.csv", "rate.json"}},
      {"rate-chain", {"rate_chain.json"}},
      {"ldp-verify", {"ldp.csv", "ldp.json"}},
      {"posterior", {"laziness.csv", "posterior.json"}},
  };
  for (const auto& c : cases) {
    std::string out = dir + "/" + c.command;
    INFO(c.command);
    CHECK(run_command({c.command, "--config", cfg_path, "--out", out, "--workers", "2"}) == 0);
    CHECK(std::filesystem::exists(out + "/manifest.json"));
    CHECK(std::filesystem::exists(out + "/summary.txt"));
    for (const char* f : c.files) CHECK(std::filesystem::exists(out + "/" + f));
    // Chain artifacts round-trip through the hex-float JSON encoding.
    if (std::string(c.command) == "limit") {
      KernelChain chain = chain_from_json(read_text_file(out + "/limit.json"));
      CHECK(chain.layers() == cfg.arch.L() + 1);
      CHECK(!chain.std_errors.empty());
    }
  }
}
