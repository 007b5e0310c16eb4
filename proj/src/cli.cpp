#include "convlab/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "convlab/config.hpp"
#include "convlab/kernel.hpp"
#include "convlab/ldp.hpp"
#include "convlab/posterior.hpp"
#include "convlab/stats.hpp"

namespace convlab {

namespace {

using Json = nlohmann::json;

struct CommandIo {
  ExperimentConfig cfg;
  std::string out_dir;
  std::vector<ManifestEntry> entries;
  std::ostringstream summary;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

  void add(const std::string& file, const std::string& description, const std::string& seed_path,
           long long mc_samples) {
    entries.push_back({file, description, seed_path, mc_samples});
  }
  void finish(const std::string& command) {
    std::string text = summary.str();
    if (!text.empty()) {
      write_text_file(out_dir + "/summary.txt", text);
      entries.push_back({"summary.txt", "human-readable summary", "", 0});
    }
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    write_manifest(out_dir, command, cfg, wall, entries);
  }
};

std::string csv_join(const std::vector<std::string>& cells) {
  std::string out;
  for (size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ",";
    out += cells[i];
  }
  return out;
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) { rows_.push_back(csv_join(header)); }
  void row(std::vector<std::string> cells) { rows_.push_back(csv_join(cells)); }
  std::string str() const {
    std::string out;
    for (const auto& r : rows_) out += r + "\n";
    return out;
  }

 private:
  std::vector<std::string> rows_;
};

std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

McOptions mc_options(const ExperimentConfig& cfg) {
  McOptions o;
  o.workers = cfg.workers;
  return o;
}

RateOptions rate_options(const ExperimentConfig& cfg) {
  RateOptions o;
  o.mc_samples = cfg.mc_samples;
  o.grad_tol = cfg.grad_tol;
  o.workers = cfg.workers;
  return o;
}

int cmd_validate(CommandIo& io) {
  ValidationReport rep = validate_arch(io.cfg.arch);
  std::ostringstream os;
  os << (rep.pass() ? "pass\n" : rep.str());
  if (rep.pass()) {
    RngStream probe_stream(io.cfg.seed);
    for (int ell = 1; ell <= io.cfg.arch.L(); ++ell) {
      GrowthProbeReport probe =
          growth_probe(io.cfg.arch, ell, 64, {1, 2, 4, 8, 16, 32},
                       probe_stream.split("growth").split(static_cast<std::uint64_t>(ell)));
      os << "growth probe layer " << ell << ": fitted order " << fmt_double(probe.fitted_order)
         << (probe.flagged ? " [flagged: order >= 2]" : " [clear]") << "\n";
    }
  }
  write_text_file(io.out_dir + "/report.txt", os.str());
  io.add("report.txt", "validation report", "root/growth", 64);
  io.summary << "validate: " << (rep.pass() ? "pass" : "violations found") << "\n" << os.str();
  io.finish("validate");
  std::cout << os.str();
  return rep.pass() ? 0 : 1;
}

int cmd_chain_sim(CommandIo& io) {
  const ExperimentConfig& cfg = io.cfg;
  PsdMatrix k1 = input_kernel(cfg.arch, cfg.inputs);
  RngStream root(cfg.seed);
  McOptions mc = mc_options(cfg);

  KernelChain limit =
      limit_chain(cfg.arch, k1, cfg.limit_samples, root.split("limit"), mc, cfg.antithetic);

  std::vector<long long> ns = cfg.n_list.empty() ? std::vector<long long>{64, 256, 1024}
                                                 : cfg.n_list;
  long long replicas = cfg.replicas > 0 ? cfg.replicas : 1;

  CsvWriter summary({"n", "replica", "fro_dist_final"});
  CsvWriter medians({"n", "median_fro_dist"});
  std::string chains_json;
  for (long long n : ns) {
    RngStream ns_stream = root.split("chain-sim").split("n-" + std::to_string(n));
    std::vector<double> dists;
    for (long long r = 0; r < replicas; ++r) {
      KernelChain chain =
          simulate_chain(cfg.arch, k1, n, ns_stream.split(static_cast<std::uint64_t>(r)), mc);
      double d = (chain.kernels.back().mat() - limit.kernels.back().mat()).norm();
      dists.push_back(d);
      summary.row({std::to_string(n), std::to_string(r), fmt_double(d)});
      if (r == 0 && chains_json.empty()) chains_json = chain_to_json(chain);
    }
    medians.row({std::to_string(n), fmt_double(median(dists))});
    io.summary << "chain-sim: n=" << n << " replicas=" << replicas
               << " median |K_final - K_limit|_F = " << fmt_short(median(dists)) << "\n";
  }
  write_text_file(io.out_dir + "/summary.csv", summary.str());
  write_text_file(io.out_dir + "/medians.csv", medians.str());
  write_text_file(io.out_dir + "/chain.json", chains_json);
  io.add("summary.csv", "per-replica distance of the final kernel to the limit",
         "root/chain-sim", replicas);
  io.add("medians.csv", "median distances per n", "root/chain-sim", replicas);
  io.add("chain.json", "first replica chain at the smallest n", "root/chain-sim", 1);
  io.finish("chain-sim");
  return 0;
}

int cmd_limit(CommandIo& io) {
  const ExperimentConfig& cfg = io.cfg;
  PsdMatrix k1 = input_kernel(cfg.arch, cfg.inputs);
  RngStream root(cfg.seed);
  KernelChain limit = limit_chain(cfg.arch, k1, cfg.limit_samples, root.split("limit"),
                                  mc_options(cfg), cfg.antithetic);
  write_text_file(io.out_dir + "/limit.json", chain_to_json(limit));
  CsvWriter csv({"layer", "row", "col", "value", "std_error"});
  for (int k = 0; k < limit.layers(); ++k) {
    const Eigen::MatrixXd& m = limit.kernels[k].mat();
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c)
        csv.row({std::to_string(k + 1), std::to_string(r + 1), std::to_string(c + 1),
                 fmt_double(m(r, c)), fmt_double(limit.std_errors[k](r, c))});
  }
  write_text_file(io.out_dir + "/limit.csv", csv.str());
  for (int k = 0; k < limit.layers(); ++k)
    io.summary << "limit: K(" << (k + 1) << ") dim " << limit.kernels[k].dim()
               << " max std error " << fmt_short(limit.std_errors[k].maxCoeff()) << "\n";
  io.add("limit.json", "deterministic-limit kernel chain", "root/limit", cfg.limit_samples);
  io.add("limit.csv", "limit kernels with standard errors", "root/limit", cfg.limit_samples);
  io.finish("limit");
  return 0;
}

int cmd_clt_check(CommandIo& io) {
  const ExperimentConfig& cfg = io.cfg;
  PsdMatrix k1 = input_kernel(cfg.arch, cfg.inputs);
  RngStream root(cfg.seed);
  McOptions mc = mc_options(cfg);
  KernelChain limit =
      limit_chain(cfg.arch, k1, cfg.limit_samples, root.split("limit"), mc, cfg.antithetic);
  const Eigen::MatrixXd& klim = limit.kernels.back().mat();
  const int d = static_cast<int>(klim.rows());

  // Standardized output marginals at width scale clt_n, one output channel.
  RngStream ks_stream = root.split("clt-ks");
  Eigen::MatrixXd outs(cfg.ks_replicas, d);
  for (long long r = 0; r < cfg.ks_replicas; ++r) {
    Eigen::MatrixXd h = chain_output_sample(cfg.arch, k1, cfg.clt_n, 1,
                                            ks_stream.split(static_cast<std::uint64_t>(r)), mc);
    outs.row(r) = h.row(0);
  }
  CsvWriter ks_csv({"component", "ks_stat", "p_value", "pass"});
  bool ks_all = true;
  for (int c = 0; c < d; ++c) {
    double sd = std::sqrt(klim(c, c));
    std::vector<double> sample(cfg.ks_replicas);
    for (long long r = 0; r < cfg.ks_replicas; ++r) sample[r] = outs(r, c) / sd;
    TestResult t = ks_test_standard_normal(sample);
    bool pass = t.p_value > 0.01;
    ks_all = ks_all && pass;
    ks_csv.row({std::to_string(c + 1), fmt_double(t.statistic), fmt_double(t.p_value),
                pass ? "1" : "0"});
  }
  write_text_file(io.out_dir + "/ks.csv", ks_csv.str());

  // Sampler equivalence: weight-space forward pass vs chain representation.
  RngStream fw_stream = root.split("energy-forward");
  RngStream ch_stream = root.split("energy-chain");
  Eigen::MatrixXd a(cfg.energy_replicas, static_cast<long long>(cfg.arch.output_channels) * d);
  Eigen::MatrixXd b(cfg.energy_replicas, static_cast<long long>(cfg.arch.output_channels) * d);
  for (long long r = 0; r < cfg.energy_replicas; ++r) {
    Eigen::MatrixXd hf =
        forward_network_sample(cfg.arch, cfg.inputs, cfg.energy_n, cfg.arch.output_channels,
                               fw_stream.split(static_cast<std::uint64_t>(r)));
    Eigen::MatrixXd hc = chain_output_sample(cfg.arch, k1, cfg.energy_n, cfg.arch.output_channels,
                                             ch_stream.split(static_cast<std::uint64_t>(r)), mc);
    for (int c = 0; c < cfg.arch.output_channels; ++c) {
      a.row(r).segment(static_cast<long long>(c) * d, d) = hf.row(c);
      b.row(r).segment(static_cast<long long>(c) * d, d) = hc.row(c);
    }
  }
  TestResult energy = energy_distance_test(a, b, cfg.energy_permutations, root.split("energy-perm"));
  bool energy_pass = energy.p_value > 0.01;
  CsvWriter energy_csv({"estat", "p_value", "pass"});
  energy_csv.row({fmt_double(energy.statistic), fmt_double(energy.p_value),
                  energy_pass ? "1" : "0"});
  write_text_file(io.out_dir + "/energy.csv", energy_csv.str());
  io.summary << "clt-check: " << d << " standardized marginals at n=" << cfg.clt_n
             << ", all KS p > 0.01: " << (ks_all ? "yes" : "NO") << "\n"
             << "clt-check: forward vs chain energy test p = " << fmt_short(energy.p_value)
             << " (" << (energy_pass ? "pass" : "FAIL") << ")\n";

  io.add("ks.csv", "per-marginal KS against the limit Gaussian", "root/clt-ks", cfg.ks_replicas);
  io.add("energy.csv", "two-sample energy test: forward vs chain sampler",
         "root/energy-forward, root/energy-chain", cfg.energy_replicas);
  io.finish("clt-check");
  return (ks_all && energy_pass) ? 0 : 1;
}

int cmd_rate(CommandIo& io) {
  const ExperimentConfig& cfg = io.cfg;
  PsdMatrix k1 = input_kernel(cfg.arch, cfg.inputs);
  RngStream root(cfg.seed);
  McOptions mc = mc_options(cfg);
  KernelChain limit =
      limit_chain(cfg.arch, k1, cfg.limit_samples, root.split("limit"), mc, cfg.antithetic);
  const int ell = cfg.rate_layer_index;
  if (ell < 1 || ell > cfg.arch.L()) {
    std::cerr << "rate: rate_layer must be in [1, L]\n";
    return 2;
  }
  const PsdMatrix& q1 = limit.K(ell);
  const PsdMatrix& base = limit.K(ell + 1);
  std::vector<double> qs = cfg.q_list.empty() ? std::vector<double>{1.0} : cfg.q_list;

  CsvWriter csv({"q", "rate", "grad_norm", "iterations", "domain_limited", "refreshes"});
  Json jout = Json::array();
  RateOptions ro = rate_options(cfg);
  for (double q : qs) {
    PsdMatrix q2(q * base.mat());
    RateResult r = rate_layer(cfg.arch, ell, q2, q1, root.split("rate").split(fmt_double(q)), ro);
    csv.row({fmt_double(q), fmt_double(r.value), fmt_double(r.grad_norm),
             std::to_string(r.iterations), r.domain_limited ? "1" : "0",
             std::to_string(r.refreshes)});
    io.summary << "rate: layer " << ell << " q=" << fmt_short(q) << " I=" << fmt_short(r.value)
               << (r.domain_limited ? " (domain-limited lower bound)" : "") << "\n";
    Json jr;
    jr["q"] = q;
    jr["rate"] = r.value;
    jr["rate_hex"] = fmt_hex(r.value);
    jr["grad_norm"] = r.grad_norm;
    jr["iterations"] = r.iterations;
    jr["domain_limited"] = r.domain_limited;
    jr["trust_radius"] = r.trust_radius;
    Json tilt = Json::array();
    for (int i = 0; i < r.tilt.rows(); ++i)
      for (int j = 0; j < r.tilt.cols(); ++j) tilt.push_back(fmt_hex(r.tilt(i, j)));
    jr["tilt"] = tilt;
    jout.push_back(jr);
  }
  write_text_file(io.out_dir + "/rate.csv", csv.str());
  write_text_file(io.out_dir + "/rate.json", jout.dump(2) + "\n");
  io.add("rate.csv", "layer rate at scaled limit kernels", "root/rate", cfg.mc_samples);
  io.add("rate.json", "layer rate results with optimal tilts", "root/rate", cfg.mc_samples);
  io.finish("rate");
  return 0;
}

int cmd_rate_chain(CommandIo& io) {
  const ExperimentConfig& cfg = io.cfg;
  PsdMatrix k1 = input_kernel(cfg.arch, cfg.inputs);
  RngStream root(cfg.seed);
  McOptions mc = mc_options(cfg);
  KernelChain limit =
      limit_chain(cfg.arch, k1, cfg.limit_samples, root.split("limit"), mc, cfg.antithetic);
  std::vector<PsdMatrix> qs(limit.kernels.begin() + 1, limit.kernels.end());
  ChainRateResult cr = rate_chain(cfg.arch, qs, k1, root.split("rate-chain"), rate_options(cfg));

  Json j;
  j["total"] = cr.total;
  j["total_hex"] = fmt_hex(cr.total);
  j["domain_limited"] = cr.domain_limited;
  Json layers = Json::array();
  for (size_t k = 0; k < cr.per_layer.size(); ++k) {
    Json jl;
    jl["layer"] = k + 1;
    jl["alpha"] = cfg.arch.alphas[k];
    jl["rate"] = cr.per_layer[k].value;
    jl["iterations"] = cr.per_layer[k].iterations;
    jl["domain_limited"] = cr.per_layer[k].domain_limited;
    layers.push_back(jl);
  }
  j["layers"] = layers;
  for (size_t k = 0; k < cr.per_layer.size(); ++k)
    io.summary << "rate-chain: layer " << (k + 1) << " I=" << fmt_short(cr.per_layer[k].value)
               << " alpha=" << fmt_short(cfg.arch.alphas[k]) << "\n";
  io.summary << "rate-chain: total " << fmt_short(cr.total)
             << (cr.domain_limited ? " (domain-limited)" : "") << "\n";
  write_text_file(io.out_dir + "/rate_chain.json", j.dump(2) + "\n");
  io.add("rate_chain.json", "chain rate at the limit chain", "root/rate-chain", cfg.mc_samples);
  io.finish("rate-chain");
  return 0;
}

int cmd_ldp_verify(CommandIo& io) {
  const ExperimentConfig& cfg = io.cfg;
  if (!cfg.has_event) {
    std::cerr << "ldp-verify: config needs an event\n";
    return 2;
  }
  PsdMatrix k1 = input_kernel(cfg.arch, cfg.inputs);
  RngStream root(cfg.seed);
  std::vector<long long> ns = cfg.n_list.empty() ? std::vector<long long>{20, 50, 100} : cfg.n_list;
  long long replicas = cfg.replicas > 0 ? cfg.replicas : 100000;
  auto rows = empirical_rate(cfg.arch, k1, cfg.event, ns, replicas, root.split("ldp-verify"),
                             mc_options(cfg));
  CsvWriter csv({"n", "replicas", "hits", "p_hat", "rate_estimate", "ci_lo", "ci_hi",
                 "undersampled"});
  Json jrows = Json::array();
  for (const auto& r : rows) {
    csv.row({std::to_string(r.n), std::to_string(r.replicas), std::to_string(r.hits),
             fmt_double(r.p_hat), fmt_double(r.rate_estimate), fmt_double(r.ci_lo),
             fmt_double(r.ci_hi), r.undersampled ? "1" : "0"});
    Json jr;
    jr["n"] = r.n;
    jr["replicas"] = r.replicas;
    jr["hits"] = r.hits;
    jr["p_hat_hex"] = fmt_hex(r.p_hat);
    jr["rate_estimate_hex"] = fmt_hex(r.rate_estimate);
    jr["ci_lo_hex"] = fmt_hex(r.ci_lo);
    jr["ci_hi_hex"] = fmt_hex(r.ci_hi);
    jr["undersampled"] = r.undersampled;
    jrows.push_back(jr);
    io.summary << "ldp-verify: n=" << r.n << " -(1/n)log p = " << fmt_short(r.rate_estimate)
               << " ci [" << fmt_short(r.ci_lo) << ", " << fmt_short(r.ci_hi) << "]"
               << (r.undersampled ? " undersampled" : "") << "\n";
  }
  write_text_file(io.out_dir + "/ldp.csv", csv.str());
  write_text_file(io.out_dir + "/ldp.json", jrows.dump(2) + "\n");
  io.add("ldp.csv", "empirical -(1/n) log P with 99% Wilson intervals", "root/ldp-verify",
         replicas);
  io.add("ldp.json", "empirical rate table, hex floats", "root/ldp-verify", replicas);
  io.finish("ldp-verify");
  return 0;
}

int cmd_posterior(CommandIo& io) {
  const ExperimentConfig& cfg = io.cfg;
  if (!cfg.has_observations) {
    std::cerr << "posterior: config needs observations\n";
    return 2;
  }
  PsdMatrix k1 = input_kernel(cfg.arch, cfg.inputs);
  RngStream root(cfg.seed);
  McOptions mc = mc_options(cfg);
  KernelChain limit =
      limit_chain(cfg.arch, k1, cfg.limit_samples, root.split("limit"), mc, cfg.antithetic);
  const Eigen::MatrixXd& klim = limit.kernels.back().mat();

  std::vector<long long> ns = cfg.n_list.empty() ? std::vector<long long>{64, 256, 1024}
                                                 : cfg.n_list;
  long long replicas = cfg.replicas > 0 ? cfg.replicas : 1500;

  // Reference ball: median distance to the limit kernel at the smallest n.
  double ball_radius = 0.0;
  CsvWriter lazy({"n", "prior_prob", "posterior_prob", "ratio", "bound", "ess"});
  Json jout;
  Json per_n = Json::array();
  for (size_t idx = 0; idx < ns.size(); ++idx) {
    long long n = ns[idx];
    RngStream ns_stream = root.split("posterior").split("n-" + std::to_string(n));
    std::vector<PsdMatrix> samples;
    std::vector<double> dists;
    samples.reserve(replicas);
    for (long long r = 0; r < replicas; ++r) {
      KernelChain chain =
          simulate_chain(cfg.arch, k1, n, ns_stream.split(static_cast<std::uint64_t>(r)), mc);
      samples.push_back(chain.kernels.back());
      dists.push_back((chain.kernels.back().mat() - klim).norm());
    }
    if (idx == 0) ball_radius = median(dists);

    std::vector<double> w = posterior_weights(samples, cfg.observations);
    double prior_prob = 0.0, post_prob = 0.0, psi_max_in_ball = 0.0, ess_inv = 0.0;
    for (long long r = 0; r < replicas; ++r) {
      bool in_ball = dists[r] <= ball_radius;
      if (in_ball) {
        prior_prob += 1.0;
        post_prob += w[r];
        psi_max_in_ball = std::max(psi_max_in_ball, psi(samples[r], cfg.observations));
      }
      ess_inv += w[r] * w[r];
    }
    prior_prob /= static_cast<double>(replicas);
    double ratio = std::abs(std::log(post_prob) - std::log(prior_prob)) / static_cast<double>(n);
    double bound = 5.0 * psi_max_in_ball / static_cast<double>(n);
    double ess = ess_inv > 0.0 ? 1.0 / ess_inv : 0.0;
    lazy.row({std::to_string(n), fmt_double(prior_prob), fmt_double(post_prob),
              fmt_double(ratio), fmt_double(bound), fmt_double(ess)});

    WeightedEstimate mean_dist = posterior_expectation(
        [&](const PsdMatrix& k) { return (k.mat() - klim).norm(); }, samples, w);
    WeightedEstimate mean_psi = posterior_expectation(
        [&](const PsdMatrix& k) { return psi(k, cfg.observations); }, samples, w);
    Json jn;
    jn["n"] = n;
    jn["ess"] = ess;
    jn["posterior_mean_dist"] = mean_dist.value;
    jn["posterior_mean_psi"] = mean_psi.value;
    jn["ratio"] = ratio;
    jn["bound"] = bound;
    per_n.push_back(jn);
    io.summary << "posterior: n=" << n << " laziness ratio " << fmt_short(ratio) << " (bound "
               << fmt_short(bound) << "), ess " << fmt_short(ess) << "\n";
  }
  jout["ball_radius"] = ball_radius;
  jout["per_n"] = per_n;
  write_text_file(io.out_dir + "/laziness.csv", lazy.str());
  write_text_file(io.out_dir + "/posterior.json", jout.dump(2) + "\n");
  io.add("laziness.csv", "prior/posterior log-probability ratio proxy", "root/posterior",
         replicas);
  io.add("posterior.json", "posterior summaries per n", "root/posterior", replicas);
  io.finish("posterior");
  return 0;
}

}  // namespace

std::string cli_usage() {
  std::ostringstream os;
  os << "usage: convlab <command> [--config <path> | --preset <name>] [--seed u64]\n"
     << "               [--out dir] [--workers k]\n"
     << "       convlab preset <name> [--out file]\n"
     << "commands: validate chain-sim limit clt-check rate rate-chain ldp-verify posterior\n"
     << "presets:  fcnn-scalar-identity circular1d-relu pool2-tanh zeropad2d-relu\n"
     << "The CONVLAB_OUT_ROOT environment variable prefixes relative output directories.\n";
  return os.str();
}

int run_command(const std::vector<std::string>& args) {
  static const std::vector<std::string> kCommands = {
      "validate", "chain-sim", "limit", "clt-check", "rate", "rate-chain", "ldp-verify",
      "posterior"};
  if (args.empty()) {
    std::cerr << cli_usage();
    return 2;
  }
  const std::string& command = args[0];

  if (command == "preset") {
    if (args.size() < 2) {
      std::cerr << "preset: missing name\n" << cli_usage();
      return 2;
    }
    try {
      ExperimentConfig cfg = preset(args[1]);
      std::string out_file;
      for (size_t i = 2; i + 1 < args.size(); i += 2)
        if (args[i] == "--out") out_file = args[i + 1];
      std::string text = config_to_text(cfg);
      if (out_file.empty()) {
        std::cout << text;
      } else {
        write_text_file(out_file, text);
      }
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "preset: " << e.what() << "\n";
      return 2;
    }
  }

  if (std::find(kCommands.begin(), kCommands.end(), command) == kCommands.end()) {
    std::cerr << "unknown command '" << command << "'\n" << cli_usage();
    return 2;
  }

  std::string config_path, preset_name, out_override, seed_override, workers_override;
  for (size_t i = 1; i < args.size(); ++i) {
    auto need_value = [&](const char* flag) -> std::string {
      if (i + 1 >= args.size()) throw std::runtime_error(std::string(flag) + " needs a value");
      return args[++i];
    };
    try {
      if (args[i] == "--config") {
        config_path = need_value("--config");
      } else if (args[i] == "--preset") {
        preset_name = need_value("--preset");
      } else if (args[i] == "--out") {
        out_override = need_value("--out");
      } else if (args[i] == "--seed") {
        seed_override = need_value("--seed");
      } else if (args[i] == "--workers") {
        workers_override = need_value("--workers");
      } else {
        std::cerr << "unknown option '" << args[i] << "'\n" << cli_usage();
        return 2;
      }
    } catch (const std::exception& e) {
      std::cerr << e.what() << "\n";
      return 2;
    }
  }

  CommandIo io;
  try {
    if (!config_path.empty()) {
      io.cfg = config_from_file(config_path);
    } else if (!preset_name.empty()) {
      io.cfg = preset(preset_name);
    } else {
      std::cerr << command << ": need --config or --preset\n";
      return 2;
    }
    if (!seed_override.empty()) io.cfg.seed = std::stoull(seed_override);
    if (!out_override.empty()) io.cfg.out_dir = out_override;
    if (!workers_override.empty()) io.cfg.workers = std::stoi(workers_override);
  } catch (const std::exception& e) {
    std::cerr << command << ": " << e.what() << "\n";
    return 2;
  }

  std::string out_dir = io.cfg.out_dir;
  if (const char* root = std::getenv("CONVLAB_OUT_ROOT");
      root && *root && !std::filesystem::path(out_dir).is_absolute())
    out_dir = std::string(root) + "/" + out_dir;
  io.out_dir = out_dir;
  std::filesystem::create_directories(out_dir);

  // Structural validity gates every command beyond validate itself.
  if (command != "validate") {
    ValidationReport rep = validate_arch(io.cfg.arch);
    if (!rep.pass()) {
      std::cerr << "invalid architecture:\n" << rep.str();
      write_text_file(io.out_dir + "/report.txt", rep.str());
      return 1;
    }
  }

  try {
    if (command == "validate") return cmd_validate(io);
    if (command == "chain-sim") return cmd_chain_sim(io);
    if (command == "limit") return cmd_limit(io);
    if (command == "clt-check") return cmd_clt_check(io);
    if (command == "rate") return cmd_rate(io);
    if (command == "rate-chain") return cmd_rate_chain(io);
    if (command == "ldp-verify") return cmd_ldp_verify(io);
    if (command == "posterior") return cmd_posterior(io);
  } catch (const std::exception& e) {
    std::cerr << command << ": " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace convlab
