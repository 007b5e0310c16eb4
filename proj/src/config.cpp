#include "convlab/config.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace convlab {

namespace {

using Json = nlohmann::json;

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

using Section = std::map<std::string, std::string>;

std::map<std::string, Section> parse_sections(const std::string& text) {
  std::map<std::string, Section> sections;
  std::string current = "";
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      current = trim(line.substr(1, line.size() - 2));
      sections[current];
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config parse error: expected key = value, got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    sections[current][key] = value;
  }
  return sections;
}

bool has_key(const std::map<std::string, Section>& s, const std::string& sec,
             const std::string& key) {
  auto it = s.find(sec);
  return it != s.end() && it->second.count(key) > 0;
}

std::string get_str(const std::map<std::string, Section>& s, const std::string& sec,
                    const std::string& key, const std::string& fallback = "") {
  auto it = s.find(sec);
  if (it == s.end()) return fallback;
  auto kt = it->second.find(key);
  if (kt == it->second.end()) return fallback;
  return kt->second;
}

long long to_ll(const std::string& s) { return std::stoll(s); }

std::vector<double> to_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& t : split_ws(s)) out.push_back(parse_double(t));
  return out;
}

std::vector<long long> to_lls(const std::string& s) {
  std::vector<long long> out;
  for (const auto& t : split_ws(s)) out.push_back(to_ll(t));
  return out;
}

std::vector<int> to_ints(const std::string& s) {
  std::vector<int> out;
  for (const auto& t : split_ws(s)) out.push_back(static_cast<int>(to_ll(t)));
  return out;
}

std::string join_doubles(const std::vector<double>& xs) {
  std::string out;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) out += " ";
    out += fmt_double(xs[i]);
  }
  return out;
}

template <typename T>
std::string join_ints(const std::vector<T>& xs) {
  std::string out;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) out += " ";
    out += std::to_string(xs[i]);
  }
  return out;
}

std::string extractor_to_text(const Extractor& e) {
  switch (e.kind) {
    case Extractor::Kind::Circular1D:
      return "circular1d " + std::to_string(e.halfwidth);
    case Extractor::Kind::Circular1DPool2:
      return "circular1d_pool2";
    case Extractor::Kind::ZeroPad2D3x3:
      return "zeropad2d " + std::to_string(e.grid_extent);
    case Extractor::Kind::FullyConnected:
      return "fully_connected";
  }
  return "fully_connected";
}

Extractor extractor_from_text(const std::string& s) {
  auto toks = split_ws(s);
  if (toks.empty()) throw std::runtime_error("empty extractor spec");
  if (toks[0] == "circular1d") {
    if (toks.size() != 2) throw std::runtime_error("circular1d needs a halfwidth");
    return Extractor::circular1d(static_cast<int>(to_ll(toks[1])));
  }
  if (toks[0] == "circular1d_pool2") return Extractor::circular1d_pool2();
  if (toks[0] == "zeropad2d") {
    if (toks.size() != 2) throw std::runtime_error("zeropad2d needs a grid extent");
    return Extractor::zeropad2d(static_cast<int>(to_ll(toks[1])));
  }
  if (toks[0] == "fully_connected") return Extractor::fully_connected();
  throw std::runtime_error("unknown extractor '" + toks[0] + "'");
}

std::string event_to_text(const EventSpec& e) {
  std::string out = "K" + std::to_string(e.kernel_index) + " ";
  if (e.stat == EventSpec::Stat::Entry)
    out += "entry " + std::to_string(e.row + 1) + " " + std::to_string(e.col + 1) + " ";
  else
    out += "fro ";
  out += (e.greater ? "ge " : "le ");
  out += fmt_double(e.level);
  return out;
}

EventSpec event_from_text(const std::string& s) {
  auto toks = split_ws(s);
  if (toks.size() < 4 || toks[0].size() < 2 || toks[0][0] != 'K')
    throw std::runtime_error("bad event spec '" + s + "'");
  EventSpec e;
  e.kernel_index = static_cast<int>(to_ll(toks[0].substr(1)));
  size_t at = 1;
  if (toks[at] == "entry") {
    if (toks.size() != 6) throw std::runtime_error("entry event needs row, col, dir, level");
    e.stat = EventSpec::Stat::Entry;
    e.row = static_cast<int>(to_ll(toks[2])) - 1;  // file indices are 1-based
    e.col = static_cast<int>(to_ll(toks[3])) - 1;
    at = 4;
  } else if (toks[at] == "fro") {
    if (toks.size() != 4) throw std::runtime_error("fro event needs dir, level");
    e.stat = EventSpec::Stat::FroNorm;
    at = 2;
  } else {
    throw std::runtime_error("unknown event statistic '" + toks[at] + "'");
  }
  e.greater = (toks[at] == "ge");
  if (!e.greater && toks[at] != "le") throw std::runtime_error("event direction must be ge|le");
  e.level = parse_double(toks[at + 1]);
  return e;
}

std::vector<double> batch_values(const InputBatch& b) {
  std::vector<double> out;
  for (const auto& ch : b.channels)
    for (int i = 0; i < ch.rows(); ++i)
      for (int mu = 0; mu < ch.cols(); ++mu) out.push_back(ch(i, mu));
  return out;
}

InputBatch batch_from_values(const std::vector<double>& vals, int c0, int n0, int p) {
  if (static_cast<long long>(vals.size()) != static_cast<long long>(c0) * n0 * p)
    throw std::runtime_error("inputs: expected C0*N0*P values");
  InputBatch b = InputBatch::zeros(c0, n0, p);
  size_t k = 0;
  for (int c = 0; c < c0; ++c)
    for (int i = 0; i < n0; ++i)
      for (int mu = 0; mu < p; ++mu) b.channels[c](i, mu) = vals[k++];
  return b;
}

Eigen::VectorXd obs_from_values(const std::vector<double>& vals, int channels, int n, int p) {
  if (static_cast<long long>(vals.size()) != static_cast<long long>(channels) * n * p)
    throw std::runtime_error("observations: expected C*N*P values");
  Eigen::VectorXd y(vals.size());
  size_t k = 0;
  for (int c = 0; c < channels; ++c)
    for (int i = 0; i < n; ++i)
      for (int mu = 0; mu < p; ++mu) y((static_cast<long long>(c) * n + i) * p + mu) = vals[k++];
  return y;
}

}  // namespace

std::string fmt_double(double v) {
  char buf[64];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

std::string fmt_hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

double parse_double(const std::string& token) {
  const char* begin = token.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end == begin) throw std::runtime_error("cannot parse number '" + token + "'");
  return v;
}

std::string arch_to_text(const ArchSpec& spec) {
  std::ostringstream os;
  os << "[arch]\n";
  os << "hidden_layers = " << spec.hidden_layers << "\n";
  os << "spatial = " << join_ints(spec.spatial) << "\n";
  os << "input_channels = " << spec.input_channels << "\n";
  os << "output_channels = " << spec.output_channels << "\n";
  os << "inputs = " << spec.num_inputs << "\n";
  os << "lambda = " << join_doubles(spec.lambdas) << "\n";
  if (!spec.alphas.empty()) os << "alpha = " << join_doubles(spec.alphas) << "\n";
  os << "activation = " << spec.activation.name() << "\n";
  if (spec.activation.kind == Activation::Kind::Table) {
    os << "activation_x = " << join_doubles(spec.activation.table_x) << "\n";
    os << "activation_y = " << join_doubles(spec.activation.table_y) << "\n";
  }
  os << "k1_normalizer = "
     << (spec.k1_normalizer == ArchSpec::K1Normalizer::Layer0 ? "layer0" : "layer1") << "\n";
  for (size_t k = 0; k < spec.extractors.size(); ++k)
    os << "extractor." << k << " = " << extractor_to_text(spec.extractors[k]) << "\n";
  return os.str();
}

namespace {

ArchSpec arch_from_sections(const std::map<std::string, Section>& sec) {
  ArchSpec s;
  s.hidden_layers = static_cast<int>(to_ll(get_str(sec, "arch", "hidden_layers", "1")));
  s.spatial = to_ints(get_str(sec, "arch", "spatial", "1 1"));
  s.input_channels = static_cast<int>(to_ll(get_str(sec, "arch", "input_channels", "1")));
  s.output_channels = static_cast<int>(to_ll(get_str(sec, "arch", "output_channels", "1")));
  s.num_inputs = static_cast<int>(to_ll(get_str(sec, "arch", "inputs", "1")));
  s.lambdas = to_doubles(get_str(sec, "arch", "lambda", "1"));
  s.alphas = to_doubles(get_str(sec, "arch", "alpha", ""));
  std::string act = get_str(sec, "arch", "activation", "identity");
  if (act == "identity") {
    s.activation = Activation::identity();
  } else if (act == "relu") {
    s.activation = Activation::relu();
  } else if (act == "tanh") {
    s.activation = Activation::tanh_fn();
  } else if (act == "table") {
    s.activation = Activation::table(to_doubles(get_str(sec, "arch", "activation_x")),
                                     to_doubles(get_str(sec, "arch", "activation_y")));
  } else {
    throw std::runtime_error("unknown activation '" + act + "'");
  }
  std::string norm = get_str(sec, "arch", "k1_normalizer", "layer0");
  if (norm == "layer0") {
    s.k1_normalizer = ArchSpec::K1Normalizer::Layer0;
  } else if (norm == "layer1") {
    s.k1_normalizer = ArchSpec::K1Normalizer::Layer1;
  } else {
    throw std::runtime_error("k1_normalizer must be layer0|layer1");
  }
  for (int k = 0; k <= s.hidden_layers; ++k) {
    std::string key = "extractor." + std::to_string(k);
    if (!has_key(sec, "arch", key))
      throw std::runtime_error("missing " + key + " in [arch]");
    s.extractors.push_back(extractor_from_text(get_str(sec, "arch", key)));
  }
  s.rebuild_masks();
  return s;
}

}  // namespace

ArchSpec arch_from_text(const std::string& text) {
  return arch_from_sections(parse_sections(text));
}

std::string config_to_text(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "seed = " << cfg.seed << "\n";
  os << "out = " << cfg.out_dir << "\n";
  os << "workers = " << cfg.workers << "\n\n";
  os << arch_to_text(cfg.arch) << "\n";
  os << "[experiment]\n";
  if (!cfg.n_list.empty()) os << "n_list = " << join_ints(cfg.n_list) << "\n";
  if (cfg.replicas > 0) os << "replicas = " << cfg.replicas << "\n";
  os << "mc_samples = " << cfg.mc_samples << "\n";
  os << "limit_samples = " << cfg.limit_samples << "\n";
  if (cfg.antithetic) os << "antithetic = 1\n";
  os << "clt_n = " << cfg.clt_n << "\n";
  os << "ks_replicas = " << cfg.ks_replicas << "\n";
  os << "energy_replicas = " << cfg.energy_replicas << "\n";
  os << "energy_n = " << cfg.energy_n << "\n";
  os << "energy_permutations = " << cfg.energy_permutations << "\n";
  if (!cfg.q_list.empty()) os << "q_list = " << join_doubles(cfg.q_list) << "\n";
  os << "rate_layer = " << cfg.rate_layer_index << "\n";
  os << "grad_tol = " << fmt_double(cfg.grad_tol) << "\n";
  if (cfg.has_event) os << "event = " << event_to_text(cfg.event) << "\n";
  os << "\n[inputs]\n";
  os << "values = " << join_doubles(batch_values(cfg.inputs)) << "\n";
  if (cfg.has_observations) {
    os << "\n[observations]\n";
    os << "beta = " << fmt_double(cfg.observations.beta) << "\n";
    std::vector<double> vals(cfg.observations.y.data(),
                             cfg.observations.y.data() + cfg.observations.y.size());
    os << "values = " << join_doubles(vals) << "\n";
  }
  return os.str();
}

ExperimentConfig config_from_text(const std::string& text) {
  auto sec = parse_sections(text);
  ExperimentConfig cfg;
  cfg.raw_text = text;
  cfg.arch = arch_from_sections(sec);
  if (has_key(sec, "", "seed")) cfg.seed = std::stoull(get_str(sec, "", "seed"));
  cfg.out_dir = get_str(sec, "", "out", "out");
  if (has_key(sec, "", "workers")) cfg.workers = static_cast<int>(to_ll(get_str(sec, "", "workers")));

  if (has_key(sec, "experiment", "n_list")) cfg.n_list = to_lls(get_str(sec, "experiment", "n_list"));
  if (has_key(sec, "experiment", "replicas"))
    cfg.replicas = to_ll(get_str(sec, "experiment", "replicas"));
  if (has_key(sec, "experiment", "mc_samples"))
    cfg.mc_samples = to_ll(get_str(sec, "experiment", "mc_samples"));
  if (has_key(sec, "experiment", "limit_samples"))
    cfg.limit_samples = to_ll(get_str(sec, "experiment", "limit_samples"));
  if (has_key(sec, "experiment", "antithetic"))
    cfg.antithetic = to_ll(get_str(sec, "experiment", "antithetic")) != 0;
  if (has_key(sec, "experiment", "clt_n")) cfg.clt_n = to_ll(get_str(sec, "experiment", "clt_n"));
  if (has_key(sec, "experiment", "ks_replicas"))
    cfg.ks_replicas = to_ll(get_str(sec, "experiment", "ks_replicas"));
  if (has_key(sec, "experiment", "energy_replicas"))
    cfg.energy_replicas = to_ll(get_str(sec, "experiment", "energy_replicas"));
  if (has_key(sec, "experiment", "energy_n"))
    cfg.energy_n = to_ll(get_str(sec, "experiment", "energy_n"));
  if (has_key(sec, "experiment", "energy_permutations"))
    cfg.energy_permutations = static_cast<int>(to_ll(get_str(sec, "experiment", "energy_permutations")));
  if (has_key(sec, "experiment", "q_list"))
    cfg.q_list = to_doubles(get_str(sec, "experiment", "q_list"));
  if (has_key(sec, "experiment", "rate_layer"))
    cfg.rate_layer_index = static_cast<int>(to_ll(get_str(sec, "experiment", "rate_layer")));
  if (has_key(sec, "experiment", "grad_tol"))
    cfg.grad_tol = parse_double(get_str(sec, "experiment", "grad_tol"));
  if (has_key(sec, "experiment", "event")) {
    cfg.event = event_from_text(get_str(sec, "experiment", "event"));
    cfg.has_event = true;
  }

  const int c0 = cfg.arch.input_channels;
  const int n0 = cfg.arch.spatial.empty() ? 1 : cfg.arch.spatial[0];
  const int p = cfg.arch.num_inputs;
  if (has_key(sec, "inputs", "values")) {
    cfg.inputs = batch_from_values(to_doubles(get_str(sec, "inputs", "values")), c0, n0, p);
  } else if (has_key(sec, "inputs", "file")) {
    cfg.inputs = input_batch_from_csv(read_text_file(get_str(sec, "inputs", "file")), c0, n0, p);
  } else {
    cfg.inputs = InputBatch::zeros(c0, n0, p);
  }

  if (sec.count("observations")) {
    const int ch = cfg.arch.output_channels;
    const int nl = cfg.arch.spatial.back();
    double beta = parse_double(get_str(sec, "observations", "beta", "1"));
    if (has_key(sec, "observations", "values")) {
      cfg.observations.y = obs_from_values(to_doubles(get_str(sec, "observations", "values")),
                                           ch, nl, p);
    } else if (has_key(sec, "observations", "file")) {
      Observations o = observations_from_csv(read_text_file(get_str(sec, "observations", "file")),
                                             ch, nl, p, beta);
      cfg.observations.y = o.y;
    } else {
      throw std::runtime_error("[observations] needs values or file");
    }
    cfg.observations.channels = ch;
    cfg.observations.beta = beta;
    cfg.has_observations = true;
  }
  return cfg;
}

ExperimentConfig config_from_file(const std::string& path) {
  return config_from_text(read_text_file(path));
}

std::vector<std::string> preset_names() {
  return {"fcnn-scalar-identity", "circular1d-relu", "pool2-tanh", "zeropad2d-relu"};
}

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig cfg;
  if (name == "fcnn-scalar-identity") {
    cfg.arch = make_arch(1, {1, 1, 1},
                         {Extractor::fully_connected(), Extractor::fully_connected()},
                         {1.0, 1.0}, {1.0}, Activation::identity(), 1, 1, 1);
    cfg.inputs = batch_from_values({1.0}, 1, 1, 1);
    cfg.observations.y = obs_from_values({2.0}, 1, 1, 1);
    cfg.n_list = {20, 50, 100};
    cfg.replicas = 100000;
    cfg.q_list = {0.25, 0.5, 1.5, 2.0, 4.0};
    cfg.event = EventSpec{2, EventSpec::Stat::Entry, 0, 0, true, 1.5};
    cfg.has_event = true;
  } else if (name == "circular1d-relu") {
    cfg.arch = make_arch(2, {5, 5, 5, 5},
                         {Extractor::circular1d(1), Extractor::circular1d(1),
                          Extractor::circular1d(1)},
                         {1.0, 1.0, 1.0}, {1.0, 1.0}, Activation::relu(), 1, 1, 1);
    cfg.inputs = batch_from_values({0.8, -0.4, 1.2, 0.1, -0.9}, 1, 5, 1);
    cfg.observations.y = obs_from_values({0.5, 0.5, 0.5, 0.5, 0.5}, 1, 5, 1);
    cfg.n_list = {64, 256, 1024};
    cfg.replicas = 50;
    cfg.q_list = {1.0, 1.5};
    cfg.event = EventSpec{2, EventSpec::Stat::FroNorm, 0, 0, true, 1.0};
    cfg.has_event = true;
  } else if (name == "pool2-tanh") {
    cfg.arch = make_arch(1, {6, 6, 3},
                         {Extractor::circular1d(1), Extractor::circular1d_pool2()},
                         {1.0, 1.0}, {1.0}, Activation::tanh_fn(), 1, 1, 1);
    cfg.inputs = batch_from_values({0.9, -0.3, 0.5, 1.1, -0.7, 0.2}, 1, 6, 1);
    cfg.observations.y = obs_from_values({0.3, 0.3, 0.3}, 1, 3, 1);
    cfg.n_list = {64, 256, 1024};
    cfg.replicas = 50;
    cfg.q_list = {1.0, 1.5};
    cfg.event = EventSpec{2, EventSpec::Stat::FroNorm, 0, 0, true, 0.5};
    cfg.has_event = true;
  } else if (name == "zeropad2d-relu") {
    cfg.arch = make_arch(1, {9, 9, 9},
                         {Extractor::zeropad2d(2), Extractor::zeropad2d(2)},
                         {1.0, 1.0}, {1.0}, Activation::relu(), 1, 1, 1);
    cfg.inputs = batch_from_values({0.7, -0.2, 0.4, 1.0, 0.3, -0.8, -0.5, 0.6, 0.1}, 1, 9, 1);
    cfg.observations.y =
        obs_from_values({0.4, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4}, 1, 9, 1);
    cfg.n_list = {64, 256, 1024};
    cfg.replicas = 50;
    cfg.q_list = {1.0, 1.5};
    cfg.event = EventSpec{2, EventSpec::Stat::FroNorm, 0, 0, true, 1.0};
    cfg.has_event = true;
  } else {
    throw std::runtime_error("unknown preset '" + name + "'");
  }
  cfg.observations.channels = cfg.arch.output_channels;
  cfg.observations.beta = 1.0;
  cfg.has_observations = true;
  cfg.seed = 42;
  cfg.raw_text = config_to_text(cfg);
  return cfg;
}

namespace {

std::vector<std::array<double, 4>> parse_csv_rows(const std::string& text) {
  std::vector<std::array<double, 4>> rows;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty()) continue;
    for (char& c : line)
      if (c == ',') c = ' ';
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (!std::isdigit(static_cast<unsigned char>(toks[0][0])) && toks[0][0] != '-' &&
        toks[0][0] != '+')
      continue;  // header
    if (toks.size() != 4) throw std::runtime_error("csv: expected 4 columns c,i,mu,value");
    rows.push_back({parse_double(toks[0]), parse_double(toks[1]), parse_double(toks[2]),
                    parse_double(toks[3])});
  }
  return rows;
}

}  // namespace

InputBatch input_batch_from_csv(const std::string& text, int c0, int n0, int p) {
  InputBatch b = InputBatch::zeros(c0, n0, p);
  for (const auto& r : parse_csv_rows(text)) {
    int c = static_cast<int>(r[0]) - 1;
    int i = static_cast<int>(r[1]) - 1;
    int mu = static_cast<int>(r[2]) - 1;
    if (c < 0 || c >= c0 || i < 0 || i >= n0 || mu < 0 || mu >= p)
      throw std::runtime_error("csv: index out of range");
    b.channels[c](i, mu) = r[3];
  }
  return b;
}

Observations observations_from_csv(const std::string& text, int channels, int n, int p,
                                   double beta) {
  Observations o;
  o.channels = channels;
  o.beta = beta;
  o.y = Eigen::VectorXd::Zero(static_cast<long long>(channels) * n * p);
  for (const auto& r : parse_csv_rows(text)) {
    int c = static_cast<int>(r[0]) - 1;
    int i = static_cast<int>(r[1]) - 1;
    int mu = static_cast<int>(r[2]) - 1;
    if (c < 0 || c >= channels || i < 0 || i >= n || mu < 0 || mu >= p)
      throw std::runtime_error("csv: index out of range");
    o.y((static_cast<long long>(c) * n + i) * p + mu) = r[3];
  }
  return o;
}

std::string chain_to_json(const KernelChain& chain) {
  Json j;
  j["provenance"] = chain.provenance == KernelChain::Provenance::Empirical ? "empirical" : "limit";
  j["scale"] = chain.scale;
  Json layers = Json::array();
  for (int k = 0; k < chain.layers(); ++k) {
    Json layer;
    layer["index"] = k + 1;
    const Eigen::MatrixXd& m = chain.kernels[k].mat();
    layer["dim"] = m.rows();
    Json entries = Json::array();
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c) entries.push_back(fmt_hex(m(r, c)));
    layer["entries"] = entries;
    if (!chain.std_errors.empty()) {
      const Eigen::MatrixXd& se = chain.std_errors[k];
      Json ses = Json::array();
      for (int r = 0; r < se.rows(); ++r)
        for (int c = 0; c < se.cols(); ++c) ses.push_back(fmt_hex(se(r, c)));
      layer["std_error"] = ses;
    }
    layers.push_back(layer);
  }
  j["layers"] = layers;
  return j.dump(2);
}

KernelChain chain_from_json(const std::string& text) {
  Json j = Json::parse(text);
  KernelChain chain;
  chain.provenance = j.at("provenance") == "empirical" ? KernelChain::Provenance::Empirical
                                                       : KernelChain::Provenance::Limit;
  chain.scale = j.at("scale").get<long long>();
  for (const auto& layer : j.at("layers")) {
    int d = layer.at("dim").get<int>();
    Eigen::MatrixXd m(d, d);
    const auto& entries = layer.at("entries");
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c)
        m(r, c) = parse_double(entries.at(r * d + c).get<std::string>());
    chain.kernels.push_back(PsdMatrix(m));
    if (layer.contains("std_error")) {
      Eigen::MatrixXd se(d, d);
      const auto& ses = layer.at("std_error");
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c)
          se(r, c) = parse_double(ses.at(r * d + c).get<std::string>());
      chain.std_errors.push_back(se);
    }
  }
  return chain;
}

void write_manifest(const std::string& dir, const std::string& command,
                    const ExperimentConfig& cfg, double wall_seconds,
                    const std::vector<ManifestEntry>& entries) {
  Json j;
  j["tool"] = "convlab 0.1.0";
  j["command"] = command;
  j["seed"] = cfg.seed;
  j["workers"] = cfg.workers;
  j["wall_seconds"] = wall_seconds;
  j["config"] = cfg.raw_text.empty() ? config_to_text(cfg) : cfg.raw_text;
  Json results = Json::array();
  for (const auto& e : entries) {
    Json r;
    r["file"] = e.file;
    r["description"] = e.description;
    r["seed_path"] = e.seed_path;
    r["mc_samples"] = e.mc_samples;
    results.push_back(r);
  }
  j["results"] = results;
  write_text_file(dir + "/manifest.json", j.dump(2) + "\n");
}

void write_text_file(const std::string& path, const std::string& content) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << content;
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace convlab
