#include "bitgear/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bitgear {

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::DiracGauss: return "dirac_gauss";
    case Estimator::Ste: return "ste";
    case Estimator::Tanh: return "tanh";
  }
  return "?";
}

std::string to_string(WlScheme s) {
  switch (s) {
    case WlScheme::LinearShifted: return "linear_shifted";
    case WlScheme::Uniform: return "uniform";
    case WlScheme::InvRemaining: return "inv_remaining";
    case WlScheme::Exp: return "exp";
  }
  return "?";
}

std::string to_string(WkScheme s) {
  switch (s) {
    case WkScheme::Geometric: return "geometric";
    case WkScheme::LinearDecay: return "linear_decay";
    case WkScheme::InverseRank: return "inverse_rank";
    case WkScheme::ExpRank: return "exp_rank";
  }
  return "?";
}

std::string to_string(NormMode m) {
  return m == NormMode::Symmetric ? "symmetric" : "left";
}

Estimator estimator_from_string(const std::string& s) {
  if (s == "dirac_gauss") return Estimator::DiracGauss;
  if (s == "ste") return Estimator::Ste;
  if (s == "tanh") return Estimator::Tanh;
  throw std::invalid_argument("unknown estimator: " + s);
}

WlScheme wl_scheme_from_string(const std::string& s) {
  if (s == "linear_shifted") return WlScheme::LinearShifted;
  if (s == "uniform") return WlScheme::Uniform;
  if (s == "inv_remaining") return WlScheme::InvRemaining;
  if (s == "exp") return WlScheme::Exp;
  throw std::invalid_argument("unknown wl_scheme: " + s);
}

WkScheme wk_scheme_from_string(const std::string& s) {
  if (s == "geometric") return WkScheme::Geometric;
  if (s == "linear_decay") return WkScheme::LinearDecay;
  if (s == "inverse_rank") return WkScheme::InverseRank;
  if (s == "exp_rank") return WkScheme::ExpRank;
  throw std::invalid_argument("unknown wk_scheme: " + s);
}

NormMode norm_mode_from_string(const std::string& s) {
  if (s == "symmetric") return NormMode::Symmetric;
  if (s == "left") return NormMode::Left;
  throw std::invalid_argument("unknown norm_mode: " + s);
}

void TrainingConfig::validate() const {
  if (d == 0) throw std::invalid_argument("d must be positive");
  if (batch_size == 0) throw std::invalid_argument("B must be positive");
  if (eta <= 0.0) throw std::invalid_argument("eta must be positive");
  if (lambda < 0.0) throw std::invalid_argument("lambda must be nonnegative");
  if (lambda2 < 0.0) throw std::invalid_argument("lambda2 must be nonnegative");
  if (gamma <= 0.0) throw std::invalid_argument("gamma must be positive");
  if (top_r == 0) throw std::invalid_argument("R must be positive");
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  T out;
  is >> out;
  if (is.fail() || !is.eof())
    throw std::invalid_argument("bad value for " + key + ": " + value);
  return out;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  std::size_t e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

}  // namespace

void apply_config_key(TrainingConfig& cfg, const std::string& key,
                      const std::string& value) {
  if (key == "d") cfg.d = parse_number<std::uint32_t>(key, value);
  else if (key == "L") cfg.layers = parse_number<std::uint32_t>(key, value);
  else if (key == "B") cfg.batch_size = parse_number<std::uint32_t>(key, value);
  else if (key == "eta") cfg.eta = parse_number<double>(key, value);
  else if (key == "lambda") cfg.lambda = parse_number<double>(key, value);
  else if (key == "lambda1") cfg.lambda1 = parse_number<double>(key, value);
  else if (key == "lambda2") cfg.lambda2 = parse_number<double>(key, value);
  else if (key == "gamma") cfg.gamma = parse_number<double>(key, value);
  else if (key == "R") cfg.top_r = parse_number<std::uint32_t>(key, value);
  else if (key == "epochs_teacher")
    cfg.epochs_teacher = parse_number<std::uint32_t>(key, value);
  else if (key == "epochs_student")
    cfg.epochs_student = parse_number<std::uint32_t>(key, value);
  else if (key == "estimator") cfg.estimator = estimator_from_string(value);
  else if (key == "wl_scheme") cfg.wl_scheme = wl_scheme_from_string(value);
  else if (key == "wk_scheme") cfg.wk_scheme = wk_scheme_from_string(value);
  else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "norm_mode") cfg.norm_mode = norm_mode_from_string(value);
  else throw std::invalid_argument("unknown config key: " + key);
}

TrainingConfig parse_config_text(std::string_view text, TrainingConfig base) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty() || value.empty())
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": empty key or value");
    apply_config_key(base, key, value);
  }
  base.validate();
  return base;
}

TrainingConfig parse_config_file(const std::string& path,
                                 TrainingConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), base);
}

std::string config_to_text(const TrainingConfig& cfg) {
  std::ostringstream os;
  os << "d = " << cfg.d << "\n"
     << "L = " << cfg.layers << "\n"
     << "B = " << cfg.batch_size << "\n"
     << "eta = " << cfg.eta << "\n"
     << "lambda = " << cfg.lambda << "\n"
     << "lambda1 = " << cfg.lambda1 << "\n"
     << "lambda2 = " << cfg.lambda2 << "\n"
     << "gamma = " << cfg.gamma << "\n"
     << "R = " << cfg.top_r << "\n"
     << "epochs_teacher = " << cfg.epochs_teacher << "\n"
     << "epochs_student = " << cfg.epochs_student << "\n"
     << "estimator = " << to_string(cfg.estimator) << "\n"
     << "wl_scheme = " << to_string(cfg.wl_scheme) << "\n"
     << "wk_scheme = " << to_string(cfg.wk_scheme) << "\n"
     << "seed = " << cfg.seed << "\n"
     << "norm_mode = " << to_string(cfg.norm_mode) << "\n";
  return os.str();
}

}  // namespace bitgear
