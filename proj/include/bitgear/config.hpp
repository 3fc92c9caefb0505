#pragma once

#include <cstdint>
#include <string>

#include "bitgear/graph.hpp"

namespace bitgear {

enum class Estimator { DiracGauss, Ste, Tanh };
enum class WlScheme { LinearShifted, Uniform, InvRemaining, Exp };
enum class WkScheme { Geometric, LinearDecay, InverseRank, ExpRank };

std::string to_string(Estimator e);
std::string to_string(WlScheme s);
std::string to_string(WkScheme s);
std::string to_string(NormMode m);
Estimator estimator_from_string(const std::string& s);
WlScheme wl_scheme_from_string(const std::string& s);
WkScheme wk_scheme_from_string(const std::string& s);
NormMode norm_mode_from_string(const std::string& s);

struct TrainingConfig {
  std::uint32_t d = 256;
  std::uint32_t layers = 2;        // L
  std::uint32_t batch_size = 2048; // B
  double eta = 1e-3;
  double lambda = 1e-4;
  double lambda1 = 1.0;
  double lambda2 = 0.1;
  double gamma = 1.0;
  std::uint32_t top_r = 100;       // R pseudo-positives per layer
  std::uint32_t epochs_teacher = 100;
  std::uint32_t epochs_student = 100;
  Estimator estimator = Estimator::DiracGauss;
  WlScheme wl_scheme = WlScheme::LinearShifted;
  WkScheme wk_scheme = WkScheme::Geometric;
  std::uint64_t seed = 42;
  NormMode norm_mode = NormMode::Symmetric;

  void validate() const;  // throws std::invalid_argument
};

// Line-oriented `key = value` text; '#' lines and blanks ignored; unknown
// keys are errors. Keys use the short spec names: d, L, B, eta, lambda,
// lambda1, lambda2, gamma, R, epochs_teacher, epochs_student, estimator,
// wl_scheme, wk_scheme, seed, norm_mode.
TrainingConfig parse_config_file(const std::string& path,
                                 TrainingConfig base = {});
TrainingConfig parse_config_text(std::string_view text,
                                 TrainingConfig base = {});
void apply_config_key(TrainingConfig& cfg, const std::string& key,
                      const std::string& value);
std::string config_to_text(const TrainingConfig& cfg);

}  // namespace bitgear
