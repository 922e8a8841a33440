#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "timr/tensor.hpp"

namespace timr::phantom {

enum class KineticLabel { Persistent, Plateau, Washout };

const char* label_name(KineticLabel l);
KineticLabel label_from_name(const std::string& name);

// Pixel box, inclusive row0/col0, exclusive row1/col1. Boxes are odd-sized
// and centered on the lesion peak.
struct RoiBox {
  int row0 = 0, col0 = 0, row1 = 0, col1 = 0;
  KineticLabel true_label = KineticLabel::Plateau;
  double true_eps = 0.0;  // percent, realized noise-free enhancement

  int center_row() const { return (row0 + row1 - 1) / 2; }
  int center_col() const { return (col0 + col1 - 1) / 2; }
};

struct CaseTriplet {
  DenseTensor pre, early, late;  // [H, W] planes, raw intensity units
  std::vector<RoiBox> rois;
  std::string case_id;
  uint64_t seed = 0;

  int height() const { return pre.dim(0); }
  int width() const { return pre.dim(1); }
};

struct PhantomConfig {
  int n_cases = 200;
  int height = 128;
  int width = 128;
  int lesions_per_case = 2;
  // Fractions of Persistent / Plateau / Washout lesions; must sum to 1.
  std::array<double, 3> label_mix = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  double noise_sd = 1.5;     // additive Gaussian, intensity units
  double gain_jitter = 0.2;  // per-case multiplicative gain in [1-j, 1+j]
  uint64_t seed = 7;
  // Index of the first generated case; lets train/test splits draw disjoint
  // per-case seeds (case seed = seed ^ case_index).
  int first_case_index = 0;
  std::string id_prefix = "case";

  void validate() const;
};

// Generates cases with known kinetics. Lesion early wash-in is at least +50%
// over pre-contrast and correlates with the kinetic class, so the late
// response is inferable from the early image alone; the realized noise-free
// core enhancement is recorded as true_eps.
std::vector<CaseTriplet> generate_phantom(const PhantomConfig& cfg);

struct Dataset {
  std::vector<CaseTriplet> cases;
  std::vector<std::string> split;  // parallel to cases: "train" or "test"
  std::string config_echo_json;    // verbatim config echo stored in manifest
};

// Directory layout: manifest.json plus cases/<id>/{pre,early,late}.bin in the
// TIMR tensor format and a case.json sidecar with ROIs, labels and seed.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

std::vector<const CaseTriplet*> split_cases(const Dataset& ds, const std::string& split);

}  // namespace timr::phantom
