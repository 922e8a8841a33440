#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "timr/phantom.hpp"
#include "timr/tensor.hpp"

namespace timr::eval {

using phantom::KineticLabel;
using phantom::RoiBox;

enum class RegionSource { AnnotatedROI, Unannotated };

// Mean intensities of one 3x3 patch across the four planes, raw units.
struct RegionSample {
  int center_row = 0, center_col = 0;
  double mean_pre = 0, mean_early = 0, mean_late_real = 0, mean_late_gen = 0;
  RegionSource source = RegionSource::Unannotated;
  int roi_index = -1;
};

// Patch centered on the brightest early-phase pixel inside the box
// (row-major tie-break), clamped so the 3x3 patch stays inside the image.
RegionSample extract_roi_patch(const RoiBox& roi, const DenseTensor& pre,
                               const DenseTensor& early, const DenseTensor& late_real,
                               const DenseTensor& late_gen);

// Tissue candidates: pre-contrast above its 60th percentile, at least 5 px
// from every annotated box and from the border; k centers drawn without
// replacement by seeded uniform sampling. Returns fewer than k with
// `short_sample` set when the mask cannot supply k centers.
std::vector<RegionSample> sample_unannotated(const DenseTensor& pre,
                                             const DenseTensor& early,
                                             const DenseTensor& late_real,
                                             const DenseTensor& late_gen,
                                             const std::vector<RoiBox>& rois, int k,
                                             uint64_t seed, bool* short_sample);

enum class LateKind { Real, Generated };
// Percent enhancement of the late response over the early one.
double eps_percent(const RegionSample& r, LateKind which);

// Persistent above +10%, Washout below -10%, Plateau inside (inclusive).
KineticLabel classify(double eps_value);

struct CpScore {
  double macro_f1 = 0;  // absent classes excluded from the average
  double micro_f1 = 0;
  int n = 0;
};
CpScore cp_score(const std::vector<KineticLabel>& real_labels,
                 const std::vector<KineticLabel>& gen_labels);

// Mean absolute difference of paired real/generated enhancements, in
// percentage points.
double ed(const std::vector<std::pair<double, double>>& eps_pairs);

struct ImageMetrics {
  double mae = 0;
  double ssim = 0;
  double psnr = 0;           // +inf sentinel when MSE is 0
  bool psnr_infinite = false;
  bool degenerate = false;   // zero dynamic range or box too small for SSIM
};
// MAE, mean local SSIM (11x11 Gaussian window, sigma 1.5, valid positions
// only) and PSNR, with the dynamic range L taken from the real plane. The
// optional box restricts all three to the ROI.
ImageMetrics image_metrics(const DenseTensor& real, const DenseTensor& gen,
                           const RoiBox* roi = nullptr);

struct WilcoxonResult {
  double w_plus = 0, w_minus = 0;
  double statistic = 0;  // min(w_plus, w_minus)
  double p_value = 1.0;
  int n_used = 0;        // pairs remaining after dropping zero differences
  bool rejected = false;
  bool no_evidence = false;  // all differences were exactly zero
  std::string method;        // "exact" (n <= 20) or "normal"
};
// Two-sided signed-rank test: zero differences dropped, ties get average
// ranks, exact sign-pattern distribution for n <= 20, normal approximation
// with tie and continuity corrections above.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a,
                                    const std::vector<double>& b,
                                    double alpha = 0.05);

DenseTensor heatmap(const DenseTensor& real, const DenseTensor& gen);
// 8-bit binary PGM scaled over [0, scale_max]; all heatmaps of one report
// share the same scale.
void write_pgm(const std::filesystem::path& path, const DenseTensor& plane,
               double scale_max);
DenseTensor read_pgm(const std::filesystem::path& path);  // for round-trip checks

struct EvalConfig {
  int unannotated_per_case = 3;
  uint64_t seed = 97;
  double alpha = 0.05;
  // Metrics are computed in raw units after inverse normalization. This flag
  // (ablation only) recomputes the TI metrics on per-image min-max normalized
  // planes instead, reproducing the distortion conventional normalization
  // introduces.
  bool normalized_domain = false;
};

struct RegionRow {
  std::string case_id;
  int region_id = 0;
  RegionSource source = RegionSource::Unannotated;
  double eps_real = 0, eps_gen = 0;
  KineticLabel label_real = KineticLabel::Plateau;
  KineticLabel label_gen = KineticLabel::Plateau;
  double mae = 0, ssim = 0, psnr = 0;
  bool psnr_infinite = false;
};

struct EvalReport {
  std::vector<RegionRow> rows;
  CpScore cp;
  double ed_r = 0, ed_ur = 0;
  double mae_full = 0, ssim_full = 0, psnr_full = 0;
  double mae_roi = 0, ssim_roi = 0, psnr_roi = 0;
  int psnr_full_infinite = 0, psnr_roi_infinite = 0;
  WilcoxonResult wilcoxon_unannotated;
  std::vector<std::pair<std::string, WilcoxonResult>> wilcoxon_by_class;
  int n_cases = 0;
};

// Evaluates generated planes against a dataset split and writes report.csv,
// report.json and per-case heatmaps (TIMR + PGM on a shared scale) under
// out_dir.
EvalReport evaluate(const std::filesystem::path& dataset_dir,
                    const std::filesystem::path& gen_dir, const std::string& split,
                    const std::filesystem::path& out_dir, const EvalConfig& cfg);

std::string report_to_json(const EvalReport& rep);

}  // namespace timr::eval
