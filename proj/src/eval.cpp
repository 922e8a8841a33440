#include "timr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "timr/io.hpp"
#include "timr/prep.hpp"
#include "timr/rng.hpp"

namespace timr::eval {

using nlohmann::json;

namespace {

double patch_mean(const DenseTensor& plane, int r, int c) {
  double acc = 0.0;
  for (int dr = -1; dr <= 1; ++dr)
    for (int dc = -1; dc <= 1; ++dc)
      acc += double(plane[(r + dr) * plane.dim(1) + (c + dc)]);
  return acc / 9.0;
}

void check_plane_pair(const DenseTensor& a, const DenseTensor& b, const char* what) {
  if (a.ndim() != 2 || !a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": plane shape mismatch");
}

}  // namespace

RegionSample extract_roi_patch(const RoiBox& roi, const DenseTensor& pre,
                               const DenseTensor& early, const DenseTensor& late_real,
                               const DenseTensor& late_gen) {
  check_plane_pair(pre, early, "extract_roi_patch");
  check_plane_pair(pre, late_real, "extract_roi_patch");
  check_plane_pair(pre, late_gen, "extract_roi_patch");
  const int H = pre.dim(0), W = pre.dim(1);
  if (roi.row0 < 0 || roi.col0 < 0 || roi.row1 > H || roi.col1 > W)
    throw std::invalid_argument("extract_roi_patch: box outside the image");
  if (roi.row1 - roi.row0 < 3 || roi.col1 - roi.col0 < 3)
    throw std::invalid_argument("extract_roi_patch: box does not admit a 3x3 patch");

  // Brightest early-phase pixel; first hit wins on ties (row-major scan).
  int best_r = roi.row0, best_c = roi.col0;
  float best_v = early[roi.row0 * W + roi.col0];
  for (int r = roi.row0; r < roi.row1; ++r)
    for (int c = roi.col0; c < roi.col1; ++c) {
      const float v = early[r * W + c];
      if (v > best_v) {
        best_v = v;
        best_r = r;
        best_c = c;
      }
    }
  const int cr = std::clamp(best_r, 1, H - 2);
  const int cc = std::clamp(best_c, 1, W - 2);

  RegionSample s;
  s.center_row = cr;
  s.center_col = cc;
  s.mean_pre = patch_mean(pre, cr, cc);
  s.mean_early = patch_mean(early, cr, cc);
  s.mean_late_real = patch_mean(late_real, cr, cc);
  s.mean_late_gen = patch_mean(late_gen, cr, cc);
  s.source = RegionSource::AnnotatedROI;
  return s;
}

std::vector<RegionSample> sample_unannotated(const DenseTensor& pre,
                                             const DenseTensor& early,
                                             const DenseTensor& late_real,
                                             const DenseTensor& late_gen,
                                             const std::vector<RoiBox>& rois, int k,
                                             uint64_t seed, bool* short_sample) {
  check_plane_pair(pre, early, "sample_unannotated");
  const int H = pre.dim(0), W = pre.dim(1);

  // 60th percentile of the pre-contrast plane (linear interpolation).
  std::vector<float> sorted(pre.data(), pre.data() + pre.numel());
  std::sort(sorted.begin(), sorted.end());
  const double pos = 0.60 * double(sorted.size() - 1);
  const size_t i0 = size_t(pos);
  const double frac = pos - double(i0);
  const double thr = double(sorted[i0]) +
                     frac * (double(sorted[std::min(i0 + 1, sorted.size() - 1)]) -
                             double(sorted[i0]));

  constexpr int kMargin = 5;
  std::vector<std::pair<int, int>> candidates;
  for (int r = kMargin; r < H - kMargin; ++r)
    for (int c = kMargin; c < W - kMargin; ++c) {
      if (!(double(pre[r * W + c]) > thr)) continue;
      bool clear = true;
      for (const auto& roi : rois)
        if (r >= roi.row0 - kMargin && r < roi.row1 + kMargin &&
            c >= roi.col0 - kMargin && c < roi.col1 + kMargin) {
          clear = false;
          break;
        }
      if (clear) candidates.emplace_back(r, c);
    }

  if (short_sample) *short_sample = int(candidates.size()) < k;
  const int take = std::min<int>(k, int(candidates.size()));
  Rng rng(seed);
  std::vector<RegionSample> out;
  for (int i = 0; i < take; ++i) {
    const size_t j = size_t(i) + size_t(rng.uniform_int(int64_t(candidates.size() - size_t(i))));
    std::swap(candidates[size_t(i)], candidates[j]);
    const auto [r, c] = candidates[size_t(i)];
    RegionSample s;
    s.center_row = r;
    s.center_col = c;
    s.mean_pre = patch_mean(pre, r, c);
    s.mean_early = patch_mean(early, r, c);
    s.mean_late_real = patch_mean(late_real, r, c);
    s.mean_late_gen = patch_mean(late_gen, r, c);
    s.source = RegionSource::Unannotated;
    out.push_back(s);
  }
  return out;
}

double eps_percent(const RegionSample& r, LateKind which) {
  if (!(r.mean_early > 0.0))
    throw std::domain_error("eps: non-positive early-phase mean");
  const double late = which == LateKind::Real ? r.mean_late_real : r.mean_late_gen;
  return 100.0 * (late - r.mean_early) / r.mean_early;
}

KineticLabel classify(double eps_value) {
  if (eps_value > 10.0) return KineticLabel::Persistent;
  if (eps_value < -10.0) return KineticLabel::Washout;
  return KineticLabel::Plateau;
}

CpScore cp_score(const std::vector<KineticLabel>& real_labels,
                 const std::vector<KineticLabel>& gen_labels) {
  if (real_labels.empty() || real_labels.size() != gen_labels.size())
    throw std::invalid_argument("cp_score: label lists must be equal-length and non-empty");
  int tp[3] = {0, 0, 0}, fp[3] = {0, 0, 0}, fn[3] = {0, 0, 0};
  int correct = 0;
  for (size_t i = 0; i < real_labels.size(); ++i) {
    const int r = int(real_labels[i]), g = int(gen_labels[i]);
    if (r == g) {
      ++tp[r];
      ++correct;
    } else {
      ++fn[r];
      ++fp[g];
    }
  }
  CpScore s;
  s.n = int(real_labels.size());
  double f1_sum = 0.0;
  int present = 0;
  for (int c = 0; c < 3; ++c) {
    if (tp[c] + fp[c] + fn[c] == 0) continue;  // class absent on both sides
    ++present;
    const double prec = tp[c] + fp[c] > 0 ? double(tp[c]) / double(tp[c] + fp[c]) : 0.0;
    const double rec = tp[c] + fn[c] > 0 ? double(tp[c]) / double(tp[c] + fn[c]) : 0.0;
    f1_sum += prec + rec > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
  }
  s.macro_f1 = present > 0 ? f1_sum / double(present) : 0.0;
  s.micro_f1 = double(correct) / double(real_labels.size());
  return s;
}

double ed(const std::vector<std::pair<double, double>>& eps_pairs) {
  if (eps_pairs.empty()) throw std::invalid_argument("ed: empty region set");
  double acc = 0.0;
  for (const auto& [a, b] : eps_pairs) acc += std::fabs(a - b);
  return acc / double(eps_pairs.size());
}

namespace {

struct Box {
  int r0, c0, r1, c1;
};

ImageMetrics metrics_on_box(const DenseTensor& real, const DenseTensor& gen,
                            const Box& b) {
  ImageMetrics m;
  const int W = real.dim(1);
  double mae = 0.0, mse = 0.0;
  double lo = double(real[b.r0 * W + b.c0]);
  double hi = lo;
  const int64_t count = int64_t(b.r1 - b.r0) * (b.c1 - b.c0);
  for (int r = b.r0; r < b.r1; ++r)
    for (int c = b.c0; c < b.c1; ++c) {
      const double rv = double(real[r * W + c]);
      const double gv = double(gen[r * W + c]);
      mae += std::fabs(rv - gv);
      mse += (rv - gv) * (rv - gv);
      lo = std::min(lo, rv);
      hi = std::max(hi, rv);
    }
  mae /= double(count);
  mse /= double(count);
  m.mae = mae;
  const double L = hi - lo;
  if (!(L > 0.0)) {
    m.degenerate = true;
    if (mse == 0.0) {
      m.psnr_infinite = true;
      m.psnr = std::numeric_limits<double>::infinity();
      m.ssim = 1.0;
    }
    return m;
  }
  if (mse == 0.0) {
    m.psnr_infinite = true;
    m.psnr = std::numeric_limits<double>::infinity();
  } else {
    m.psnr = 10.0 * std::log10(L * L / mse);
  }

  // Mean local SSIM, 11x11 Gaussian window (sigma 1.5), valid centers only.
  constexpr int kHalf = 5;
  if (b.r1 - b.r0 < 11 || b.c1 - b.c0 < 11) {
    m.degenerate = true;
    m.ssim = 0.0;
    return m;
  }
  static const std::vector<double> window = [] {
    std::vector<double> w(121);
    double sum = 0.0;
    for (int i = -kHalf; i <= kHalf; ++i)
      for (int j = -kHalf; j <= kHalf; ++j) {
        const double v = std::exp(-(i * i + j * j) / (2.0 * 1.5 * 1.5));
        w[size_t((i + kHalf) * 11 + (j + kHalf))] = v;
        sum += v;
      }
    for (auto& v : w) v /= sum;
    return w;
  }();
  const double c1 = (0.01 * L) * (0.01 * L);
  const double c2 = (0.03 * L) * (0.03 * L);
  double ssim_sum = 0.0;
  int64_t ssim_n = 0;
  for (int r = b.r0 + kHalf; r < b.r1 - kHalf; ++r)
    for (int c = b.c0 + kHalf; c < b.c1 - kHalf; ++c) {
      double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
      for (int i = -kHalf; i <= kHalf; ++i)
        for (int j = -kHalf; j <= kHalf; ++j) {
          const double w = window[size_t((i + kHalf) * 11 + (j + kHalf))];
          const double xv = double(real[(r + i) * W + (c + j)]);
          const double yv = double(gen[(r + i) * W + (c + j)]);
          mx += w * xv;
          my += w * yv;
          xx += w * xv * xv;
          yy += w * yv * yv;
          xy += w * xv * yv;
        }
      const double vx = xx - mx * mx;
      const double vy = yy - my * my;
      const double cov = xy - mx * my;
      ssim_sum += ((2 * mx * my + c1) * (2 * cov + c2)) /
                  ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++ssim_n;
    }
  m.ssim = ssim_sum / double(ssim_n);
  return m;
}

}  // namespace

ImageMetrics image_metrics(const DenseTensor& real, const DenseTensor& gen,
                           const RoiBox* roi) {
  check_plane_pair(real, gen, "image_metrics");
  Box b{0, 0, real.dim(0), real.dim(1)};
  if (roi) {
    if (roi->row0 < 0 || roi->col0 < 0 || roi->row1 > real.dim(0) ||
        roi->col1 > real.dim(1) || roi->row1 <= roi->row0 || roi->col1 <= roi->col0)
      throw std::invalid_argument("image_metrics: invalid ROI box");
    b = {roi->row0, roi->col0, roi->row1, roi->col1};
  }
  return metrics_on_box(real, gen, b);
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a,
                                    const std::vector<double>& b, double alpha) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("wilcoxon: paired samples of equal nonzero length required");
  std::vector<double> diffs;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d != 0.0) diffs.push_back(d);
  }
  WilcoxonResult res;
  res.n_used = int(diffs.size());
  if (diffs.empty()) {
    res.no_evidence = true;
    res.method = "degenerate";
    return res;
  }
  const int n = int(diffs.size());

  // Average ranks of |d|; doubling makes tied ranks integral.
  std::vector<int> idx(diffs.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = int(i);
  std::sort(idx.begin(), idx.end(), [&](int x, int y) {
    return std::fabs(diffs[size_t(x)]) < std::fabs(diffs[size_t(y)]);
  });
  std::vector<double> rank(diffs.size(), 0.0);
  std::vector<int64_t> tie_sizes;
  for (size_t i = 0; i < idx.size();) {
    size_t j = i;
    while (j + 1 < idx.size() &&
           std::fabs(diffs[size_t(idx[j + 1])]) == std::fabs(diffs[size_t(idx[i])]))
      ++j;
    const double avg = (double(i + 1) + double(j + 1)) / 2.0;
    for (size_t t = i; t <= j; ++t) rank[size_t(idx[t])] = avg;
    if (j > i) tie_sizes.push_back(int64_t(j - i + 1));
    i = j + 1;
  }
  double w_plus = 0.0, w_minus = 0.0;
  for (size_t i = 0; i < diffs.size(); ++i)
    (diffs[i] > 0 ? w_plus : w_minus) += rank[i];
  res.w_plus = w_plus;
  res.w_minus = w_minus;
  res.statistic = std::min(w_plus, w_minus);

  if (n <= 20) {
    // Exact distribution of W+ over all 2^n equally likely sign patterns,
    // with the observed (tie-averaged) ranks held fixed. Doubled ranks keep
    // the subset sums integral.
    std::vector<int64_t> r2;
    int64_t total2 = 0;
    for (double r : rank) {
      r2.push_back(llround(2.0 * r));
      total2 += r2.back();
    }
    std::vector<double> count(size_t(total2 + 1), 0.0);
    count[0] = 1.0;
    for (int64_t r : r2)
      for (int64_t s = total2; s >= r; --s)
        if (count[size_t(s - r)] > 0.0) count[size_t(s)] += count[size_t(s - r)];
    const int64_t obs2 = llround(2.0 * w_plus);
    double le = 0.0, ge = 0.0, all = 0.0;
    for (int64_t s = 0; s <= total2; ++s) {
      all += count[size_t(s)];
      if (s <= obs2) le += count[size_t(s)];
      if (s >= obs2) ge += count[size_t(s)];
    }
    res.p_value = std::min(1.0, 2.0 * std::min(le, ge) / all);
    res.method = "exact";
  } else {
    const double mean = double(n) * (n + 1) / 4.0;
    double var = double(n) * (n + 1) * (2 * n + 1) / 24.0;
    for (int64_t t : tie_sizes) var -= double(t * t * t - t) / 48.0;
    const double d = w_plus - mean;
    const double cc = d > 0 ? 0.5 : (d < 0 ? -0.5 : 0.0);  // continuity correction
    const double z = (d - cc) / std::sqrt(var);
    res.p_value = std::erfc(std::fabs(z) / std::sqrt(2.0));
    res.method = "normal";
  }
  res.rejected = res.p_value < alpha;
  return res;
}

DenseTensor heatmap(const DenseTensor& real, const DenseTensor& gen) {
  check_plane_pair(real, gen, "heatmap");
  DenseTensor out(real.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::fabs(real[i] - gen[i]);
  return out;
}

void write_pgm(const std::filesystem::path& path, const DenseTensor& plane,
               double scale_max) {
  if (plane.ndim() != 2) throw std::invalid_argument("write_pgm: expected a 2-d plane");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io::IoError(io::ErrorKind::WriteFailed, "cannot write " + path.string());
  f << "P5\n" << plane.dim(1) << " " << plane.dim(0) << "\n255\n";
  std::vector<unsigned char> bytes(size_t(plane.numel()));
  for (int64_t i = 0; i < plane.numel(); ++i) {
    double v = scale_max > 0 ? double(plane[i]) / scale_max : 0.0;
    v = std::clamp(v, 0.0, 1.0);
    bytes[size_t(i)] = (unsigned char)(std::lround(v * 255.0));
  }
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

DenseTensor read_pgm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io::IoError(io::ErrorKind::MissingFile, "cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  f >> magic >> w >> h >> maxval;
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255)
    throw io::IoError(io::ErrorKind::BadHeader, "not an 8-bit P5 PGM: " + path.string());
  f.get();  // single whitespace after maxval
  std::vector<unsigned char> bytes(size_t(w) * size_t(h));
  if (!f.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size())))
    throw io::IoError(io::ErrorKind::Truncated, "truncated PGM: " + path.string());
  DenseTensor out({h, w});
  for (size_t i = 0; i < bytes.size(); ++i) out[int64_t(i)] = float(bytes[i]);
  return out;
}

namespace {

const char* source_name(RegionSource s) {
  return s == RegionSource::AnnotatedROI ? "roi" : "unannotated";
}

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

json psnr_json(double v, bool infinite) {
  if (infinite) return json("inf");
  return json(v);
}

}  // namespace

EvalReport evaluate(const std::filesystem::path& dataset_dir,
                    const std::filesystem::path& gen_dir, const std::string& split,
                    const std::filesystem::path& out_dir, const EvalConfig& cfg) {
  const phantom::Dataset ds = phantom::read_dataset(dataset_dir);
  const auto cases = split_cases(ds, split);
  if (cases.empty())
    throw std::invalid_argument("evaluate: no cases in split '" + split + "'");

  std::ifstream mf(gen_dir / "gen_manifest.json");
  if (!mf)
    throw io::IoError(io::ErrorKind::MissingFile,
                      "missing generation manifest in " + gen_dir.string());
  const json gen_manifest = json::parse(mf);
  std::map<std::string, std::string> gen_files;
  for (const auto& e : gen_manifest.at("cases"))
    gen_files[e.at("id").get<std::string>()] = e.at("file").get<std::string>();

  std::filesystem::create_directories(out_dir / "heatmaps");

  EvalReport rep;
  rep.n_cases = int(cases.size());
  std::vector<KineticLabel> roi_real_labels, roi_gen_labels;
  std::vector<std::pair<double, double>> roi_eps, ur_eps;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> class_eps;
  double mae_full = 0, ssim_full = 0, psnr_full = 0;
  int psnr_full_n = 0;
  double mae_roi = 0, ssim_roi = 0, psnr_roi = 0;
  int psnr_roi_n = 0, roi_count = 0;
  std::vector<DenseTensor> heatmaps;
  double heat_max = 0.0;

  for (const auto* tcp : cases) {
    const phantom::CaseTriplet& tc = *tcp;
    const auto it = gen_files.find(tc.case_id);
    if (it == gen_files.end())
      throw std::invalid_argument("evaluate: no generated plane for case " + tc.case_id);
    DenseTensor gen_late = io::read_tensor(gen_dir / it->second);
    if (!gen_late.same_shape(tc.late))
      throw std::invalid_argument("evaluate: generated plane geometry mismatch for " +
                                  tc.case_id);

    DenseTensor pre = tc.pre, early = tc.early, late = tc.late;
    if (cfg.normalized_domain) {
      // Ablation view: per-image min-max rescaling before any TI metric,
      // reproducing the kinetic distortion of per-image normalization.
      pre = prep::apply_norm(pre, prep::minmax_state(pre));
      early = prep::apply_norm(early, prep::minmax_state(early));
      late = prep::apply_norm(late, prep::minmax_state(late));
      gen_late = prep::apply_norm(gen_late, prep::minmax_state(gen_late));
    }

    const ImageMetrics full = image_metrics(late, gen_late);
    mae_full += full.mae;
    ssim_full += full.ssim;
    if (full.psnr_infinite)
      ++rep.psnr_full_infinite;
    else {
      psnr_full += full.psnr;
      ++psnr_full_n;
    }

    int region_id = 0;
    for (size_t ri = 0; ri < tc.rois.size(); ++ri) {
      const RoiBox& roi = tc.rois[ri];
      RegionSample s = extract_roi_patch(roi, pre, early, late, gen_late);
      s.roi_index = int(ri);
      if (!(s.mean_early > 0.0)) continue;  // flagged: cannot form the TI ratio
      const double er = eps_percent(s, LateKind::Real);
      const double eg = eps_percent(s, LateKind::Generated);
      const KineticLabel lr = classify(er);
      const KineticLabel lg = classify(eg);
      roi_real_labels.push_back(lr);
      roi_gen_labels.push_back(lg);
      roi_eps.emplace_back(er, eg);
      auto& ce = class_eps[phantom::label_name(lr)];
      ce.first.push_back(er);
      ce.second.push_back(eg);

      const ImageMetrics rm = image_metrics(late, gen_late, &roi);
      mae_roi += rm.mae;
      ssim_roi += rm.ssim;
      if (rm.psnr_infinite)
        ++rep.psnr_roi_infinite;
      else {
        psnr_roi += rm.psnr;
        ++psnr_roi_n;
      }
      ++roi_count;

      RegionRow row;
      row.case_id = tc.case_id;
      row.region_id = region_id++;
      row.source = RegionSource::AnnotatedROI;
      row.eps_real = er;
      row.eps_gen = eg;
      row.label_real = lr;
      row.label_gen = lg;
      row.mae = rm.mae;
      row.ssim = rm.ssim;
      row.psnr = rm.psnr;
      row.psnr_infinite = rm.psnr_infinite;
      rep.rows.push_back(row);
    }

    bool short_sample = false;
    const auto ur = sample_unannotated(pre, early, late, gen_late, tc.rois,
                                       cfg.unannotated_per_case, cfg.seed ^ tc.seed,
                                       &short_sample);
    for (const auto& s : ur) {
      if (!(s.mean_early > 0.0)) continue;
      const double er = eps_percent(s, LateKind::Real);
      const double eg = eps_percent(s, LateKind::Generated);
      ur_eps.emplace_back(er, eg);
      RegionRow row;
      row.case_id = tc.case_id;
      row.region_id = region_id++;
      row.source = RegionSource::Unannotated;
      row.eps_real = er;
      row.eps_gen = eg;
      row.label_real = classify(er);
      row.label_gen = classify(eg);
      row.mae = full.mae;  // image-level metrics for unannotated rows
      row.ssim = full.ssim;
      row.psnr = full.psnr;
      row.psnr_infinite = full.psnr_infinite;
      rep.rows.push_back(row);
    }

    DenseTensor hm = heatmap(late, gen_late);
    for (int64_t i = 0; i < hm.numel(); ++i)
      heat_max = std::max(heat_max, double(hm[i]));
    heatmaps.push_back(std::move(hm));
  }

  // Heatmaps share one scale across the whole report.
  for (size_t i = 0; i < heatmaps.size(); ++i) {
    io::write_tensor(out_dir / "heatmaps" / (cases[i]->case_id + "_absdiff.bin"),
                     heatmaps[i]);
    write_pgm(out_dir / "heatmaps" / (cases[i]->case_id + "_absdiff.pgm"),
              heatmaps[i], heat_max);
  }

  const double n_cases = double(cases.size());
  rep.mae_full = mae_full / n_cases;
  rep.ssim_full = ssim_full / n_cases;
  rep.psnr_full = psnr_full_n > 0 ? psnr_full / double(psnr_full_n)
                                  : std::numeric_limits<double>::infinity();
  if (roi_count > 0) {
    rep.mae_roi = mae_roi / double(roi_count);
    rep.ssim_roi = ssim_roi / double(roi_count);
    rep.psnr_roi = psnr_roi_n > 0 ? psnr_roi / double(psnr_roi_n)
                                  : std::numeric_limits<double>::infinity();
  }
  if (!roi_real_labels.empty()) rep.cp = cp_score(roi_real_labels, roi_gen_labels);
  if (!roi_eps.empty()) rep.ed_r = ed(roi_eps);
  if (!ur_eps.empty()) {
    rep.ed_ur = ed(ur_eps);
    std::vector<double> a, b;
    for (const auto& [x, y] : ur_eps) {
      a.push_back(x);
      b.push_back(y);
    }
    rep.wilcoxon_unannotated = wilcoxon_signed_rank(a, b, cfg.alpha);
  }
  for (const auto& [name, eps_lists] : class_eps)
    rep.wilcoxon_by_class.emplace_back(
        name, wilcoxon_signed_rank(eps_lists.first, eps_lists.second, cfg.alpha));

  // report.csv
  {
    std::ofstream f(out_dir / "report.csv", std::ios::trunc);
    f << "case_id,region_id,source,eps_real,eps_gen,label_real,label_gen,mae,ssim,psnr\n";
    for (const auto& r : rep.rows) {
      f << r.case_id << "," << r.region_id << "," << source_name(r.source) << ","
        << fmt_g(r.eps_real) << "," << fmt_g(r.eps_gen) << ","
        << phantom::label_name(r.label_real) << "," << phantom::label_name(r.label_gen)
        << "," << fmt_g(r.mae) << "," << fmt_g(r.ssim) << ","
        << (r.psnr_infinite ? "inf" : fmt_g(r.psnr)) << "\n";
    }
  }
  // report.json
  {
    std::ofstream f(out_dir / "report.json", std::ios::trunc);
    f << report_to_json(rep) << "\n";
  }
  return rep;
}

namespace {

json wilcoxon_json(const WilcoxonResult& w) {
  return json{{"w_plus", w.w_plus},       {"w_minus", w.w_minus},
              {"statistic", w.statistic}, {"p_value", w.p_value},
              {"n_used", w.n_used},       {"rejected", w.rejected},
              {"no_evidence", w.no_evidence}, {"method", w.method}};
}

}  // namespace

std::string report_to_json(const EvalReport& rep) {
  json j;
  j["n_cases"] = rep.n_cases;
  j["pixel_full"] = {{"mae", rep.mae_full},
                     {"ssim", rep.ssim_full},
                     {"psnr", psnr_json(rep.psnr_full, rep.psnr_full_infinite == rep.n_cases)},
                     {"psnr_infinite_cases", rep.psnr_full_infinite}};
  j["pixel_roi"] = {{"mae", rep.mae_roi},
                    {"ssim", rep.ssim_roi},
                    {"psnr", psnr_json(rep.psnr_roi, false)},
                    {"psnr_infinite_regions", rep.psnr_roi_infinite}};
  j["ti"] = {{"cp_macro_f1", rep.cp.macro_f1},
             {"cp_micro_f1", rep.cp.micro_f1},
             {"cp_n_regions", rep.cp.n},
             {"ed_r", rep.ed_r},
             {"ed_ur", rep.ed_ur}};
  j["wilcoxon_unannotated"] = wilcoxon_json(rep.wilcoxon_unannotated);
  json by_class = json::object();
  for (const auto& [name, w] : rep.wilcoxon_by_class) by_class[name] = wilcoxon_json(w);
  j["wilcoxon_by_class"] = by_class;
  return j.dump(2);
}

}  // namespace timr::eval
