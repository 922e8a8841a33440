#include "timr/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "timr/io.hpp"
#include "timr/rng.hpp"

namespace timr::phantom {

using nlohmann::json;

const char* label_name(KineticLabel l) {
  switch (l) {
    case KineticLabel::Persistent: return "persistent";
    case KineticLabel::Plateau: return "plateau";
    case KineticLabel::Washout: return "washout";
  }
  return "?";
}

KineticLabel label_from_name(const std::string& name) {
  if (name == "persistent") return KineticLabel::Persistent;
  if (name == "plateau") return KineticLabel::Plateau;
  if (name == "washout") return KineticLabel::Washout;
  throw std::invalid_argument("unknown kinetic label: " + name);
}

void PhantomConfig::validate() const {
  if (n_cases < 0) throw std::invalid_argument("phantom: n_cases must be >= 0");
  if (height < 32 || width < 32)
    throw std::invalid_argument("phantom: extents must be >= 32");
  if (lesions_per_case < 0)
    throw std::invalid_argument("phantom: lesions_per_case must be >= 0");
  const double mix = label_mix[0] + label_mix[1] + label_mix[2];
  if (std::fabs(mix - 1.0) > 1e-9 || label_mix[0] < 0 || label_mix[1] < 0 ||
      label_mix[2] < 0)
    throw std::invalid_argument("phantom: label_mix must be nonnegative and sum to 1");
  if (noise_sd < 0) throw std::invalid_argument("phantom: noise_sd must be >= 0");
  if (gain_jitter < 0 || gain_jitter >= 1)
    throw std::invalid_argument("phantom: gain_jitter must be in [0, 1)");
}

namespace {

constexpr double kTissueLevel = 120.0;
constexpr double kDarkFloor = 5.0;
constexpr double kTextureAmp = 0.10;
constexpr double kEpsBackground = 2.0;   // percent, tissue late enhancement
constexpr double kEpsFieldAmp = 1.5;     // percent, unlearnable spatial wobble

struct WaveField {
  struct Wave {
    double ax, ay, phase;
  };
  std::vector<Wave> waves;
  double amp = 0.0;

  static WaveField sample(Rng& rng, int n, double amp, double min_cycles,
                          double max_cycles, int h, int w) {
    WaveField f;
    f.amp = amp;
    for (int i = 0; i < n; ++i) {
      const double cycles = rng.uniform(min_cycles, max_cycles);
      const double theta = rng.uniform(0.0, 6.283185307179586);
      f.waves.push_back({cycles * 6.283185307179586 * std::cos(theta) / double(w),
                         cycles * 6.283185307179586 * std::sin(theta) / double(h),
                         rng.uniform(0.0, 6.283185307179586)});
    }
    return f;
  }

  double at(int r, int c) const {
    double acc = 0.0;
    for (const auto& wv : waves)
      acc += std::sin(wv.ax * double(c) + wv.ay * double(r) + wv.phase);
    return amp * acc / double(waves.size());
  }
};

double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

struct Lesion {
  int row, col;
  double sigma_r, sigma_c;
};

double blob(const Lesion& l, int r, int c) {
  const double dr = (double(r) - double(l.row)) / l.sigma_r;
  const double dc = (double(c) - double(l.col)) / l.sigma_c;
  return std::exp(-0.5 * (dr * dr + dc * dc));
}

double core_mean(const DenseTensor& plane, int r, int c) {
  double acc = 0.0;
  for (int dr = -1; dr <= 1; ++dr)
    for (int dc = -1; dc <= 1; ++dc) acc += double(plane[(r + dr) * plane.dim(1) + (c + dc)]);
  return acc / 9.0;
}

double core_mean_blob(const Lesion& l) {
  double acc = 0.0;
  for (int dr = -1; dr <= 1; ++dr)
    for (int dc = -1; dc <= 1; ++dc) acc += blob(l, l.row + dr, l.col + dc);
  return acc / 9.0;
}

void add_blob(DenseTensor& plane, const Lesion& l, double amplitude) {
  const int H = plane.dim(0), W = plane.dim(1);
  const int r0 = std::max(0, l.row - int(std::ceil(4 * l.sigma_r)));
  const int r1 = std::min(H - 1, l.row + int(std::ceil(4 * l.sigma_r)));
  const int c0 = std::max(0, l.col - int(std::ceil(4 * l.sigma_c)));
  const int c1 = std::min(W - 1, l.col + int(std::ceil(4 * l.sigma_c)));
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c)
      plane[r * W + c] = float(double(plane[r * W + c]) + amplitude * blob(l, r, c));
}

// Monotone map from early wash-in to target late enhancement. Aggressive
// wash-in goes with washout, mild wash-in with persistent rise; each class
// band keeps a margin from the +-10% boundaries.
double washin_to_eps(KineticLabel label, double washin, Rng& rng) {
  auto lerp = [](double x, double x0, double x1, double y0, double y1) {
    return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
  };
  switch (label) {
    case KineticLabel::Persistent:
      return std::clamp(lerp(washin, 0.50, 0.70, 60.0, 15.0) + rng.uniform(-3, 3),
                        15.0, 60.0);
    case KineticLabel::Plateau:
      return std::clamp(lerp(washin, 0.80, 1.00, 8.0, -8.0) + rng.uniform(-1.5, 1.5),
                        -8.0, 8.0);
    case KineticLabel::Washout:
      return std::clamp(lerp(washin, 1.10, 1.35, -15.0, -45.0) + rng.uniform(-3, 3),
                        -45.0, -15.0);
  }
  return 0.0;
}

CaseTriplet generate_case(const PhantomConfig& cfg, int case_index) {
  const int H = cfg.height, W = cfg.width;
  const uint64_t case_seed = cfg.seed ^ uint64_t(case_index);
  Rng rng(case_seed);

  CaseTriplet tc;
  tc.case_id = cfg.id_prefix + "_" + std::to_string(case_index);
  tc.seed = case_seed;
  tc.pre = DenseTensor({H, W});
  tc.early = DenseTensor({H, W});
  tc.late = DenseTensor({H, W});

  const double gain = rng.uniform(1.0 - cfg.gain_jitter, 1.0 + cfg.gain_jitter);
  const double cy = H * rng.uniform(0.46, 0.54);
  const double cx = W * rng.uniform(0.46, 0.54);
  const double ry = H * rng.uniform(0.30, 0.38);
  const double rx = W * rng.uniform(0.32, 0.42);
  const auto texture = WaveField::sample(rng, 6, kTextureAmp, 1.5, 5.0, H, W);
  const auto eps_field = WaveField::sample(rng, 3, kEpsFieldAmp, 1.0, 3.0, H, W);
  const double wash_bg = rng.uniform(0.22, 0.28);

  std::vector<double> profile(size_t(H) * W);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      const double u = (double(r) - cy) / ry;
      const double v = (double(c) - cx) / rx;
      const double rad = std::sqrt(u * u + v * v);
      const double prof = 1.0 - smoothstep(0.82, 1.0, rad);
      profile[size_t(r) * W + c] = prof;
      const double pre_v =
          gain * (kDarkFloor + (kTissueLevel * (1.0 + texture.at(r, c)) - kDarkFloor) * prof);
      const double early_v = pre_v * (1.0 + wash_bg * prof);
      const double late_v =
          early_v * (1.0 + (kEpsBackground + eps_field.at(r, c)) / 100.0 * prof);
      tc.pre[r * W + c] = float(pre_v);
      tc.early[r * W + c] = float(early_v);
      tc.late[r * W + c] = float(late_v);
    }

  // Lesion placement: inside the tissue, 2-sigma boxes inside the image and
  // pairwise disjoint with a 4 px margin (disjoint boxes keep each ROI's
  // intensity peak on its own lesion).
  std::vector<Lesion> lesions;
  for (int li = 0; li < cfg.lesions_per_case; ++li) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      Lesion l;
      l.sigma_c = rng.uniform(3.0, 5.0);
      l.sigma_r = l.sigma_c * rng.uniform(0.85, 1.18);
      l.row = int(std::floor(cy + (2.0 * rng.uniform() - 1.0) * 0.68 * ry));
      l.col = int(std::floor(cx + (2.0 * rng.uniform() - 1.0) * 0.68 * rx));
      const double u = (double(l.row) - cy) / ry;
      const double v = (double(l.col) - cx) / rx;
      if (std::sqrt(u * u + v * v) > 0.68) continue;
      const int hr = int(std::ceil(2.0 * l.sigma_r));
      const int hc = int(std::ceil(2.0 * l.sigma_c));
      if (l.row - hr < 1 || l.row + hr >= H - 1 || l.col - hc < 1 || l.col + hc >= W - 1)
        continue;
      bool clear = true;
      for (const auto& o : lesions) {
        const int ohr = int(std::ceil(2.0 * o.sigma_r));
        const int ohc = int(std::ceil(2.0 * o.sigma_c));
        const bool rows_overlap = std::abs(l.row - o.row) <= hr + ohr + 4;
        const bool cols_overlap = std::abs(l.col - o.col) <= hc + ohc + 4;
        if (rows_overlap && cols_overlap) clear = false;
      }
      if (!clear) continue;
      lesions.push_back(l);
      placed = true;
    }
    if (!placed)
      throw std::invalid_argument(
          "phantom: could not place lesion " + std::to_string(li) + " in case " +
          tc.case_id + "; config is degenerate for this geometry");
  }

  for (const auto& l : lesions) {
    const double u = rng.uniform();
    KineticLabel label;
    if (u < cfg.label_mix[0])
      label = KineticLabel::Persistent;
    else if (u < cfg.label_mix[0] + cfg.label_mix[1])
      label = KineticLabel::Plateau;
    else
      label = KineticLabel::Washout;

    double washin = 0.0;
    switch (label) {
      case KineticLabel::Persistent: washin = rng.uniform(0.50, 0.70); break;
      case KineticLabel::Plateau: washin = rng.uniform(0.80, 1.00); break;
      case KineticLabel::Washout: washin = rng.uniform(1.10, 1.35); break;
    }
    const double target_eps = washin_to_eps(label, washin, rng);

    const double g_core = core_mean_blob(l);
    const double m_pre = core_mean(tc.pre, l.row, l.col);
    const double m_early_bg = core_mean(tc.early, l.row, l.col);
    const double amp_early = ((1.0 + washin) * m_pre - m_early_bg) / g_core;
    add_blob(tc.early, l, amp_early);
    const double m_early = core_mean(tc.early, l.row, l.col);
    const double m_late_bg = core_mean(tc.late, l.row, l.col);
    const double amp_late = ((1.0 + target_eps / 100.0) * m_early - m_late_bg) / g_core;
    add_blob(tc.late, l, amp_late);

    RoiBox box;
    const int hr = int(std::ceil(2.0 * l.sigma_r));
    const int hc = int(std::ceil(2.0 * l.sigma_c));
    box.row0 = l.row - hr;
    box.row1 = l.row + hr + 1;
    box.col0 = l.col - hc;
    box.col1 = l.col + hc + 1;
    box.true_label = label;
    // Realized noise-free core enhancement; matches target by construction.
    box.true_eps = 100.0 * (core_mean(tc.late, l.row, l.col) - m_early) / m_early;
    tc.rois.push_back(box);
  }

  if (cfg.noise_sd > 0) {
    for (int64_t i = 0; i < tc.pre.numel(); ++i) {
      tc.pre[i] = float(double(tc.pre[i]) + rng.normal(0.0, cfg.noise_sd));
      tc.early[i] = float(double(tc.early[i]) + rng.normal(0.0, cfg.noise_sd));
      tc.late[i] = float(double(tc.late[i]) + rng.normal(0.0, cfg.noise_sd));
    }
  }
  for (int64_t i = 0; i < tc.pre.numel(); ++i) {
    tc.pre[i] = std::max(tc.pre[i], 0.5f);
    tc.early[i] = std::max(tc.early[i], 0.01f);
    tc.late[i] = std::max(tc.late[i], 0.01f);
  }
  return tc;
}

}  // namespace

std::vector<CaseTriplet> generate_phantom(const PhantomConfig& cfg) {
  cfg.validate();
  std::vector<CaseTriplet> cases;
  cases.reserve(size_t(cfg.n_cases));
  for (int i = 0; i < cfg.n_cases; ++i)
    cases.push_back(generate_case(cfg, cfg.first_case_index + i));
  return cases;
}

namespace {

json roi_to_json(const RoiBox& r) {
  return json{{"row0", r.row0}, {"col0", r.col0}, {"row1", r.row1},
              {"col1", r.col1}, {"true_label", label_name(r.true_label)},
              {"true_eps", r.true_eps}};
}

RoiBox roi_from_json(const json& j) {
  RoiBox r;
  r.row0 = j.at("row0").get<int>();
  r.col0 = j.at("col0").get<int>();
  r.row1 = j.at("row1").get<int>();
  r.col1 = j.at("col1").get<int>();
  r.true_label = label_from_name(j.at("true_label").get<std::string>());
  r.true_eps = j.at("true_eps").get<double>();
  return r;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  if (ds.split.size() != ds.cases.size())
    throw std::invalid_argument("write_dataset: split list must match cases");
  std::filesystem::create_directories(dir / "cases");
  json manifest;
  manifest["format_version"] = 1;
  manifest["config"] = ds.config_echo_json.empty() ? json(nullptr)
                                                   : json::parse(ds.config_echo_json);
  json entries = json::array();
  for (size_t i = 0; i < ds.cases.size(); ++i) {
    const auto& tc = ds.cases[i];
    const auto cdir = dir / "cases" / tc.case_id;
    std::filesystem::create_directories(cdir);
    io::write_tensor(cdir / "pre.bin", tc.pre);
    io::write_tensor(cdir / "early.bin", tc.early);
    io::write_tensor(cdir / "late.bin", tc.late);
    json sidecar;
    sidecar["case_id"] = tc.case_id;
    sidecar["seed"] = tc.seed;
    json rois = json::array();
    for (const auto& r : tc.rois) rois.push_back(roi_to_json(r));
    sidecar["rois"] = rois;
    std::ofstream f(cdir / "case.json", std::ios::trunc);
    if (!f) throw io::IoError(io::ErrorKind::WriteFailed,
                              "cannot write sidecar for " + tc.case_id);
    f << sidecar.dump(2) << "\n";
    entries.push_back(json{{"id", tc.case_id}, {"split", ds.split[i]}, {"seed", tc.seed}});
  }
  manifest["cases"] = entries;
  std::ofstream f(dir / "manifest.json", std::ios::trunc);
  if (!f) throw io::IoError(io::ErrorKind::WriteFailed,
                            "cannot write manifest in " + dir.string());
  f << manifest.dump(2) << "\n";
}

Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw io::IoError(io::ErrorKind::MissingFile,
                             "missing manifest: " + (dir / "manifest.json").string());
  json manifest = json::parse(mf);
  Dataset ds;
  if (!manifest.at("config").is_null()) ds.config_echo_json = manifest["config"].dump();
  for (const auto& entry : manifest.at("cases")) {
    CaseTriplet tc;
    tc.case_id = entry.at("id").get<std::string>();
    const auto cdir = dir / "cases" / tc.case_id;
    tc.pre = io::read_tensor(cdir / "pre.bin");
    tc.early = io::read_tensor(cdir / "early.bin");
    tc.late = io::read_tensor(cdir / "late.bin");
    std::ifstream sf(cdir / "case.json");
    if (!sf) throw io::IoError(io::ErrorKind::MissingFile,
                               "missing sidecar: " + (cdir / "case.json").string());
    json sidecar = json::parse(sf);
    tc.seed = sidecar.at("seed").get<uint64_t>();
    for (const auto& rj : sidecar.at("rois")) tc.rois.push_back(roi_from_json(rj));
    if (!tc.pre.same_shape(tc.early) || !tc.pre.same_shape(tc.late))
      throw io::IoError(io::ErrorKind::BadHeader,
                        "plane geometry mismatch in case " + tc.case_id);
    ds.cases.push_back(std::move(tc));
    ds.split.push_back(entry.at("split").get<std::string>());
  }
  return ds;
}

std::vector<const CaseTriplet*> split_cases(const Dataset& ds, const std::string& split) {
  std::vector<const CaseTriplet*> out;
  for (size_t i = 0; i < ds.cases.size(); ++i)
    if (ds.split[i] == split) out.push_back(&ds.cases[i]);
  return out;
}

}  // namespace timr::phantom
