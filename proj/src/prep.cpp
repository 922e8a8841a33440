#include "timr/prep.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace timr::prep {

using nlohmann::json;

const char* norm_name(NormMethod m) {
  switch (m) {
    case NormMethod::MinMax: return "minmax";
    case NormMethod::ZScore: return "zscore";
    case NormMethod::TINorm: return "tinorm";
  }
  return "?";
}

NormMethod norm_from_name(const std::string& name) {
  if (name == "minmax") return NormMethod::MinMax;
  if (name == "zscore") return NormMethod::ZScore;
  if (name == "tinorm") return NormMethod::TINorm;
  throw std::invalid_argument("unknown normalization method: " + name);
}

namespace {

void mean_sd(const DenseTensor& plane, double& mean, double& sd) {
  double acc = 0.0;
  for (int64_t i = 0; i < plane.numel(); ++i) acc += double(plane[i]);
  mean = acc / double(plane.numel());
  double var = 0.0;
  for (int64_t i = 0; i < plane.numel(); ++i) {
    const double d = double(plane[i]) - mean;
    var += d * d;
  }
  sd = std::sqrt(var / double(plane.numel()));
}

}  // namespace

NormState minmax_state(const DenseTensor& plane) {
  float lo = plane[0], hi = plane[0];
  for (int64_t i = 1; i < plane.numel(); ++i) {
    lo = std::min(lo, plane[i]);
    hi = std::max(hi, plane[i]);
  }
  if (!(hi > lo))
    throw std::domain_error("minmax_norm: constant plane has no dynamic range");
  return {NormMethod::MinMax, double(lo), double(hi) - double(lo)};
}

NormState zscore_state(const DenseTensor& plane) {
  double mean, sd;
  mean_sd(plane, mean, sd);
  if (!(sd > 0.0))
    throw std::domain_error("zscore_norm: constant plane has zero deviation");
  return {NormMethod::ZScore, mean, sd};
}

NormState ti_state(const DenseTensor& pre) {
  double mean, sd;
  mean_sd(pre, mean, sd);
  if (!(sd > 0.0))
    throw std::domain_error("ti_norm: degenerate constant pre-contrast plane");
  return {NormMethod::TINorm, mean, sd};
}

DenseTensor apply_norm(const DenseTensor& plane, const NormState& s) {
  DenseTensor out(plane.shape());
  const float off = float(s.offset), inv = float(1.0 / s.scale);
  for (int64_t i = 0; i < plane.numel(); ++i) out[i] = (plane[i] - off) * inv;
  return out;
}

DenseTensor invert_norm(const DenseTensor& plane, const NormState& s) {
  DenseTensor out(plane.shape());
  const float off = float(s.offset), sc = float(s.scale);
  for (int64_t i = 0; i < plane.numel(); ++i)
    out[i] = std::fma(plane[i], sc, off);
  return out;
}

NormalizedTriplet ti_norm(const phantom::CaseTriplet& tc) {
  NormalizedTriplet out;
  out.state = ti_state(tc.pre);
  out.pre = apply_norm(tc.pre, out.state);
  out.early = apply_norm(tc.early, out.state);
  out.late = apply_norm(tc.late, out.state);
  return out;
}

std::string norm_state_to_json(const NormState& s) {
  return json{{"method", norm_name(s.method)}, {"offset", s.offset}, {"scale", s.scale}}
      .dump();
}

NormState norm_state_from_json(const std::string& s) {
  const json j = json::parse(s);
  return {norm_from_name(j.at("method").get<std::string>()),
          j.at("offset").get<double>(), j.at("scale").get<double>()};
}

}  // namespace timr::prep
