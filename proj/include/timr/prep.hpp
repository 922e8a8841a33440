#pragma once

#include <string>

#include "timr/phantom.hpp"
#include "timr/tensor.hpp"

// Intensity normalization. All three methods are affine maps
// x' = (x - offset) / scale with an exact stored inverse; what differs is
// where the statistics come from. Min-Max and Z-score use per-image
// statistics, which rescale each acquisition independently and therefore
// distort the relationship between time points. The TI method standardizes
// every plane of a case by the pre-contrast image's mean and standard
// deviation, so intensity changes between time points survive normalization.

namespace timr::prep {

enum class NormMethod { MinMax, ZScore, TINorm };

const char* norm_name(NormMethod m);
NormMethod norm_from_name(const std::string& name);

struct NormState {
  NormMethod method = NormMethod::TINorm;
  double offset = 0.0;
  double scale = 1.0;
};

// Per-image statistics. Both throw std::domain_error on constant planes; a
// silent epsilon clamp would corrupt kinetics invisibly.
NormState minmax_state(const DenseTensor& plane);
NormState zscore_state(const DenseTensor& plane);  // population sigma
// Pre-contrast statistics applied to every plane of the case.
NormState ti_state(const DenseTensor& pre);

DenseTensor apply_norm(const DenseTensor& plane, const NormState& s);
DenseTensor invert_norm(const DenseTensor& plane, const NormState& s);

struct NormalizedTriplet {
  DenseTensor pre, early, late;
  NormState state;  // TINorm: the shared pre-contrast state
};

// TI normalization of a case: one state from the pre-contrast plane.
NormalizedTriplet ti_norm(const phantom::CaseTriplet& tc);

std::string norm_state_to_json(const NormState& s);
NormState norm_state_from_json(const std::string& s);

}  // namespace timr::prep
