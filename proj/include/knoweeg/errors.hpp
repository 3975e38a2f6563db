#pragma once

#include <stdexcept>
#include <string>

namespace knoweeg {

// Base of every domain error. kind() is the stable machine-readable name
// written into the CLI error JSON.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

#define KNOWEEG_DEFINE_ERROR(Name)                                            \
  class Name : public Error {                                                 \
  public:                                                                     \
    explicit Name(const std::string& message) : Error(#Name, message) {}      \
  }

// eeg-core
KNOWEEG_DEFINE_ERROR(FormatError);
KNOWEEG_DEFINE_ERROR(LabelError);
KNOWEEG_DEFINE_ERROR(MontageError);
KNOWEEG_DEFINE_ERROR(StratifyError);
KNOWEEG_DEFINE_ERROR(SpecError);
// spectral / features / connectivity
KNOWEEG_DEFINE_ERROR(InputError);
KNOWEEG_DEFINE_ERROR(DegenerateSpectrumError);
KNOWEEG_DEFINE_ERROR(PlanError);
KNOWEEG_DEFINE_ERROR(LengthError);
KNOWEEG_DEFINE_ERROR(SegmentationError);
// forest
KNOWEEG_DEFINE_ERROR(DegenerateLabelsError);
KNOWEEG_DEFINE_ERROR(ParamError);
KNOWEEG_DEFINE_ERROR(AlignmentError);
// pipeline
KNOWEEG_DEFINE_ERROR(UndefinedMetricError);
KNOWEEG_DEFINE_ERROR(SelectionError);

#undef KNOWEEG_DEFINE_ERROR

}  // namespace knoweeg
