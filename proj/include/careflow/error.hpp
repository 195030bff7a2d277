#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace careflow {

/// Domain failures raised by the engine. The CLI maps any DomainError to exit
/// code 1 and the HTTP layer maps the code to a status.
enum class ErrorCode {
  InvalidArgument,
  SchemaError,
  EmptyDataset,
  UnresolvableAddress,
  NoTravelData,
  NoCaregivers,
  InsufficientPatients,
  EmptyCluster,
  CentroidMissing,
  UndefinedForSingleCluster,
  UndefinedDegenerate,
  CoincidentCentroids,
  InvalidChromosome,
  CardinalityError,
  EmptyBaseline,
  UnknownCaregiver,
  NoFeasibleAllocation,
  TooLarge,
  Infeasible,
  DegenerateSamples,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

class DomainError : public std::runtime_error {
 public:
  DomainError(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace careflow
