#include "careflow/error.hpp"

namespace careflow {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::UnresolvableAddress: return "UnresolvableAddress";
    case ErrorCode::NoTravelData: return "NoTravelData";
    case ErrorCode::NoCaregivers: return "NoCaregivers";
    case ErrorCode::InsufficientPatients: return "InsufficientPatients";
    case ErrorCode::EmptyCluster: return "EmptyCluster";
    case ErrorCode::CentroidMissing: return "CentroidMissing";
    case ErrorCode::UndefinedForSingleCluster: return "UndefinedForSingleCluster";
    case ErrorCode::UndefinedDegenerate: return "UndefinedDegenerate";
    case ErrorCode::CoincidentCentroids: return "CoincidentCentroids";
    case ErrorCode::InvalidChromosome: return "InvalidChromosome";
    case ErrorCode::CardinalityError: return "CardinalityError";
    case ErrorCode::EmptyBaseline: return "EmptyBaseline";
    case ErrorCode::UnknownCaregiver: return "UnknownCaregiver";
    case ErrorCode::NoFeasibleAllocation: return "NoFeasibleAllocation";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::DegenerateSamples: return "DegenerateSamples";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace careflow
