#pragma once

#include <stdexcept>
#include <string>

namespace flare {

// Base for everything this library throws on contract violations.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Wrong shapes, out-of-range indices, misuse of an API.
struct ContractError : Error {
  using Error::Error;
};

// Matrix/tensor shape mismatch; message names both shapes.
struct DimensionError : ContractError {
  using ContractError::ContractError;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
  using Error::Error;
};

// Bad or mismatched checkpoint files.
struct CheckpointError : Error {
  using Error::Error;
};

// Invalid run configuration (unknown task, bad flag combination).
struct ConfigError : Error {
  using Error::Error;
};

// House generation could not satisfy its invariants.
struct GenerationError : Error {
  using Error::Error;
};

// Expert planner could not reach the goal.
struct PlannerError : Error {
  using Error::Error;
};

// Instruction has no valid target in the given house.
struct UnsatisfiableInstructionError : Error {
  using Error::Error;
};

// Decoder step fed a timestep that does not match the cache length.
struct CacheDesyncError : Error {
  using Error::Error;
};

// Malformed data file (missing CSV columns, bad JSONL record).
struct SchemaError : Error {
  using Error::Error;
};

}  // namespace flare
