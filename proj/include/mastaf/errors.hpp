#pragma once

#include <stdexcept>
#include <string>

namespace mastaf {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible extents between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid hyperparameter or configuration value (tau <= 0, ways < 2, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Misuse of the differentiation graph (non-scalar loss, backward on a constant, ...).
class GraphError : public Error {
 public:
  using Error::Error;
};

// Zero-norm input to a cosine distance.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Not enough classes or samples to build an episode.
class CapacityError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed .fcube payload. `kind` distinguishes the failure.
class FormatError : public Error {
 public:
  enum class Kind { kBadMagic, kBadRank, kTruncated, kNonFinite, kDimOverflow };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class ManifestError : public Error {
 public:
  enum class Kind { kSchema, kSplitOverlap, kDanglingPath };

  ManifestError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// Checkpoint does not match the model it is loaded into.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Training hit a non-finite loss; carries the step and the episode seed.
class TrainingAborted : public Error {
 public:
  TrainingAborted(const std::string& what, long step, unsigned long long episode_seed)
      : Error(what), step_(step), episode_seed_(episode_seed) {}
  long step() const noexcept { return step_; }
  unsigned long long episode_seed() const noexcept { return episode_seed_; }

 private:
  long step_;
  unsigned long long episode_seed_;
};

}  // namespace mastaf
