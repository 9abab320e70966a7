#pragma once

#include <stdexcept>
#include <string>

namespace pcvae {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or extent disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid model, decoder, or training configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, negative variances, non-SPD matrices.
class NumericError : public Error {
 public:
  using Error::Error;
};

class TokenizationError : public Error {
 public:
  using Error::Error;
};

// Invalid probability mass function.
class DistributionError : public Error {
 public:
  using Error::Error;
};

// Caller misuse (overlapping variable groups, upsampling requests, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed PPM, WAV, manifest, or joint-distribution file.
class FormatError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss during optimization.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace pcvae
