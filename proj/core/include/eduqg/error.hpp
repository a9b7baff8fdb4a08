#pragma once

#include <stdexcept>
#include <string>

namespace eduqg {

/// Base for every error the library raises. Callers that only care about
/// "something went wrong in eduqg" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable or unwritable file.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Input document does not match the expected schema. The message carries
/// a JSON path (e.g. `$.data[0].paragraphs[2].qas`) pointing at the failure.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value (model, training, decoding, experiment).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input is well-formed but violates an operation's precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Training diverged or could not proceed.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace eduqg
