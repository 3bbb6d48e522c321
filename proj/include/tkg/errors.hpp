#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tkg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input row; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), file_(file), line_(line) {}

  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

class VocabularyError : public Error {
 public:
  using Error::Error;
};

// Caller broke an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Persisted artifact has the wrong shape or schema version.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage was requested before the stage producing its input.
class PrerequisiteError : public Error {
 public:
  PrerequisiteError(const std::string& stage, const std::string& prerequisite,
                    const std::string& missing)
      : Error("stage '" + stage + "' needs " + missing + "; run '" + prerequisite + "' first"),
        prerequisite_(prerequisite) {}

  const std::string& prerequisite() const { return prerequisite_; }

 private:
  std::string prerequisite_;
};

class TransportError : public Error {
 public:
  TransportError(const std::string& what, int attempts)
      : Error(what + " (after " + std::to_string(attempts) + " attempt" +
              (attempts == 1 ? "" : "s") + ")"),
        attempts_(attempts) {}

  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

// Backend answered, but the payload does not match the wire schema.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace tkg
