#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace compat {

// Base of every error raised by the library. The CLI maps the concrete
// subclasses onto stable exit codes (see tools/commands.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text. Carries the byte offset of the failure.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : Error(what + " (at byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}

  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

// Well-formed input that violates a structural invariant (duplicate ids,
// shape mismatch, stale cache, ...).
class StructuralError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

// Binary file layout problems (bad magic, truncation, dim mismatch).
class FormatError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ModelError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

// A self-check (gradient check, oracle comparison) did not hold.
class VerificationError : public Error {
 public:
  using Error::Error;
};

// Re-raises the in-flight exception as the same library type with `prefix`
// prepended to its message. Must be called from inside a catch block.
[[noreturn]] inline void rethrow_with_context(const std::string& prefix) {
  try {
    throw;
  } catch (const ParseError& e) {
    throw ParseError(prefix + e.what(), e.byte_offset());
  } catch (const StructuralError& e) {
    throw StructuralError(prefix + e.what());
  } catch (const ArgumentError& e) {
    throw ArgumentError(prefix + e.what());
  } catch (const SamplingError& e) {
    throw SamplingError(prefix + e.what());
  } catch (const DatasetError& e) {
    throw DatasetError(prefix + e.what());
  } catch (const FormatError& e) {
    throw FormatError(prefix + e.what());
  } catch (const LookupError& e) {
    throw LookupError(prefix + e.what());
  } catch (const NumericError& e) {
    throw NumericError(prefix + e.what());
  } catch (const ModelError& e) {
    throw ModelError(prefix + e.what());
  } catch (const IoError& e) {
    throw IoError(prefix + e.what());
  } catch (const SchemaError& e) {
    throw SchemaError(prefix + e.what());
  } catch (const VerificationError& e) {
    throw VerificationError(prefix + e.what());
  } catch (const Error& e) {
    throw Error(prefix + e.what());
  }
}

}  // namespace compat
