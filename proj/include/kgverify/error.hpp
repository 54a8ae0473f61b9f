#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kgv {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. `where` is a line number ("line 12") or a JSON
/// pointer ("/gold/3/beg").
class FormatError : public Error {
 public:
  FormatError(const std::string& source, const std::string& where, const std::string& what)
      : Error(source + ": " + where + ": " + what), where_(where) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

/// A reference that does not resolve (dangling doc_id, out-of-bounds span).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Anything that went wrong talking to a chat backend.
class BackendError : public Error {
 public:
  using Error::Error;
};

class TransportError : public BackendError {
 public:
  using BackendError::BackendError;
};

class CredentialError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// A cache_only backend was asked for a response it never recorded.
class CacheMissError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// Rethrows the in-flight BackendError with `prefix` prepended, keeping its
/// concrete type. Call only from inside a catch block.
[[noreturn]] inline void rethrow_backend_error(const std::string& prefix) {
  try {
    throw;
  } catch (const CacheMissError& e) {
    throw CacheMissError(prefix + e.what());
  } catch (const CredentialError& e) {
    throw CredentialError(prefix + e.what());
  } catch (const TransportError& e) {
    throw TransportError(prefix + e.what());
  } catch (const BackendError& e) {
    throw BackendError(prefix + e.what());
  }
}

}  // namespace kgv
