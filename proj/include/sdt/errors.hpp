#pragma once

#include <stdexcept>
#include <string>

namespace sdt {

// File-system level failure: missing/unreadable/unwritable files, broken PNG
// streams, unwritable output directories.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Base class for everything that can go wrong with a .sdtd model file.
class ModelFileError : public std::runtime_error {
 public:
  explicit ModelFileError(const std::string& what) : std::runtime_error(what) {}
};

// The file is not an SDTD container at all (bad magic / unparseable header).
class FormatError : public ModelFileError {
 public:
  explicit FormatError(const std::string& what) : ModelFileError(what) {}
};

// The container is recognised but its version is not supported.
class VersionError : public ModelFileError {
 public:
  explicit VersionError(const std::string& what) : ModelFileError(what) {}
};

// The container is recognised but its payload is inconsistent: truncated
// blobs, manifest shapes that contradict the config, trailing garbage.
class CorruptionError : public ModelFileError {
 public:
  explicit CorruptionError(const std::string& what) : ModelFileError(what) {}
};

// The configured external OCR engine could not be launched at all.
class ExternalToolNotFound : public std::runtime_error {
 public:
  explicit ExternalToolNotFound(const std::string& what)
      : std::runtime_error(what) {}
};

// The engine launched but exited non-zero; carries captured stderr.
class ExternalToolFailure : public std::runtime_error {
 public:
  ExternalToolFailure(const std::string& what, std::string stderr_text)
      : std::runtime_error(what), stderr_text_(std::move(stderr_text)) {}
  const std::string& stderr_text() const noexcept { return stderr_text_; }

 private:
  std::string stderr_text_;
};

// An external tool produced bytes that are not valid UTF-8.
class Utf8DecodeError : public std::runtime_error {
 public:
  explicit Utf8DecodeError(const std::string& what)
      : std::runtime_error(what) {}
};

// An API was driven in the wrong order (e.g. backward() with a cache that was
// not produced by a training-mode forward()).
class InvalidStateError : public std::logic_error {
 public:
  explicit InvalidStateError(const std::string& what)
      : std::logic_error(what) {}
};

}  // namespace sdt
