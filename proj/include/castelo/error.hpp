#pragma once

#include <stdexcept>
#include <string>

namespace castelo {

enum class Errc {
  // input parsing
  MissingField,
  DuplicateIndex,
  NonPositiveSigma,
  NoLigandAtoms,
  NoProteinAtoms,
  AtomCountMismatch,
  MalformedFrameHeader,
  NonFiniteCoordinate,
  IoError,
  MissingArtifact,
  // domain
  EmptyLigand,
  UnknownSubtype,
  EmptySelection,
  ShapeMismatch,
  LengthMismatch,
  EmptyEnsemble,
  EmptySamples,
  KeyMismatch,
  DegenerateGeometry,
  NonFiniteActivation,
  Diverged,
  InvalidSpec,
  ConfigError,
  Internal,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::MissingField: return "MissingField";
    case Errc::DuplicateIndex: return "DuplicateIndex";
    case Errc::NonPositiveSigma: return "NonPositiveSigma";
    case Errc::NoLigandAtoms: return "NoLigandAtoms";
    case Errc::NoProteinAtoms: return "NoProteinAtoms";
    case Errc::AtomCountMismatch: return "AtomCountMismatch";
    case Errc::MalformedFrameHeader: return "MalformedFrameHeader";
    case Errc::NonFiniteCoordinate: return "NonFiniteCoordinate";
    case Errc::IoError: return "IoError";
    case Errc::MissingArtifact: return "MissingArtifact";
    case Errc::EmptyLigand: return "EmptyLigand";
    case Errc::UnknownSubtype: return "UnknownSubtype";
    case Errc::EmptySelection: return "EmptySelection";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::EmptyEnsemble: return "EmptyEnsemble";
    case Errc::EmptySamples: return "EmptySamples";
    case Errc::KeyMismatch: return "KeyMismatch";
    case Errc::DegenerateGeometry: return "DegenerateGeometry";
    case Errc::NonFiniteActivation: return "NonFiniteActivation";
    case Errc::Diverged: return "Diverged";
    case Errc::InvalidSpec: return "InvalidSpec";
    case Errc::ConfigError: return "ConfigError";
    case Errc::Internal: return "Internal";
  }
  return "Unknown";
}

// Single exception type for the whole library. `where` carries the offending
// location when one exists (atom index, frame number, epoch, ...); -1 means
// not applicable.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message, long where = -1)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code),
        where_(where) {}

  Errc code() const noexcept { return code_; }
  long where() const noexcept { return where_; }

 private:
  Errc code_;
  long where_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message, long where = -1) {
  throw Error(code, message, where);
}

// Exit-code classes used by the CLI: 1 config, 2 parse/input, 3 divergence,
// 4 internal.
inline int exit_code_for(Errc c) {
  switch (c) {
    case Errc::ConfigError:
    case Errc::InvalidSpec:
      return 1;
    case Errc::MissingField:
    case Errc::DuplicateIndex:
    case Errc::NonPositiveSigma:
    case Errc::NoLigandAtoms:
    case Errc::NoProteinAtoms:
    case Errc::AtomCountMismatch:
    case Errc::MalformedFrameHeader:
    case Errc::NonFiniteCoordinate:
    case Errc::IoError:
    case Errc::MissingArtifact:
      return 2;
    case Errc::Diverged:
    case Errc::NonFiniteActivation:
      return 3;
    default:
      return 4;
  }
}

}  // namespace castelo
