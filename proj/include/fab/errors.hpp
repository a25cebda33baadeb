#pragma once

#include <stdexcept>
#include <string>

namespace fab {

// Base for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A machine profile violates its invariants.
class ProfileError : public Error {
 public:
  using Error::Error;
};

// A command argument is out of range or not finite.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// A motion target leaves the work envelope while authoring in strict mode.
class EnvelopeError : public Error {
 public:
  using Error::Error;
};

// Text input (command list, config, service message) could not be parsed.
class ParseError : public Error {
 public:
  using Error::Error;
};

// The byte transport failed to open, read or write.
class TransportError : public Error {
 public:
  using Error::Error;
};

// Link-level misuse or failure (bad state transition, handshake timeout).
class LinkError : public Error {
 public:
  using Error::Error;
};

}  // namespace fab
