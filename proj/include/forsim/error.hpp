#pragma once

#include <stdexcept>
#include <string>

namespace forsim {

// Base of every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

// Carries the name of the violated invariant in what().
class ValidationError : public Error {
 public:
  using Error::Error;
};

class NoReferenceLine : public Error {
 public:
  using Error::Error;
};

class EmptyOverlap : public Error {
 public:
  using Error::Error;
};

class HorizonTooShort : public Error {
 public:
  using Error::Error;
};

class GroupTooSmall : public Error {
 public:
  using Error::Error;
};

class TooFewBranches : public Error {
 public:
  using Error::Error;
};

class DegenerateSample : public Error {
 public:
  using Error::Error;
};

class EpisodeTooShort : public Error {
 public:
  using Error::Error;
};

}  // namespace forsim
