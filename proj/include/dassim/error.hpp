#pragma once

#include <stdexcept>
#include <string>

namespace dassim {

// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotPositiveDefinite : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class NanEncountered : public Error {
public:
    using Error::Error;
};

class SequenceLengthMismatch : public Error {
public:
    using Error::Error;
};

class ZeroReference : public Error {
public:
    using Error::Error;
};

class UnknownParameter : public Error {
public:
    using Error::Error;
};

class TypeMismatch : public Error {
public:
    using Error::Error;
};

class ModelFormatError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require_dims(bool ok, const std::string& what) {
    if (!ok) throw DimensionMismatch(what);
}

}  // namespace detail

}  // namespace dassim
