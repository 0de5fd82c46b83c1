#pragma once

#include <stdexcept>
#include <string>

namespace spdperm {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NonFiniteInput : public Error {
public:
    using Error::Error;
};

class NotPositiveDefinite : public Error {
public:
    using Error::Error;
};

class NotARotation : public Error {
public:
    using Error::Error;
};

class NonPositiveInput : public Error {
public:
    using Error::Error;
};

class EmptyInput : public Error {
public:
    using Error::Error;
};

class DegenerateMean : public Error {
public:
    using Error::Error;
};

class GroupTooSmall : public Error {
public:
    using Error::Error;
};

class BadWeights : public Error {
public:
    using Error::Error;
};

class EnumerationTooLarge : public Error {
public:
    using Error::Error;
};

class MismatchedGeometry : public Error {
public:
    using Error::Error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

}  // namespace spdperm
