#pragma once

#include <stdexcept>
#include <string>

namespace sfde {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Two delay measures (or a measure and a history) live on different windows.
class WindowMismatchError : public Error {
public:
    using Error::Error;
};

// Invalid construction argument (bad grid, singular volatility, ...).
class InvalidArgumentError : public Error {
public:
    using Error::Error;
};

// K(lambda) vanishes: lambda lies in the spectrum of the delay generator.
class ResolventPoleError : public Error {
public:
    using Error::Error;
};

// Laplace transform requested at lambda <= lambda0.
class DivergentTransformError : public Error {
public:
    using Error::Error;
};

// History does not cover the delay window [t0 - d, t0].
class CoverageError : public Error {
public:
    using Error::Error;
};

// Phi is signed, so K is not monotone and the real root is not unique.
class SignedMeasureError : public Error {
public:
    using Error::Error;
};

}  // namespace sfde
