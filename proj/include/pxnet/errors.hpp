#pragma once

#include <stdexcept>
#include <string>

namespace pxnet {

// Base for every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Precondition violated by the caller (bad index, wrong length, bad config).
class DomainError : public Error {
public:
    using Error::Error;
};

// Malformed or inconsistent input data (CSV content, labels, duplicates).
class DataError : public Error {
public:
    using Error::Error;
};

// Numerical failure inside an algorithm.
class NumericError : public Error {
public:
    using Error::Error;
};

class NotPositiveDefiniteError : public NumericError {
public:
    using NumericError::NumericError;
};

class RankError : public NumericError {
public:
    using NumericError::NumericError;
};

class SeparationError : public NumericError {
public:
    using NumericError::NumericError;
};

// Estimation cannot proceed (degenerate missingness, empty subsample, divergence).
class EstimationError : public NumericError {
public:
    using NumericError::NumericError;
};

}  // namespace pxnet
