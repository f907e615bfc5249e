// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hallucam {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Scene file header is malformed or lacks a required property.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Payload ended early; offset is the byte position of the first incomplete record.
class TruncationError : public Error {
public:
    TruncationError(const std::string &msg, std::size_t offset) : Error(msg), mOffset(offset) {}
    std::size_t offset() const noexcept { return mOffset; }

private:
    std::size_t mOffset;
};

/// A parsed value violated a data invariant; index names the offending record.
class DataError : public Error {
public:
    DataError(const std::string &msg, std::size_t index) : Error(msg), mIndex(index) {}
    std::size_t index() const noexcept { return mIndex; }

private:
    std::size_t mIndex;
};

class ProtocolError : public Error {
public:
    using Error::Error;
};

class LengthError : public Error {
public:
    using Error::Error;
};

class DegeneracyError : public Error {
public:
    using Error::Error;
};

/// Not enough samples/events/pairs to compute a result.
class InsufficientDataError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace hallucam
