#ifndef CONFENS_ERRORS_HPP
#define CONFENS_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace confens {

// Bad argument values: non-finite logits, out-of-range labels, dimension
// mismatches, inconsistent list lengths.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class EmptyTrainingSet : public std::runtime_error {
public:
    EmptyTrainingSet() : std::runtime_error("cannot train on an empty dataset") {}
};

// A SubsetView used against a dataset it was not built from.
class InvalidView : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed external data (CSV / IDX). The message names the line or record.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DegenerateSubset : public std::runtime_error {
public:
    DegenerateSubset(std::size_t level, std::size_t size, std::size_t minimum)
        : std::runtime_error("degenerate training subset at level " + std::to_string(level) + ": " +
                             std::to_string(size) + " samples selected, minimum is " +
                             std::to_string(minimum)),
          level_(level), size_(size) {}

    std::size_t level() const noexcept { return level_; }
    std::size_t size() const noexcept { return size_; }

private:
    std::size_t level_;
    std::size_t size_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Stored ensemble fails to re-validate.
class ManifestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class VersionError : public ManifestError {
public:
    using ManifestError::ManifestError;
};

class DigestError : public ManifestError {
public:
    using ManifestError::ManifestError;
};

}  // namespace confens

#endif  // CONFENS_ERRORS_HPP
