#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace luskin {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data or configuration violates a precondition.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A filtered subgroup that must be non-empty came out empty.
class EmptyGroup : public Error {
 public:
  explicit EmptyGroup(std::string group)
      : Error("empty group after filtering: " + group), group_(std::move(group)) {}
  const std::string& group() const noexcept { return group_; }

 private:
  std::string group_;
};

/// Training diverged.
class NonFiniteLoss : public Error {
 public:
  explicit NonFiniteLoss(std::size_t iteration)
      : Error("non-finite loss at iteration " + std::to_string(iteration)),
        iteration_(iteration) {}
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

}  // namespace luskin
