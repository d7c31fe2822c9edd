#pragma once

#include <stdexcept>
#include <string>

namespace p3m {

// Base of every error raised by the toolkit. The CLI maps it to exit code 1.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const noexcept { return "Error"; }
};

#define P3M_DEFINE_ERROR(Name)                                        \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& what) : Error(what) {}           \
    const char* kind() const noexcept override { return #Name; }      \
  };

P3M_DEFINE_ERROR(NotFound)
P3M_DEFINE_ERROR(FormatError)
P3M_DEFINE_ERROR(ShapeError)
P3M_DEFINE_ERROR(InvalidRatio)
P3M_DEFINE_ERROR(ConfigError)
P3M_DEFINE_ERROR(StateError)
P3M_DEFINE_ERROR(DegenerateFace)
P3M_DEFINE_ERROR(EmptyFace)
P3M_DEFINE_ERROR(EmptyTargetMask)
P3M_DEFINE_ERROR(EmptyRegion)
P3M_DEFINE_ERROR(MissingAnnotation)
P3M_DEFINE_ERROR(IndexError)
P3M_DEFINE_ERROR(DivergenceError)

#undef P3M_DEFINE_ERROR

}  // namespace p3m
