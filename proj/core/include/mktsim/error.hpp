#pragma once

#include <stdexcept>
#include <string>

namespace mktsim {

// Every library failure derives from Error so callers (the CLI in
// particular) can report a single-line reason and exit nonzero.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

#define MKTSIM_DEFINE_ERROR(Name)                                              \
  class Name : public Error {                                                  \
  public:                                                                      \
    explicit Name(const std::string& what) : Error(#Name, what) {}             \
  }

MKTSIM_DEFINE_ERROR(InvalidArgument);
MKTSIM_DEFINE_ERROR(EmptySide);
MKTSIM_DEFINE_ERROR(InvalidPrice);
MKTSIM_DEFINE_ERROR(UnknownOrder);
MKTSIM_DEFINE_ERROR(DegenerateModel);
MKTSIM_DEFINE_ERROR(InsufficientData);
MKTSIM_DEFINE_ERROR(ActionOutOfBounds);
MKTSIM_DEFINE_ERROR(ShapeMismatch);
MKTSIM_DEFINE_ERROR(NumericalError);
MKTSIM_DEFINE_ERROR(ConfigError);
MKTSIM_DEFINE_ERROR(SchemaError);
MKTSIM_DEFINE_ERROR(IoError);

#undef MKTSIM_DEFINE_ERROR

} // namespace mktsim
