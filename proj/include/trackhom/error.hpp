#pragma once

#include <stdexcept>
#include <string>

namespace trackhom {

enum class ErrCode {
  internal,
  parse,
  validation,
  index_out_of_range,
  not_a_complex,
  no_solution,
  cyclic_quiver,
  unknown_morphism,
  unknown_cell,
  gate_not_passed,
  cyclic_support,
  too_large,
  not_composable,
  fiber_mismatch,
  infinite_category,
  truncation_too_shallow,
  not_split,
  not_a_functor,
  ill_defined_composite,
  inexact,
};

struct Error : std::runtime_error {
  ErrCode code;
  Error(ErrCode c, const std::string& what) : std::runtime_error(what), code(c) {}
};

}  // namespace trackhom
