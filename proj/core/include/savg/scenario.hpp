#pragma once

#include <string>

#include "savg/errors.hpp"

namespace savg {

// Interferer type of a scene. Noise is the positive class throughout.
enum class Scenario { Noise, Speech };

inline const char* to_string(Scenario s) {
  return s == Scenario::Noise ? "noise" : "speech";
}

inline Scenario parse_scenario(const std::string& text) {
  if (text == "noise") return Scenario::Noise;
  if (text == "speech") return Scenario::Speech;
  throw InvalidInputError("unknown scenario '" + text + "' (expected noise or speech)");
}

}  // namespace savg
