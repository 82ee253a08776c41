#include "abunet/rng.hpp"

#include "abunet/error.hpp"

#include <sstream>

namespace abunet {

std::string rng_state(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

void restore_rng_state(Rng& rng, const std::string& state) {
  std::istringstream in(state);
  in >> rng;
  if (in.fail())
    throw IoError("corrupt random engine state");
}

} // namespace abunet
