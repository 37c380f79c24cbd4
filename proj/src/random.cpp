#include "wahnerf/random.hpp"

#include <sstream>

#include "wahnerf/error.hpp"

namespace wah {

std::string rng_state(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void set_rng_state(Rng& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
  if (!is) throw FormatError("malformed random generator state");
}

}  // namespace wah
