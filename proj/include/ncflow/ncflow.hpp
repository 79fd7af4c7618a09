#pragma once

#include "summation.hpp"
#include "moebius.hpp"
#include "linalg.hpp"
#include "flows.hpp"
#include "matrix_dynamics.hpp"
#include "car_fock.hpp"
#include "free_words.hpp"
#include "sieve_cache.hpp"

namespace ncflow {
inline constexpr const char* kVersion = "0.1.0";
}
